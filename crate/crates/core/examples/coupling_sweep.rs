//! How the steady-state error depends on the coupling spectrum.

use dpgt::bounds::{monotonicity_probe, ProblemConstants};
use dpgt::objectives::ObjectiveSet;
use dpgt::randomness::NoiseParams;
use dpgt::topology::WeightMatrix;

fn main() -> dpgt::Result<()> {
    let obj = ObjectiveSet::ridge(4, 2, 0.5, 4)?;
    let noise = NoiseParams::from_variances(0.01, 0.01, obj.n, obj.r);
    let mut template = ProblemConstants::from_instance(&WeightMatrix::ring(0.3, 0.5)?, &obj, &noise);
    template.mu = 0.01;
    template.ell = 0.02;

    let wo_axis: Vec<(f64, f64)> = [0.15, 0.2, 0.3, 0.4, 0.5].iter().map(|&b| (0.9, b)).collect();
    let w_axis: Vec<(f64, f64)> = [0.75, 0.8, 0.85, 0.9, 0.95].iter().map(|&a| (a, 0.3)).collect();
    for (label, grid) in [("rho_wo axis", wo_axis), ("rho_w axis", w_axis)] {
        println!("{label}");
        for row in monotonicity_probe(&template, 0.01, &grid)? {
            println!(
                "  rho_w {:.2} rho_wo {:.2}  theta {:.5e}  d/drho_w {:+}  d/drho_wo {:+}",
                row.rho_w, row.rho_wo, row.theta, row.fd_sign_rhow, row.fd_sign_rhowo
            );
        }
    }
    Ok(())
}
