//! Spectral quantities of the four-agent ring coupling matrix.

use dpgt::topology::{power_iteration_radius, WeightMatrix};

fn main() -> dpgt::Result<()> {
    println!("{:>5} {:>5} {:>8} {:>8} {:>10}", "r", "d", "rho_w", "rho_wo", "power-it");
    for &r in &[0.1, 0.3, 0.5] {
        for &d in &[0.2, 0.5, 0.8] {
            let wm = WeightMatrix::ring(r, d)?;
            let sp = wm.spectral_profile();
            let check = power_iteration_radius(&wm.deviation(), 10_000, 1e-14);
            println!("{r:>5} {d:>5} {:>8.4} {:>8.4} {:>10.4}", sp.rho_w, sp.rho_wo, check);
        }
    }

    // A ring with a prescribed spectrum, as used by coupling sweeps.
    let wm = WeightMatrix::ring_with_spectrum(0.3, 0.9)?;
    let sp = wm.spectral_profile();
    println!("\nring_with_spectrum(0.3, 0.9): rho_wo = {:.6}, rho_w = {:.6}", sp.rho_wo, sp.rho_w);
    println!("{}", wm.to_json());
    Ok(())
}
