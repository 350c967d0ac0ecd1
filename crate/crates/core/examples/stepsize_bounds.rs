//! Stepsize bounds, their binding arms, and the prior bound they improve on.

use dpgt::bounds::{
    cor1_stepsize_bound, prior_stepsize_bound, thm1_case1_bound, thm3_stepsize_bound, thm4_stepsize_bound,
    ProblemConstants, StepsizeBound,
};
use dpgt::objectives::ObjectiveSet;
use dpgt::randomness::NoiseParams;
use dpgt::topology::WeightMatrix;

fn show(name: &str, b: &StepsizeBound) {
    println!("{name:<10} {:.4e}  (binding: {})", b.value, b.binding);
}

fn main() -> dpgt::Result<()> {
    let wm = WeightMatrix::ring(0.3, 0.5)?;
    for seed in 0..3 {
        let obj = ObjectiveSet::ridge(4, 2, 0.1, seed)?;
        let pc = ProblemConstants::from_instance(&wm, &obj, &NoiseParams::zero());
        println!("ridge seed {seed}: mu = {:.3}, L = {:.3}, rho_w = {:.3}", pc.mu, pc.ell, pc.rho_w);
        let cor1 = cor1_stepsize_bound(&pc);
        let prior = prior_stepsize_bound(&pc);
        show("geometric", &cor1);
        show("prior", &prior);
        show("decaying", &thm1_case1_bound(&pc));
        show("constant", &thm3_stepsize_bound(&pc));
        show("coupling", &thm4_stepsize_bound(&pc));
        println!("improvement factor {:.1}\n", cor1.value / prior.value);
    }
    Ok(())
}
