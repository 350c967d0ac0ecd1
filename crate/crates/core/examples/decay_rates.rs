//! Fitted decay exponents of the Monte Carlo errors under a decaying
//! noise schedule, against the regime predicted for the stepsizes.

use dpgt::analysis::{fit_decay_exponent, DEFAULT_BURN_IN};
use dpgt::bounds::{thm1_stepsize_check, ProblemConstants};
use dpgt::engine::{monte_carlo, InitialState, SimConfig};
use dpgt::objectives::ObjectiveSet;
use dpgt::randomness::{NoiseParams, Schedule};
use dpgt::topology::WeightMatrix;

fn main() -> dpgt::Result<()> {
    let obj = ObjectiveSet::rendezvous(vec![vec![1.0, -2.0], vec![4.0, 0.5], vec![-3.0, 2.0], vec![0.0, 3.5]])?;
    let wm = WeightMatrix::ring(0.3, 0.5)?;
    let noise = NoiseParams { b_eta: 1.0, b_xi: 1.0 };
    let schedule = Schedule { alpha: 0.004, gamma: 1.0, p: 0.0, q: 0.3, m: 1.0 };
    let config = SimConfig {
        schedule,
        noise,
        horizon: 20_000,
        seed: 3,
        clip: false,
        init: InitialState::UniformBox,
    };
    let mc = monte_carlo(&config, &wm, &obj, 50)?;
    let pc = ProblemConstants::from_instance(&wm, &obj, &noise);
    let check = thm1_stepsize_check(&pc, schedule.p, schedule.q, schedule.alpha, schedule.gamma)?;
    println!("regime {:?}, predicted exponents {:?}", check.case, check.exponents);
    for (name, errors) in [
        ("opt", mc.mean.opt_err()),
        ("cons", mc.mean.cons_err()),
        ("track", mc.mean.track_err()),
    ] {
        let fit = fit_decay_exponent(&errors, schedule.m, DEFAULT_BURN_IN)?;
        println!("{name:<5} slope {:+.3} +- {:.3}", fit.slope, fit.slope_stderr);
    }
    Ok(())
}
