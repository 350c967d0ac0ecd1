//! Monte Carlo averages on a synthetic ridge-regression instance, compared
//! with the constant-stepsize steady-state bound.

use dpgt::analysis::tail_mean;
use dpgt::bounds::{steady_state_error, thm3_stepsize_bound, thm3_system, ProblemConstants};
use dpgt::engine::{monte_carlo, InitialState, SimConfig};
use dpgt::objectives::ObjectiveSet;
use dpgt::randomness::{NoiseParams, Schedule};
use dpgt::topology::WeightMatrix;

fn main() -> dpgt::Result<()> {
    let obj = ObjectiveSet::ridge(4, 2, 0.5, 4)?;
    let wm = WeightMatrix::ring(0.3, 0.5)?;
    let noise = NoiseParams::from_variances(0.01, 0.01, obj.n, obj.r);
    let pc = ProblemConstants::from_instance(&wm, &obj, &noise);
    let alpha = 0.5 * thm3_stepsize_bound(&pc).value;
    println!("alpha = {alpha:.4e} (half the constant-stepsize bound)");
    let config = SimConfig {
        schedule: Schedule::constant(alpha),
        noise,
        horizon: 20_000,
        seed: 11,
        clip: false,
        init: InitialState::UniformBox,
    };
    let mc = monte_carlo(&config, &wm, &obj, 50)?;
    let last = mc.mean.records.last().unwrap();
    let se = mc.std_err.last().unwrap();
    println!("after {} iterations, 50 trials:", last.k);
    println!("  opt  {:.4e} +- {:.1e}", last.opt_err, se[0]);
    println!("  cons {:.4e} +- {:.1e}", last.cons_err, se[1]);
    let n = obj.n as f64;
    let total: Vec<f64> = mc.mean.records.iter().map(|r| n * r.opt_err + r.cons_err).collect();
    println!("  total-error plateau {:.4e}", tail_mean(&total, 0.3));

    match thm3_system(&pc, alpha).and_then(|bs| steady_state_error(&bs, pc.n)) {
        Ok(ss) => println!("steady-state bound theta = {:.4e}", ss.theta),
        Err(e) => println!("no steady-state bound at alpha = {alpha}: {e}"),
    }
    Ok(())
}
