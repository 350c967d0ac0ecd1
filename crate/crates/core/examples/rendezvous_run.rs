//! A single private rendezvous run with a decaying schedule.
//!
//! With `p > 1` the gradient weights are summable, so the average settles at
//! a noise-dependent floor rather than at `x*`.

use dpgt::engine::{run, InitialState, SimConfig};
use dpgt::objectives::ObjectiveSet;
use dpgt::randomness::{NoiseParams, Schedule};
use dpgt::topology::WeightMatrix;

fn main() -> dpgt::Result<()> {
    let targets = vec![vec![1.0, -2.0], vec![4.0, 0.5], vec![-3.0, 2.0], vec![0.0, 3.5]];
    let obj = ObjectiveSet::rendezvous(targets)?;
    let wm = WeightMatrix::ring(0.3, 0.5)?;
    let config = SimConfig {
        schedule: Schedule { alpha: 0.06, gamma: 2.0, p: 1.1, q: 0.05, m: 1.0 },
        noise: NoiseParams { b_eta: 0.05, b_xi: 0.05 },
        horizon: 500,
        seed: 7,
        clip: true,
        init: InitialState::UniformBox,
    };
    let traj = run(&config, &wm, &obj)?;
    println!("x* = {:?}", obj.x_star);
    for rec in traj.records.iter().step_by(100) {
        println!(
            "k = {:>3}  opt {:.4e}  cons {:.4e}  track {:.4e}",
            rec.k, rec.opt_err, rec.cons_err, rec.track_err
        );
    }
    println!("final average = {:?}", traj.xbar.last().unwrap());
    Ok(())
}
