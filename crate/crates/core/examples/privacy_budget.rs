//! Finite- and infinite-horizon privacy budgets and noise calibration.

use dpgt::objectives::ObjectiveSet;
use dpgt::privacy::{budget, budget_trajectory, calibrate_noise, Horizon, PrivacyQuery};
use dpgt::randomness::{NoiseParams, Schedule};
use dpgt::topology::WeightMatrix;

fn main() -> dpgt::Result<()> {
    let obj = ObjectiveSet::rendezvous(vec![vec![1.0, -2.0], vec![4.0, 0.5], vec![-3.0, 2.0], vec![0.0, 3.5]])?;
    let wm = WeightMatrix::ring(0.3, 0.5)?;
    let query = |horizon, schedule| PrivacyQuery {
        horizon,
        schedule,
        c_grad: obj.c_bound,
        r: obj.r,
        w_diag: wm.diagonal(),
    };
    let slow = Schedule { alpha: 0.06, gamma: 2.0, p: 1.1, q: 0.05, m: 1.0 };
    let unit = NoiseParams { b_eta: 1.0, b_xi: 1.0 };

    let eps = budget_trajectory(&query(Horizon::Finite(500), slow), &unit, 500)?;
    for k in [1, 10, 100, 500] {
        println!("unit noise, K = {k:>3}: eps = {:.3}", eps[k - 1]);
    }

    let cal = calibrate_noise(1.0, 0.5, &query(Horizon::Finite(500), slow))?;
    println!(
        "eps = 1 over 500 iterations needs b_eta = {:.3}, b_xi = {:.3}",
        cal.noise.b_eta, cal.noise.b_xi
    );

    let fast = Schedule { alpha: 0.06, gamma: 1.0, p: 3.5, q: 0.5, m: 1.0 };
    let report = budget(&query(Horizon::Infinite, fast), &unit)?;
    println!("p = 3.5, q = 0.5, unit noise: infinite-horizon eps = {:.3}", report.eps);
    match budget(&query(Horizon::Infinite, slow), &unit) {
        Ok(r) => println!("unexpected finite budget {}", r.eps),
        Err(e) => println!("p = 1.1, q = 0.05 infinite horizon: {e}"),
    }
    Ok(())
}
