//! The noisy gradient-tracking iteration and its error trajectories.
//!
//! With `W_o` the off-diagonal part of `W`, one step reads
//!
//! ```text
//! s_{k+1} = W s_k + β_k W_o η_k + γ_k ∇F(x_k)
//! x_{k+1} = W x_k + β_k W_o ξ_k − α (s_{k+1} − s_k)
//! ```
//!
//! Each agent mixes its neighbours' noisy messages with its own exact state,
//! which is why only `W_o` multiplies the noise. `y_k = s_{k+1} − s_k` is
//! derived rather than stored.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{clip_gradient, ObjectiveSet};
use crate::randomness::{Channel, NoiseParams, NoiseStreams, Schedule, SHARED_RUN};
use crate::topology::WeightMatrix;

/// How the initial decision matrix `x_0` is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// Rows uniform in the objective's domain box, drawn from a run-independent
    /// stream so every Monte Carlo trial starts from the same point.
    #[default]
    UniformBox,
    /// Every agent starts at `x_star`.
    Optimum,
    /// Explicit n×r rows.
    Explicit(Vec<Vec<f64>>),
}

/// Engine-level settings for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub schedule: Schedule,
    pub noise: NoiseParams,
    /// Number of iterations `K`; trajectories hold `K + 1` records.
    pub horizon: usize,
    pub seed: u64,
    pub clip: bool,
    #[serde(default)]
    pub init: InitialState,
}

/// Decision and tracker matrices at iteration `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgoState {
    pub x: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub k: usize,
}

impl AlgoState {
    /// `x_0` as given, `s_0 = 0`.
    pub fn new(x0: DMatrix<f64>) -> Self {
        let s = DMatrix::zeros(x0.nrows(), x0.ncols());
        Self { x: x0, s, k: 0 }
    }
}

/// Everything produced by one step from iteration `k`.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// State at iteration `k + 1`.
    pub next: AlgoState,
    /// `y_k = s_{k+1} − s_k`.
    pub y: DMatrix<f64>,
    /// `∇F(x_k)` after optional clipping, before scaling by `γ_k`.
    pub grad: DMatrix<f64>,
    /// Unscaled tracker noise `η_k`.
    pub eta: DMatrix<f64>,
    /// Unscaled decision noise `ξ_k`.
    pub xi: DMatrix<f64>,
    pub gamma_k: f64,
    pub beta_k: f64,
}

/// Bundles a coupling matrix, objectives and settings for repeated stepping.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    pub wm: &'a WeightMatrix,
    pub obj: &'a ObjectiveSet,
    pub config: &'a SimConfig,
    wo: DMatrix<f64>,
}

impl<'a> Simulator<'a> {
    pub fn new(config: &'a SimConfig, wm: &'a WeightMatrix, obj: &'a ObjectiveSet) -> Result<Self> {
        if wm.n() != obj.n {
            return Err(Error::DimensionMismatch(format!(
                "weight matrix has {} agents, objectives have {}",
                wm.n(),
                obj.n
            )));
        }
        config.schedule.validate()?;
        if !(config.noise.b_eta >= 0.0 && config.noise.b_xi >= 0.0) {
            return Err(Error::OutOfRange {
                name: "noise scale",
                value: config.noise.b_eta.min(config.noise.b_xi),
                expected: "b_eta >= 0 and b_xi >= 0",
            });
        }
        if config.horizon == 0 {
            return Err(Error::OutOfRange {
                name: "horizon",
                value: 0.0,
                expected: "K >= 1",
            });
        }
        Ok(Self {
            wm,
            obj,
            config,
            wo: wm.off_diagonal(),
        })
    }

    pub fn initial_state(&self) -> Result<AlgoState> {
        let (n, r) = (self.obj.n, self.obj.r);
        let x0 = match &self.config.init {
            InitialState::UniformBox => {
                let mut streams = NoiseStreams::new(self.config.seed, SHARED_RUN, n, r);
                let mut u = vec![0.0; n * r];
                streams.uniform_block(0, Channel::Init, &mut u);
                let b = &self.obj.domain_box;
                DMatrix::from_fn(n, r, |i, j| b.lo[j] + (b.hi[j] - b.lo[j]) * u[i * r + j])
            }
            InitialState::Optimum => DMatrix::from_fn(n, r, |_, j| self.obj.x_star[j]),
            InitialState::Explicit(rows) => {
                if rows.len() != n || rows.iter().any(|row| row.len() != r) {
                    return Err(Error::DimensionMismatch(format!(
                        "initial state must be {n}x{r}"
                    )));
                }
                DMatrix::from_fn(n, r, |i, j| rows[i][j])
            }
        };
        Ok(AlgoState::new(x0))
    }

    /// Stacked gradients at `x`, clipped per agent when enabled.
    pub fn gradients(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut g = self.obj.grad_matrix(x);
        if self.config.clip {
            for i in 0..g.nrows() {
                let row: Vec<f64> = g.row(i).iter().copied().collect();
                let clipped = clip_gradient(&row, self.obj.c_bound);
                for (j, v) in clipped.into_iter().enumerate() {
                    g[(i, j)] = v;
                }
            }
        }
        g
    }

    /// One iteration from `state`, noise drawn from `streams`.
    pub fn step(&self, state: &AlgoState, streams: &mut NoiseStreams) -> Result<StepOutcome> {
        let (n, r) = (self.obj.n, self.obj.r);
        if state.x.shape() != (n, r) || state.s.shape() != (n, r) {
            return Err(Error::DimensionMismatch(format!(
                "state must be {n}x{r}, got x {:?} and s {:?}",
                state.x.shape(),
                state.s.shape()
            )));
        }
        let k = state.k;
        let sched = &self.config.schedule;
        let gamma_k = sched.gamma_at(k);
        let beta_k = sched.beta_at(k);
        let w = self.wm.matrix();
        let grad = self.gradients(&state.x);
        let eta = self.noise_block(streams, self.config.noise.b_eta, k, Channel::Eta);
        let xi = self.noise_block(streams, self.config.noise.b_xi, k, Channel::Xi);

        let mut s_next = w * &state.s + &grad * gamma_k;
        if self.config.noise.b_eta > 0.0 {
            s_next += (&self.wo * &eta) * beta_k;
        }
        let y = &s_next - &state.s;
        let mut x_next = w * &state.x - &y * sched.alpha;
        if self.config.noise.b_xi > 0.0 {
            x_next += (&self.wo * &xi) * beta_k;
        }
        Ok(StepOutcome {
            next: AlgoState {
                x: x_next,
                s: s_next,
                k: k + 1,
            },
            y,
            grad,
            eta,
            xi,
            gamma_k,
            beta_k,
        })
    }

    fn noise_block(&self, streams: &mut NoiseStreams, b: f64, k: usize, ch: Channel) -> DMatrix<f64> {
        let (n, r) = (self.obj.n, self.obj.r);
        if b == 0.0 {
            return DMatrix::zeros(n, r);
        }
        let mut buf = vec![0.0; n * r];
        streams.laplace_block(b, k, ch, &mut buf);
        DMatrix::from_row_slice(n, r, &buf)
    }

    /// Runs `K + 1` steps using noise stream `run_id`, recording `x_k` and
    /// `y_k` for `k = 0..=K`.
    pub fn run_with_id(&self, run_id: u64) -> Result<Trajectory> {
        let mut streams = NoiseStreams::new(self.config.seed, run_id, self.obj.n, self.obj.r);
        let mut state = self.initial_state()?;
        let mut traj = Trajectory::with_capacity(self.config.horizon + 1);
        for _ in 0..=self.config.horizon {
            let out = self.step(&state, &mut streams)?;
            traj.push(&state, &out, &self.obj.x_star);
            state = out.next;
        }
        Ok(traj)
    }
}

/// Errors at one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub k: usize,
    /// `‖x̄_k − x*‖²`.
    pub opt_err: f64,
    /// `‖x_k − 1x̄_k‖²`.
    pub cons_err: f64,
    /// `‖y_k − 1ȳ_k‖²`.
    pub track_err: f64,
    pub gamma_k: f64,
    pub beta_k: f64,
}

/// Per-iteration error records plus the network average `x̄_k`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub xbar: Vec<Vec<f64>>,
}

impl Trajectory {
    fn with_capacity(cap: usize) -> Self {
        Self {
            records: Vec::with_capacity(cap),
            xbar: Vec::with_capacity(cap),
        }
    }

    fn push(&mut self, state: &AlgoState, out: &StepOutcome, x_star: &[f64]) {
        let (xbar, cons_err) = mean_and_spread(&state.x);
        let (_, track_err) = mean_and_spread(&out.y);
        let opt_err = xbar.iter().zip(x_star).map(|(a, b)| (a - b).powi(2)).sum();
        self.records.push(Record {
            k: state.k,
            opt_err,
            cons_err,
            track_err,
            gamma_k: out.gamma_k,
            beta_k: out.beta_k,
        });
        self.xbar.push(xbar);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn opt_err(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.opt_err).collect()
    }

    pub fn cons_err(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cons_err).collect()
    }

    pub fn track_err(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.track_err).collect()
    }

    /// CSV with columns `k, opt_err, cons_err, track_err, gamma_k, beta_k`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "opt_err", "cons_err", "track_err", "gamma_k", "beta_k"])?;
        for r in &self.records {
            w.write_record([
                r.k.to_string(),
                full_precision(r.opt_err),
                full_precision(r.cons_err),
                full_precision(r.track_err),
                full_precision(r.gamma_k),
                full_precision(r.beta_k),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads a trajectory CSV; `x̄` is not stored in the file and is left empty.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Config(format!("{}: missing column `{name}`", path.display())))
        };
        let idx = [
            col("k")?,
            col("opt_err")?,
            col("cons_err")?,
            col("track_err")?,
            col("gamma_k")?,
            col("beta_k")?,
        ];
        let mut traj = Trajectory::default();
        for row in rdr.records() {
            let row = row?;
            let num = |i: usize| -> Result<f64> {
                row[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
            };
            traj.records.push(Record {
                k: num(idx[0])? as usize,
                opt_err: num(idx[1])?,
                cons_err: num(idx[2])?,
                track_err: num(idx[3])?,
                gamma_k: num(idx[4])?,
                beta_k: num(idx[5])?,
            });
        }
        Ok(traj)
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn full_precision(x: f64) -> String {
    format!("{x:.16e}")
}

/// Column means of an n×r matrix and `‖M − 1 mean‖²`.
fn mean_and_spread(m: &DMatrix<f64>) -> (Vec<f64>, f64) {
    let n = m.nrows() as f64;
    let means: Vec<f64> = m.column_iter().map(|c| c.sum() / n).collect();
    let spread = m
        .column_iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|v| (v - mu).powi(2)).sum::<f64>())
        .sum();
    (means, spread)
}

/// Single run on noise stream 0.
pub fn run(config: &SimConfig, wm: &WeightMatrix, obj: &ObjectiveSet) -> Result<Trajectory> {
    Simulator::new(config, wm, obj)?.run_with_id(0)
}

/// Trial-averaged trajectory with standard errors and the per-trial store.
#[derive(Debug, Clone)]
pub struct MonteCarlo {
    /// Element-wise means; `x̄` is averaged too.
    pub mean: Trajectory,
    /// Standard errors of `[opt_err, cons_err, track_err]` per iteration.
    pub std_err: Vec<[f64; 3]>,
    pub trials: Vec<Trajectory>,
}

/// Runs `trials` independent trials in parallel; trial `t` uses stream `t`.
pub fn monte_carlo(
    config: &SimConfig,
    wm: &WeightMatrix,
    obj: &ObjectiveSet,
    trials: usize,
) -> Result<MonteCarlo> {
    if trials == 0 {
        return Err(Error::OutOfRange {
            name: "trials",
            value: 0.0,
            expected: "trials >= 1",
        });
    }
    let sim = Simulator::new(config, wm, obj)?;
    let runs: Vec<Trajectory> = (0..trials as u64)
        .into_par_iter()
        .map(|t| sim.run_with_id(t))
        .collect::<Result<_>>()?;
    Ok(aggregate(runs))
}

fn aggregate(trials: Vec<Trajectory>) -> MonteCarlo {
    let len = trials[0].len();
    let t = trials.len() as f64;
    let r = trials[0].xbar.first().map_or(0, Vec::len);
    let mut mean = Trajectory::with_capacity(len);
    let mut std_err = Vec::with_capacity(len);
    for k in 0..len {
        let values = |tr: &Trajectory| {
            let rec = &tr.records[k];
            [rec.opt_err, rec.cons_err, rec.track_err]
        };
        let mut sums = [0.0; 3];
        let mut xbar = vec![0.0; r];
        for tr in &trials {
            for (s, v) in sums.iter_mut().zip(values(tr)) {
                *s += v;
            }
            for (a, b) in xbar.iter_mut().zip(&tr.xbar[k]) {
                *a += b / t;
            }
        }
        let means = sums.map(|s| s / t);
        let mut sq = [0.0; 3];
        for tr in &trials {
            for ((q, v), m) in sq.iter_mut().zip(values(tr)).zip(means) {
                *q += (v - m) * (v - m);
            }
        }
        let se = if trials.len() > 1 {
            sq.map(|q| (q / (t - 1.0) / t).sqrt())
        } else {
            [0.0; 3]
        };
        let first = &trials[0].records[k];
        mean.records.push(Record {
            k: first.k,
            opt_err: means[0],
            cons_err: means[1],
            track_err: means[2],
            gamma_k: first.gamma_k,
            beta_k: first.beta_k,
        });
        mean.xbar.push(xbar);
        std_err.push(se);
    }
    MonteCarlo {
        mean,
        std_err,
        trials,
    }
}

/// Expected `[opt_err, cons_err, track_err]` at `k = 0` given `s_0 = 0`.
///
/// `x_0` is deterministic, and `y_0 = γ_0∇F(x_0) + β_0W_oη_0`, so the tracking
/// term adds `2b_η²·r·‖(I − 11ᵀ/n)W_o‖²` of noise to the deterministic part.
pub fn expected_initial_errors(
    config: &SimConfig,
    wm: &WeightMatrix,
    obj: &ObjectiveSet,
) -> Result<[f64; 3]> {
    let sim = Simulator::new(config, wm, obj)?;
    let state = sim.initial_state()?;
    let (xbar, cons) = mean_and_spread(&state.x);
    let opt: f64 = xbar.iter().zip(&obj.x_star).map(|(a, b)| (a - b).powi(2)).sum();
    let g = sim.gradients(&state.x) * config.schedule.gamma_at(0);
    let (_, det) = mean_and_spread(&g);
    let wo = wm.off_diagonal();
    let n = wm.n() as f64;
    let centered_wo = DMatrix::from_fn(wo.nrows(), wo.ncols(), |i, j| {
        wo[(i, j)] - wo.column(j).sum() / n
    });
    let beta0 = config.schedule.beta_at(0);
    let b = config.noise.b_eta;
    let noise = beta0 * beta0 * 2.0 * b * b * obj.r as f64 * centered_wo.norm_squared();
    Ok([opt, cons, det + noise])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(alpha: f64, noise: NoiseParams, horizon: usize) -> SimConfig {
        SimConfig {
            schedule: Schedule::constant(alpha),
            noise,
            horizon,
            seed: 1,
            clip: false,
            init: InitialState::UniformBox,
        }
    }

    #[test]
    fn identical_targets_fixed_point() {
        let obj = ObjectiveSet::rendezvous(vec![vec![3.0, -1.0]; 4]).unwrap();
        let wm = WeightMatrix::ring(0.25, 0.5).unwrap();
        let c = SimConfig {
            init: InitialState::Optimum,
            ..cfg(0.1, NoiseParams::zero(), 5)
        };
        let sim = Simulator::new(&c, &wm, &obj).unwrap();
        let s0 = sim.initial_state().unwrap();
        let mut streams = NoiseStreams::new(1, 0, 4, 2);
        let out = sim.step(&s0, &mut streams).unwrap();
        assert_eq!(out.next.x, s0.x);
        assert!(out.next.s.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn two_agent_hand_step() {
        let obj = ObjectiveSet::rendezvous(vec![vec![0.0], vec![2.0]]).unwrap();
        let wm = WeightMatrix::averaging(2).unwrap();
        let c = SimConfig {
            init: InitialState::Explicit(vec![vec![0.0], vec![2.0]]),
            ..cfg(0.1, NoiseParams::zero(), 1)
        };
        let sim = Simulator::new(&c, &wm, &obj).unwrap();
        let mut streams = NoiseStreams::new(1, 0, 2, 1);
        let out = sim.step(&sim.initial_state().unwrap(), &mut streams).unwrap();
        assert_eq!(out.next.s.as_slice(), &[0.0, 0.0]);
        assert_eq!(out.next.x.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let obj = ObjectiveSet::rendezvous(vec![vec![0.0], vec![2.0]]).unwrap();
        let wm = WeightMatrix::averaging(2).unwrap();
        let c = cfg(0.1, NoiseParams::zero(), 1);
        let sim = Simulator::new(&c, &wm, &obj).unwrap();
        let bad = AlgoState::new(DMatrix::zeros(3, 1));
        let mut streams = NoiseStreams::new(1, 0, 2, 1);
        assert!(matches!(sim.step(&bad, &mut streams), Err(Error::DimensionMismatch(_))));
        let wm4 = WeightMatrix::averaging(4).unwrap();
        assert!(Simulator::new(&c, &wm4, &obj).is_err());
    }

    #[test]
    fn runs_are_deterministic_and_sized() {
        let obj = ObjectiveSet::ridge(4, 2, 0.1, 3).unwrap();
        let wm = WeightMatrix::ring(0.3, 0.5).unwrap();
        let c = cfg(0.001, NoiseParams { b_eta: 0.1, b_xi: 0.1 }, 50);
        let a = run(&c, &wm, &obj).unwrap();
        let b = run(&c, &wm, &obj).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 51);
        assert!(a.records.iter().all(|r| r.opt_err >= 0.0 && r.cons_err >= 0.0 && r.track_err >= 0.0));
    }

    #[test]
    fn single_trial_monte_carlo_equals_run() {
        let obj = ObjectiveSet::ridge(4, 2, 0.1, 3).unwrap();
        let wm = WeightMatrix::ring(0.3, 0.5).unwrap();
        let c = cfg(0.001, NoiseParams { b_eta: 0.1, b_xi: 0.1 }, 30);
        let mc = monte_carlo(&c, &wm, &obj, 1).unwrap();
        assert_eq!(mc.mean, run(&c, &wm, &obj).unwrap());
    }

    #[test]
    fn zero_noise_trials_identical() {
        let obj = ObjectiveSet::ridge(4, 2, 0.1, 3).unwrap();
        let wm = WeightMatrix::ring(0.3, 0.5).unwrap();
        let c = cfg(0.001, NoiseParams::zero(), 30);
        let mc = monte_carlo(&c, &wm, &obj, 50).unwrap();
        assert!(mc.trials.iter().all(|t| *t == mc.trials[0]));
        for (se, rec) in mc.std_err.iter().zip(&mc.mean.records) {
            assert!(se[0] <= 1e-14 * rec.opt_err && se[1] <= 1e-14 * rec.cons_err);
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let obj = ObjectiveSet::ridge(4, 2, 0.1, 3).unwrap();
        let wm = WeightMatrix::ring(0.3, 0.5).unwrap();
        let c = cfg(0.001, NoiseParams { b_eta: 0.1, b_xi: 0.2 }, 20);
        let t = run(&c, &wm, &obj).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        t.save_csv(&path).unwrap();
        let back = Trajectory::read_csv(&path).unwrap();
        assert_eq!(back.records, t.records);
    }
}
