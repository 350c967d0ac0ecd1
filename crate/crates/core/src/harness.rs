//! Configuration-driven experiment harness behind the `dpgt` binary.
//!
//! A run is described by one TOML file (or by the `meta.json` of an earlier
//! run, which embeds the full configuration):
//!
//! ```toml
//! horizon = 500
//! trials = 50
//! seed = 7
//! clip = false
//! output_dir = "out/ridge"
//!
//! [problem.ridge]
//! n = 4
//! r = 2
//! rho_pen = 0.1
//! seed = 7
//!
//! [topology.ring]
//! r = 0.3
//! d = 0.5
//!
//! [schedule]
//! alpha = 0.01
//! gamma = 1.0
//! p = 0.0
//! q = 0.0
//! m = 1.0
//!
//! [noise.variance]
//! sigma_eta_sq = 0.01
//! sigma_xi_sq = 0.01
//! ```
//!
//! Every numeric parameter is explicit. Subcommands validate the whole
//! configuration and finish all computation before writing any file.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::{fit_decay_exponent, LinearFit, DEFAULT_BURN_IN};
use crate::bounds::{
    closed_form_theta, cor1_stepsize_bound, monotonicity_probe, prior_stepsize_bound, steady_state_error,
    thm1_case1_bound, thm1_stepsize_check, thm3_stepsize_bound, thm3_system, thm4_stepsize_bound, BoundSystem,
    ProbeRow, ProblemConstants, SteadyState, StepsizeBound, Thm1Check,
};
use crate::engine::{monte_carlo, InitialState, SimConfig, Trajectory};
use crate::error::{Error, Result};
use crate::objectives::ObjectiveSet;
use crate::privacy::{budget, calibrate_noise, Calibration, Horizon, PrivacyQuery, PrivacyReport};
use crate::randomness::{NoiseParams, Schedule};
use crate::topology::WeightMatrix;

/// Exit status for configuration and input errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status when an analytic hypothesis fails (e.g. a divergent budget).
pub const EXIT_HYPOTHESIS: i32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Rendezvous { targets: Vec<Vec<f64>> },
    Ridge { n: usize, r: usize, rho_pen: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    Ring { r: f64, d: f64 },
    Matrix { rows: Vec<Vec<f64>> },
    Averaging { n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    /// Laplace scales directly (zero disables a channel).
    Scale { b_eta: f64, b_xi: f64 },
    /// Matrix second moments `σ²`, converted with `b = √(σ²/(2nr))`.
    Variance { sigma_eta_sq: f64, sigma_xi_sq: f64 },
    /// Scales that spend `eps` over `k` iterations (default: the run horizon)
    /// or over an infinite horizon.
    Calibrate {
        eps: f64,
        split: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<usize>,
        #[serde(default)]
        infinite: bool,
    },
}

/// Grid for the `sweep` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepGrid {
    /// Explicit `(ρ_w, ρ(W_o))` pairs.
    Points { points: Vec<[f64; 2]> },
    /// Cartesian product of the two axes.
    Axes { rho_w: Vec<f64>, rho_wo: Vec<f64> },
    /// Four-agent rings at fixed `r` over a list of `d` values.
    Ring { r: f64, d: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub alpha: f64,
    pub grid: SweepGrid,
    /// Overrides of the instance's strong-convexity and smoothness constants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub topology: TopologySpec,
    pub schedule: Schedule,
    pub noise: NoiseSpec,
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    pub clip: bool,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub init: InitialState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Loads a TOML config, or the `config` member of a `meta.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let inner = value.get("config").cloned().unwrap_or(value);
            serde_json::from_value(inner).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        } else {
            Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        }
    }
}

/// A configuration resolved into concrete objects.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: RunConfig,
    pub wm: WeightMatrix,
    pub obj: ObjectiveSet,
    pub noise: NoiseParams,
    pub calibration: Option<Calibration>,
    pub sim: SimConfig,
}

fn config_err(e: Error) -> Error {
    match e {
        Error::HypothesisViolated(_) | Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl Experiment {
    pub fn resolve(config: &RunConfig) -> Result<Self> {
        let obj = match &config.problem {
            ProblemSpec::Rendezvous { targets } => ObjectiveSet::rendezvous(targets.clone()),
            ProblemSpec::Ridge { n, r, rho_pen, seed } => ObjectiveSet::ridge(*n, *r, *rho_pen, *seed),
        }
        .map_err(|e| Error::Config(format!("problem: {e}")))?;
        let wm = match &config.topology {
            TopologySpec::Ring { r, d } => WeightMatrix::ring(*r, *d),
            TopologySpec::Matrix { rows } => WeightMatrix::from_rows(rows),
            TopologySpec::Averaging { n } => WeightMatrix::averaging(*n),
        }
        .map_err(|e| Error::Config(format!("topology: {e}")))?;
        if wm.n() != obj.n {
            return Err(Error::Config(format!(
                "topology has {} agents but the problem has {}",
                wm.n(),
                obj.n
            )));
        }
        config
            .schedule
            .validate()
            .map_err(|e| Error::Config(format!("schedule: {e}")))?;
        if config.horizon == 0 {
            return Err(Error::Config("horizon: must be at least 1".into()));
        }
        if config.trials == 0 {
            return Err(Error::Config("trials: must be at least 1".into()));
        }
        let (noise, calibration) = match &config.noise {
            NoiseSpec::Scale { b_eta, b_xi } => {
                if !(*b_eta >= 0.0 && *b_xi >= 0.0) {
                    return Err(Error::Config("noise.scale: scales must be nonnegative".into()));
                }
                (NoiseParams { b_eta: *b_eta, b_xi: *b_xi }, None)
            }
            NoiseSpec::Variance { sigma_eta_sq, sigma_xi_sq } => {
                if !(*sigma_eta_sq >= 0.0 && *sigma_xi_sq >= 0.0) {
                    return Err(Error::Config("noise.variance: variances must be nonnegative".into()));
                }
                (NoiseParams::from_variances(*sigma_eta_sq, *sigma_xi_sq, obj.n, obj.r), None)
            }
            NoiseSpec::Calibrate { eps, split, k, infinite } => {
                let horizon = if *infinite {
                    Horizon::Infinite
                } else {
                    Horizon::Finite(k.unwrap_or(config.horizon))
                };
                let query = privacy_query(config, &wm, &obj, horizon);
                let cal = calibrate_noise(*eps, *split, &query).map_err(config_err)?;
                (cal.noise, Some(cal))
            }
        };
        let sim = SimConfig {
            schedule: config.schedule,
            noise,
            horizon: config.horizon,
            seed: config.seed,
            clip: config.clip,
            init: config.init.clone(),
        };
        Ok(Self {
            config: config.clone(),
            wm,
            obj,
            noise,
            calibration,
            sim,
        })
    }

    pub fn constants(&self) -> ProblemConstants {
        ProblemConstants::from_instance(&self.wm, &self.obj, &self.noise)
    }

    pub fn privacy_query(&self, horizon: Horizon) -> PrivacyQuery {
        privacy_query(&self.config, &self.wm, &self.obj, horizon)
    }
}

fn privacy_query(config: &RunConfig, wm: &WeightMatrix, obj: &ObjectiveSet, horizon: Horizon) -> PrivacyQuery {
    PrivacyQuery {
        horizon,
        schedule: config.schedule,
        c_grad: obj.c_bound,
        r: obj.r,
        w_diag: wm.diagonal(),
    }
}

/// Replay metadata written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    pub master_seed: u64,
    /// Noise stream ids used by the trials (`0..trials`).
    pub run_ids: std::ops::Range<u64>,
    pub noise: NoiseParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
    pub wall_time_seconds: f64,
}

fn meta(command: &str, exp: &Experiment, started: Instant) -> Meta {
    Meta {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: exp.config.clone(),
        master_seed: exp.config.seed,
        run_ids: 0..exp.config.trials as u64,
        noise: exp.noise,
        calibration: exp.calibration,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    }
}

/// Files to write, kept in memory until all computation has succeeded.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.add(name, serde_json::to_vec_pretty(value)?);
        Ok(())
    }

    /// Refuses to overwrite any of `inputs`, then writes everything.
    fn commit(self, inputs: &[&Path]) -> Result<Vec<PathBuf>> {
        let guarded: Vec<PathBuf> = inputs.iter().filter_map(|p| p.canonicalize().ok()).collect();
        for (name, _) in &self.files {
            let target = self.dir.join(name);
            if let Ok(t) = target.canonicalize() {
                if guarded.contains(&t) {
                    return Err(Error::Config(format!(
                        "output {} would overwrite an input file; choose another output directory",
                        target.display()
                    )));
                }
            }
        }
        std::fs::create_dir_all(&self.dir)?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in self.files {
            let path = self.dir.join(name);
            std::fs::write(&path, bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn trajectory_bytes(t: &Trajectory) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    t.write_csv(&mut buf)?;
    Ok(buf)
}

/// Final-iteration errors of the trial mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalErrors {
    pub k: usize,
    pub opt_err: f64,
    pub cons_err: f64,
    pub track_err: f64,
}

/// Printed summary of `run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub trials: usize,
    pub final_errors: FinalErrors,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_prediction: Option<Thm1Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steady_state: Option<SteadyState>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub privacy: Option<PrivacySummary>,
    pub notes: Vec<String>,
    pub files_written: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacySummary {
    pub eps: f64,
    pub worst_agent: usize,
    pub horizon: Horizon,
}

pub fn cmd_run(config: &RunConfig, config_path: Option<&Path>) -> Result<RunSummary> {
    let started = Instant::now();
    let exp = Experiment::resolve(config)?;
    let mc = monte_carlo(&exp.sim, &exp.wm, &exp.obj, config.trials)?;
    let pc = exp.constants();
    let sched = config.schedule;
    let mut notes = Vec::new();
    let decay_prediction = match thm1_stepsize_check(&pc, sched.p, sched.q, sched.alpha, sched.gamma) {
        Ok(c) => Some(c),
        Err(Error::NoCaseMatches { p, q }) => {
            notes.push(format!("no polynomial decay regime covers p = {p}, q = {q}"));
            None
        }
        Err(e) => {
            notes.push(format!("decay prediction unavailable: {e}"));
            None
        }
    };
    let steady_state = if sched.p == 0.0 && sched.q == 0.0 && sched.gamma == 1.0 {
        match thm3_system(&pc, sched.alpha).and_then(|bs| steady_state_error(&bs, pc.n)) {
            Ok(ss) => Some(ss),
            Err(e) => {
                notes.push(format!("steady-state bound unavailable: {e}"));
                None
            }
        }
    } else {
        None
    };
    let privacy = if exp.noise.b_eta > 0.0 && exp.noise.b_xi > 0.0 {
        let horizon = match exp.calibration {
            Some(_) => match &config.noise {
                NoiseSpec::Calibrate { infinite: true, .. } => Horizon::Infinite,
                NoiseSpec::Calibrate { k: Some(k), .. } => Horizon::Finite(*k),
                _ => Horizon::Finite(config.horizon),
            },
            None => Horizon::Finite(config.horizon),
        };
        match budget(&exp.privacy_query(horizon), &exp.noise) {
            Ok(rep) => Some(PrivacySummary {
                eps: rep.eps,
                worst_agent: rep.worst_agent,
                horizon: rep.horizon,
            }),
            Err(e) => {
                notes.push(format!("privacy budget unavailable: {e}"));
                None
            }
        }
    } else {
        notes.push("a noise channel is disabled; no finite privacy budget applies".into());
        None
    };
    if privacy.is_some() && !config.clip {
        notes.push("clipping is off: the budget assumes gradients stay within c_bound".into());
    }

    let mut out = Outputs::new(&config.output_dir);
    for (t, traj) in mc.trials.iter().enumerate() {
        out.add(format!("trajectory_{t}.csv"), trajectory_bytes(traj)?);
    }
    out.add("trajectory_mean.csv", trajectory_bytes(&mc.mean)?);
    out.add_json("meta.json", &meta("run", &exp, started))?;
    let inputs: Vec<&Path> = config_path.into_iter().collect();
    let files = out.commit(&inputs)?;

    let last = mc.mean.records.last().expect("nonempty trajectory");
    Ok(RunSummary {
        output_dir: config.output_dir.clone(),
        trials: config.trials,
        final_errors: FinalErrors {
            k: last.k,
            opt_err: last.opt_err,
            cons_err: last.cons_err,
            track_err: last.track_err,
        },
        decay_prediction,
        steady_state,
        privacy,
        notes,
        files_written: files.len(),
    })
}

/// Contents of `bounds.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub constants: ProblemConstants,
    pub cor1_stepsize_bound: StepsizeBound,
    pub prior_stepsize_bound: StepsizeBound,
    /// `cor1 / prior`.
    pub bound_ratio: f64,
    pub thm1_case1_bound: StepsizeBound,
    pub thm3_stepsize_bound: StepsizeBound,
    pub thm4_stepsize_bound: StepsizeBound,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_check: Option<Thm1Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constant_system: Option<ConstantSystemReport>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantSystemReport {
    pub alpha: f64,
    pub system: BoundSystem,
    pub rho_a: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steady_state: Option<SteadyState>,
    /// Expanded rational form of `θ₁`, `θ₂`, as a cross-check.
    pub closed_form_theta1: f64,
    pub closed_form_theta2: f64,
    /// Largest relative gap between the closed form and the linear solve.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form_rel_gap: Option<f64>,
}

pub fn cmd_bounds(config: &RunConfig, config_path: Option<&Path>) -> Result<BoundsReport> {
    let started = Instant::now();
    let exp = Experiment::resolve(config)?;
    let pc = exp.constants();
    let sched = config.schedule;
    let mut notes = Vec::new();
    let cor1 = cor1_stepsize_bound(&pc);
    let prior = prior_stepsize_bound(&pc);
    let decay_check = match thm1_stepsize_check(&pc, sched.p, sched.q, sched.alpha, sched.gamma) {
        Ok(c) => Some(c),
        Err(e) => {
            notes.push(format!("decay regime: {e}"));
            None
        }
    };
    let constant_system = match thm3_system(&pc, sched.alpha) {
        Ok(system) => {
            let steady_state = match steady_state_error(&system, pc.n) {
                Ok(ss) => Some(ss),
                Err(e) => {
                    notes.push(format!("steady state: {e}"));
                    None
                }
            };
            let (c1, c2) = closed_form_theta(&pc, sched.alpha);
            let gap = steady_state.map(|ss| {
                let g1 = if ss.theta1 == 0.0 { (c1 - ss.theta1).abs() } else { ((c1 - ss.theta1) / ss.theta1).abs() };
                let g2 = if ss.theta2 == 0.0 { (c2 - ss.theta2).abs() } else { ((c2 - ss.theta2) / ss.theta2).abs() };
                g1.max(g2)
            });
            Some(ConstantSystemReport {
                alpha: sched.alpha,
                rho_a: system.rho_a,
                system,
                steady_state,
                closed_form_theta1: c1,
                closed_form_theta2: c2,
                closed_form_rel_gap: gap,
            })
        }
        Err(e) => {
            notes.push(format!("constant-stepsize system: {e}"));
            None
        }
    };
    let report = BoundsReport {
        constants: pc,
        bound_ratio: cor1.value / prior.value,
        cor1_stepsize_bound: cor1,
        prior_stepsize_bound: prior,
        thm1_case1_bound: thm1_case1_bound(&pc),
        thm3_stepsize_bound: thm3_stepsize_bound(&pc),
        thm4_stepsize_bound: thm4_stepsize_bound(&pc),
        decay_check,
        constant_system,
        notes,
    };
    let mut out = Outputs::new(&config.output_dir);
    out.add_json("bounds.json", &report)?;
    out.add_json("meta.json", &meta("bounds", &exp, started))?;
    out.commit(&config_path.into_iter().collect::<Vec<_>>())?;
    Ok(report)
}

/// Resolves the sweep grid into `(ρ_w, ρ(W_o))` points.
pub fn sweep_points(grid: &SweepGrid) -> Result<Vec<(f64, f64)>> {
    Ok(match grid {
        SweepGrid::Points { points } => points.iter().map(|p| (p[0], p[1])).collect(),
        SweepGrid::Axes { rho_w, rho_wo } => rho_w
            .iter()
            .flat_map(|&a| rho_wo.iter().map(move |&b| (a, b)))
            .collect(),
        SweepGrid::Ring { r, d } => d
            .iter()
            .map(|&d| {
                let sp = WeightMatrix::ring(*r, d)?.spectral_profile();
                Ok((sp.rho_w, sp.rho_wo))
            })
            .collect::<Result<_>>()
            .map_err(config_err)?,
    })
}

pub fn cmd_sweep(config: &RunConfig, config_path: Option<&Path>) -> Result<Vec<ProbeRow>> {
    let started = Instant::now();
    let exp = Experiment::resolve(config)?;
    let spec = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("sweep: missing [sweep] section".into()))?;
    let mut template = exp.constants();
    if let Some(mu) = spec.mu {
        template.mu = mu;
    }
    if let Some(ell) = spec.ell {
        template.ell = ell;
    }
    template.validate().map_err(config_err)?;
    let points = sweep_points(&spec.grid)?;
    if points.is_empty() {
        return Err(Error::Config("sweep: empty grid".into()));
    }
    let rows = monotonicity_probe(&template, spec.alpha, &points).map_err(|e| match e {
        Error::StepsizeTooLarge { .. } => Error::HypothesisViolated(e.to_string()),
        other => config_err(other),
    })?;
    let mut csv_buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut csv_buf);
        w.write_record(["rho_w", "rho_wo", "theta", "fd_sign_rhow", "fd_sign_rhowo"])?;
        for r in &rows {
            w.write_record([
                crate::engine::full_precision(r.rho_w),
                crate::engine::full_precision(r.rho_wo),
                crate::engine::full_precision(r.theta),
                r.fd_sign_rhow.to_string(),
                r.fd_sign_rhowo.to_string(),
            ])?;
        }
        w.flush()?;
    }
    let mut out = Outputs::new(&config.output_dir);
    out.add("sweep.csv", csv_buf);
    out.add_json("meta.json", &meta("sweep", &exp, started))?;
    out.commit(&config_path.into_iter().collect::<Vec<_>>())?;
    Ok(rows)
}

/// Horizon and scale overrides shared by `budget` and `calibrate`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HorizonChoice {
    pub k: Option<usize>,
    pub infinite: bool,
}

impl HorizonChoice {
    fn resolve(&self, config: &RunConfig) -> Horizon {
        if self.infinite {
            Horizon::Infinite
        } else {
            Horizon::Finite(self.k.unwrap_or(config.horizon))
        }
    }
}

pub fn cmd_budget(
    config: &RunConfig,
    horizon: HorizonChoice,
    scales: Option<NoiseParams>,
    config_path: Option<&Path>,
) -> Result<PrivacyReport> {
    let started = Instant::now();
    let exp = Experiment::resolve(config)?;
    let noise = scales.unwrap_or(exp.noise);
    let query = exp.privacy_query(horizon.resolve(config));
    let report = budget(&query, &noise).map_err(config_err)?;
    let mut out = Outputs::new(&config.output_dir);
    out.add_json("budget.json", &report)?;
    out.add_json("meta.json", &meta("budget", &exp, started))?;
    out.commit(&config_path.into_iter().collect::<Vec<_>>())?;
    Ok(report)
}

pub fn cmd_calibrate(config: &RunConfig, eps: f64, split: f64, horizon: HorizonChoice) -> Result<Calibration> {
    let exp = Experiment::resolve(config)?;
    let query = exp.privacy_query(horizon.resolve(config));
    calibrate_noise(eps, split, &query).map_err(config_err)
}

/// Fitted decay exponents of one trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub file: PathBuf,
    pub opt_err: LinearFit,
    pub cons_err: LinearFit,
    pub track_err: LinearFit,
}

pub fn cmd_rate_fit(files: &[PathBuf], burn_in: f64, m: f64) -> Result<Vec<RateFit>> {
    if files.is_empty() {
        return Err(Error::Config("rate-fit: no trajectory files given".into()));
    }
    files
        .iter()
        .map(|f| {
            let t = Trajectory::read_csv(f).map_err(config_err)?;
            Ok(RateFit {
                file: f.clone(),
                opt_err: fit_decay_exponent(&t.opt_err(), m, burn_in)?,
                cons_err: fit_decay_exponent(&t.cons_err(), m, burn_in)?,
                track_err: fit_decay_exponent(&t.track_err(), m, burn_in)?,
            })
        })
        .collect()
}

/// Maps an error to the process exit status.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::HypothesisViolated(_)
        | Error::NoCaseMatches { .. }
        | Error::NotContractive { .. }
        | Error::StepsizeTooLarge { .. } => EXIT_HYPOTHESIS,
        Error::Io(_) => 1,
        _ => EXIT_CONFIG,
    }
}

#[derive(Debug, Parser)]
#[command(name = "dpgt", version, about = "Differentially private gradient-tracking experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Overrides {
    /// Configuration file (TOML, or a previous run's meta.json).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Number of iterations K.
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Enable gradient clipping at the objective's c_bound.
    #[arg(long)]
    pub clip: Option<bool>,
    /// Replace the topology with a four-agent ring of this r (needs --ring-d).
    #[arg(long, requires = "ring_d")]
    pub ring_r: Option<f64>,
    #[arg(long, requires = "ring_r")]
    pub ring_d: Option<f64>,
}

impl Overrides {
    pub fn apply(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(k) = self.horizon {
            cfg.horizon = k;
        }
        if let Some(a) = self.alpha {
            cfg.schedule.alpha = a;
        }
        if let Some(c) = self.clip {
            cfg.clip = c;
        }
        if let (Some(r), Some(d)) = (self.ring_r, self.ring_d) {
            cfg.topology = TopologySpec::Ring { r, d };
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args, Clone, Default)]
pub struct HorizonArgs {
    /// Account over K iterations (default: the config horizon).
    #[arg(long = "k", visible_alias = "K", conflicts_with = "infinite")]
    pub k: Option<usize>,
    /// Account over an infinite horizon (needs q < p - 2).
    #[arg(long)]
    pub infinite: bool,
}

impl From<&HorizonArgs> for HorizonChoice {
    fn from(a: &HorizonArgs) -> Self {
        Self {
            k: a.k,
            infinite: a.infinite,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate and write trajectories plus replay metadata.
    Run(Overrides),
    /// Tabulate theta over a spectral grid (needs a [sweep] section).
    Sweep(Overrides),
    /// Privacy budget of the configured (or given) noise scales.
    Budget {
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        horizon: HorizonArgs,
        #[arg(long, requires = "b_xi")]
        b_eta: Option<f64>,
        #[arg(long, requires = "b_eta")]
        b_xi: Option<f64>,
    },
    /// Laplace scales meeting a target epsilon.
    Calibrate {
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        horizon: HorizonArgs,
        #[arg(long)]
        eps: f64,
        /// Share of the budget given to the tracker channel.
        #[arg(long, default_value_t = 0.5)]
        split: f64,
    },
    /// Stepsize bounds, contraction factor and steady-state errors.
    Bounds(Overrides),
    /// Fit decay exponents to trajectory CSV files.
    RateFit {
        files: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BURN_IN)]
        burn_in: f64,
        /// Schedule offset m used in log(m + k).
        #[arg(long, default_value_t = 1.0)]
        m: f64,
    },
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        // A closed pipe (e.g. `| head`) is not a failure of the command.
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

/// Executes a parsed command line, printing results as JSON.
pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run(o) => print_json(&cmd_run(&o.apply()?, Some(&o.config))?),
        Command::Sweep(o) => print_json(&cmd_sweep(&o.apply()?, Some(&o.config))?),
        Command::Budget {
            overrides,
            horizon,
            b_eta,
            b_xi,
        } => {
            let scales = b_eta.zip(*b_xi).map(|(b_eta, b_xi)| NoiseParams { b_eta, b_xi });
            print_json(&cmd_budget(&overrides.apply()?, horizon.into(), scales, Some(&overrides.config))?)
        }
        Command::Calibrate {
            overrides,
            horizon,
            eps,
            split,
        } => print_json(&cmd_calibrate(&overrides.apply()?, *eps, *split, horizon.into())?),
        Command::Bounds(o) => print_json(&cmd_bounds(&o.apply()?, Some(&o.config))?),
        Command::RateFit { files, burn_in, m } => print_json(&cmd_rate_fit(files, *burn_in, *m)?),
    }
}

/// Parses `std::env::args`, runs, and returns the exit status.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"
horizon = 50
trials = 3
seed = 7
clip = false
output_dir = "out"

[problem.ridge]
n = 4
r = 2
rho_pen = 0.1
seed = 7

[topology.ring]
r = 0.3
d = 0.5

[schedule]
alpha = 0.001
gamma = 1.0
p = 0.0
q = 0.3
m = 1.0

[noise.variance]
sigma_eta_sq = 0.01
sigma_xi_sq = 0.01
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::from_toml(SAMPLE).unwrap();
        assert!(matches!(cfg.problem, ProblemSpec::Ridge { n: 4, .. }));
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), cfg);
    }

    #[test]
    fn rejects_missing_and_unknown_fields() {
        let missing = SAMPLE.replace("alpha = 0.001\n", "");
        assert!(matches!(RunConfig::from_toml(&missing), Err(Error::Config(_))));
        let unknown = SAMPLE.replace("clip = false", "clip = false\nfoo = 1");
        assert!(RunConfig::from_toml(&unknown).is_err());
        let two_noise = format!("{SAMPLE}\n[noise.scale]\nb_eta = 1.0\nb_xi = 1.0\n");
        assert!(RunConfig::from_toml(&two_noise).is_err());
    }

    #[test]
    fn resolve_checks_agent_counts() {
        let cfg = RunConfig::from_toml(&SAMPLE.replace("[topology.ring]\nr = 0.3\nd = 0.5", "[topology.averaging]\nn = 5"))
            .unwrap();
        assert!(matches!(Experiment::resolve(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::HypothesisViolated("x".into())), EXIT_HYPOTHESIS);
        assert_eq!(exit_code(&Error::NoCaseMatches { p: 2.0, q: 0.1 }), EXIT_HYPOTHESIS);
    }
}
