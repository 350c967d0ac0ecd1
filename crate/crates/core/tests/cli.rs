use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dpgt::engine::{Record, Trajectory};
use tempfile::TempDir;

fn dpgt(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpgt"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// Rendezvous config with the decaying schedule α = 0.06, γ_k = 2/(1+k)^1.1,
/// β_k = (1+k)^−0.05 over 500 iterations.
fn rendezvous_config(trials: usize, output_dir: &str) -> String {
    format!(
        r#"horizon = 500
trials = {trials}
seed = 42
clip = true
output_dir = "{output_dir}"

[problem.rendezvous]
targets = [[1.0, -2.0], [4.0, 0.5], [-3.0, 2.0], [0.0, 3.5]]

[topology.ring]
r = 0.3
d = 0.5

[schedule]
alpha = 0.06
gamma = 2.0
p = 1.1
q = 0.05
m = 1.0

[noise.scale]
b_eta = 2.0
b_xi = 2.0
"#
    )
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn csv_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn run_reports_budget_and_writes_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "run.toml", &rendezvous_config(500, "out"));
    let before = fs::read(&cfg).unwrap();
    let summary = stdout_json(&dpgt(&["run", "--config", "run.toml"], tmp.path()));
    let eps = summary["privacy"]["eps"].as_f64().unwrap();
    assert!(eps > 0.0 && eps.is_finite());
    assert_eq!(summary["trials"], 500);
    let out = tmp.path().join("out");
    assert_eq!(csv_rows(&out.join("trajectory_mean.csv")), 501);
    assert!(out.join("trajectory_0.csv").exists() && out.join("trajectory_499.csv").exists());
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["master_seed"], 42);
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(fs::read(&cfg).unwrap(), before, "input config untouched");
}

#[test]
fn rerun_from_metadata_is_bit_identical() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "run.toml", &rendezvous_config(4, "first"));
    stdout_json(&dpgt(&["run", "--config", "run.toml"], tmp.path()));
    stdout_json(&dpgt(
        &["run", "--config", "first/meta.json", "--output-dir", "second"],
        tmp.path(),
    ));
    for name in ["trajectory_0.csv", "trajectory_3.csv", "trajectory_mean.csv"] {
        let a = fs::read(tmp.path().join("first").join(name)).unwrap();
        let b = fs::read(tmp.path().join("second").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
}

#[test]
fn rerun_refuses_to_overwrite_its_input() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "run.toml", &rendezvous_config(2, "out"));
    stdout_json(&dpgt(&["run", "--config", "run.toml"], tmp.path()));
    let meta = tmp.path().join("out/meta.json");
    let before = fs::read(&meta).unwrap();
    let out = dpgt(&["run", "--config", "out/meta.json"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(fs::read(&meta).unwrap(), before);
}

#[test]
fn malformed_config_exits_2_without_files() {
    let tmp = TempDir::new().unwrap();
    let broken = rendezvous_config(3, "out").replace("alpha = 0.06\n", "");
    write(tmp.path(), "bad.toml", &broken);
    let out = dpgt(&["run", "--config", "bad.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
    assert!(!tmp.path().join("out").exists());

    let bad_ring = rendezvous_config(3, "out").replace("r = 0.3", "r = 0.7");
    write(tmp.path(), "ring.toml", &bad_ring);
    let out = dpgt(&["run", "--config", "ring.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("out").exists());

    let out = dpgt(&["run", "--config", "missing.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn calibrate_then_budget_round_trips() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "run.toml", &rendezvous_config(1, "out"));
    let cal = stdout_json(&dpgt(
        &["calibrate", "--config", "run.toml", "--eps", "1", "--K", "500"],
        tmp.path(),
    ));
    let b_eta = cal["noise"]["b_eta"].as_f64().unwrap().to_string();
    let b_xi = cal["noise"]["b_xi"].as_f64().unwrap().to_string();
    let report = stdout_json(&dpgt(
        &["budget", "--config", "run.toml", "--k", "500", "--b-eta", &b_eta, "--b-xi", &b_xi],
        tmp.path(),
    ));
    let eps = report["eps"].as_f64().unwrap();
    assert!((eps - 1.0).abs() <= 1e-9, "eps = {eps}");
    assert!(tmp.path().join("out/budget.json").exists());
}

#[test]
fn divergent_infinite_budget_exits_3() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "run.toml", &rendezvous_config(1, "out"));
    let out = dpgt(&["budget", "--config", "run.toml", "--infinite"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn infinite_budget_under_fast_decay() {
    let tmp = TempDir::new().unwrap();
    let cfg = rendezvous_config(1, "out").replace("p = 1.1", "p = 3.5").replace("q = 0.05", "q = 0.5");
    write(tmp.path(), "run.toml", &cfg);
    let report = stdout_json(&dpgt(&["budget", "--config", "run.toml", "--infinite"], tmp.path()));
    assert!(report["eps"].as_f64().unwrap() > 0.0);
    assert_eq!(report["horizon"], "infinite");
}

fn ridge_sweep_config(grid: &str) -> String {
    format!(
        r#"horizon = 100
trials = 1
seed = 1
clip = false
output_dir = "sweep"

[problem.ridge]
n = 4
r = 2
rho_pen = 0.5
seed = 4

[topology.ring]
r = 0.3
d = 0.5

[schedule]
alpha = 0.01
gamma = 1.0
p = 0.0
q = 0.0
m = 1.0

[noise.variance]
sigma_eta_sq = 0.01
sigma_xi_sq = 0.01

[sweep]
alpha = 0.01
mu = 0.01
ell = 0.02

{grid}
"#
    )
}

fn sweep_thetas(dir: &Path) -> Vec<(f64, f64, f64)> {
    let mut reader = csv::Reader::from_path(dir.join("sweep/sweep.csv")).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["rho_w", "rho_wo", "theta", "fd_sign_rhow", "fd_sign_rhowo"]
    );
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap(), r[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn sweep_along_coupling_axes() {
    let tmp = TempDir::new().unwrap();
    let grid = "[sweep.grid.axes]\nrho_w = [0.9]\nrho_wo = [0.15, 0.2, 0.3, 0.4, 0.5]";
    write(tmp.path(), "sweep.toml", &ridge_sweep_config(grid));
    stdout_json(&dpgt(&["sweep", "--config", "sweep.toml"], tmp.path()));
    let rows = sweep_thetas(tmp.path());
    assert_eq!(rows.len(), 5);
    assert!(rows.windows(2).all(|w| w[1].2 > w[0].2));
}

/// On the four-agent ring the consensus rate `1 − 2r·min(d, 1−d)` is
/// symmetric in `d`, so a `d` sweep at fixed `r` traces `θ` down and back up.
#[test]
fn ring_sweep_over_d() {
    let tmp = TempDir::new().unwrap();
    let grid = "[sweep.grid.ring]\nr = 0.3\nd = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]";
    write(tmp.path(), "sweep.toml", &ridge_sweep_config(grid));
    stdout_json(&dpgt(&["sweep", "--config", "sweep.toml"], tmp.path()));
    let rows = sweep_thetas(tmp.path());
    assert_eq!(rows.len(), 9);
    for (i, row) in rows.iter().enumerate() {
        let mirror = rows[8 - i];
        assert!((row.0 - mirror.0).abs() < 1e-12);
        assert!((row.2 - mirror.2).abs() <= 1e-9 * row.2);
        assert!((row.1 - 0.3).abs() < 1e-12);
    }
    assert!(rows[..5].windows(2).all(|w| w[1].2 < w[0].2));
}

#[test]
fn bounds_writes_report() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "b.toml", &ridge_sweep_config("[sweep.grid.points]\npoints = [[0.9, 0.3]]"));
    let report = stdout_json(&dpgt(&["bounds", "--config", "b.toml", "--alpha", "0.001"], tmp.path()));
    assert!(report["bound_ratio"].as_f64().unwrap() > 1.0);
    assert!(report["constant_system"]["rho_a"].as_f64().unwrap() < 1.0);
    assert!(report["constant_system"]["closed_form_rel_gap"].as_f64().unwrap() < 1e-8);
    assert!(tmp.path().join("sweep/bounds.json").exists());
}

#[test]
fn rate_fit_on_exact_power_law() {
    let tmp = TempDir::new().unwrap();
    let m = 2.0;
    let records = (0..2000)
        .map(|k| {
            let base = (m + k as f64).powf(-0.6);
            Record {
                k,
                opt_err: base,
                cons_err: base * base,
                track_err: 3.0 * base,
                gamma_k: 1.0,
                beta_k: 1.0,
            }
        })
        .collect::<Vec<_>>();
    let traj = Trajectory {
        xbar: vec![vec![0.0, 0.0]; records.len()],
        records,
    };
    traj.save_csv(&tmp.path().join("t.csv")).unwrap();
    let fits = stdout_json(&dpgt(&["rate-fit", "t.csv", "--m", "2"], tmp.path()));
    let slope = |ch: &str| fits[0][ch]["slope"].as_f64().unwrap();
    assert!((slope("opt_err") + 0.6).abs() < 1e-9);
    assert!((slope("cons_err") + 1.2).abs() < 1e-9);
    assert!((slope("track_err") + 0.6).abs() < 1e-9);

    let short = Trajectory {
        records: traj.records[..8].to_vec(),
        xbar: traj.xbar[..8].to_vec(),
    };
    short.save_csv(&tmp.path().join("short.csv")).unwrap();
    let out = dpgt(&["rate-fit", "short.csv"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}
