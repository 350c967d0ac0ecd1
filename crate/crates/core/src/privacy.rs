//! Sensitivities, privacy budgets, and noise calibration.
//!
//! Two problems are adjacent when a single agent swaps its objective. Under
//! identical observations, that agent's internal states then differ by the
//! sensitivities `Δs_k`, `Δx_k`, and the Laplace mechanism converts them into a
//! budget `ε_i = 2√r·C · (A_i/b_η + B_i/b_ξ)`. Here `A_i` and `B_i` are
//! channel coefficients that depend only on the schedule, the horizon, and the
//! agent's self-weight `w_ii`.
//!
//! Budgets are linear in `1/b_η` and `1/b_ξ`, which makes calibration a
//! rescaling problem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randomness::{NoiseParams, Schedule};

/// Iterations over which privacy is accounted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Finite(usize),
    Infinite,
}

/// Inputs of a budget computation, excluding the noise scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyQuery {
    pub horizon: Horizon,
    pub schedule: Schedule,
    /// Gradient-norm bound `C`.
    pub c_grad: f64,
    /// Decision dimension `r`.
    pub r: usize,
    /// Self-weights `w_ii`, one per agent.
    pub w_diag: Vec<f64>,
}

impl PrivacyQuery {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if let Horizon::Finite(0) = self.horizon {
            return Err(Error::OutOfRange {
                name: "horizon",
                value: 0.0,
                expected: "K >= 1",
            });
        }
        if !(self.c_grad >= 0.0) {
            return Err(Error::OutOfRange {
                name: "c_grad",
                value: self.c_grad,
                expected: "C >= 0",
            });
        }
        if self.w_diag.is_empty() {
            return Err(Error::DimensionMismatch("no agents in privacy query".into()));
        }
        for &w in &self.w_diag {
            if !(w > 0.0 && w < 1.0) {
                return Err(Error::OutOfRange {
                    name: "w_ii",
                    value: w,
                    expected: "0 < w_ii < 1",
                });
            }
        }
        Ok(())
    }

    /// `2√r·C`, the ℓ₁ bound on a gradient difference between adjacent problems.
    pub fn l1_scale(&self) -> f64 {
        2.0 * (self.r as f64).sqrt() * self.c_grad
    }
}

/// Budget of a single agent split by noise channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentBudget {
    pub w_ii: f64,
    /// Contribution of the tracker channel (scales with `1/b_η`).
    pub s_channel: f64,
    /// Contribution of the decision channel (scales with `1/b_ξ`).
    pub x_channel: f64,
    pub eps: f64,
}

/// Per-iteration budget increments of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationContribution {
    pub k: usize,
    pub s_channel: f64,
    pub x_channel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub horizon: Horizon,
    pub noise: NoiseParams,
    pub per_agent: Vec<AgentBudget>,
    /// `maxᵢ εᵢ`.
    pub eps: f64,
    pub worst_agent: usize,
    /// Iteration-level breakdown for the worst agent (finite horizon only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub worst_agent_iterations: Vec<IterationContribution>,
    /// First index of the tail sums when `m` is not an integer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_start: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Channel coefficients `A_i`, `B_i` with `ε_i = A_i/b_η + B_i/b_ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelCoefficients {
    pub s_coef: f64,
    pub x_coef: f64,
}

impl ChannelCoefficients {
    pub fn eps(&self, noise: &NoiseParams) -> f64 {
        self.s_coef / noise.b_eta + self.x_coef / noise.b_xi
    }
}

/// `c_{k,t} = w^{k−2−t}((k−t−1) − (k−t)w)`.
pub fn c_coefficient(k: usize, t: usize, w: f64) -> Result<f64> {
    if t >= k {
        return Err(Error::IndexError(format!("c_(k,t) needs t < k, got k = {k}, t = {t}")));
    }
    Ok(c_by_lag(k - t, w))
}

fn c_by_lag(j: usize, w: f64) -> f64 {
    w.powi(j as i32 - 2) * ((j as f64 - 1.0) - j as f64 * w)
}

/// Worst-case sensitivities for `k = 0..=K` (index 0 holds `Δ_0 = 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sensitivities {
    pub delta_s: Vec<f64>,
    pub delta_x: Vec<f64>,
}

/// `Δs_k = Σ_{t<k} w^{k−1−t}γ_t·2√rC`, `Δx_k = Σ_{t<k} α|c_{k,t}|γ_t·2√rC`.
pub fn sensitivity_closed_form(
    horizon: usize,
    schedule: &Schedule,
    w: f64,
    c_grad: f64,
    r: usize,
) -> Sensitivities {
    let scale = 2.0 * (r as f64).sqrt() * c_grad;
    let gammas: Vec<f64> = (0..horizon).map(|t| schedule.gamma_at(t)).collect();
    let mut delta_s = vec![0.0; horizon + 1];
    let mut delta_x = vec![0.0; horizon + 1];
    for k in 1..=horizon {
        let mut s = 0.0;
        let mut x = 0.0;
        for (t, g) in gammas.iter().enumerate().take(k) {
            s += w.powi((k - 1 - t) as i32) * g;
            x += schedule.alpha * c_by_lag(k - t, w).abs() * g;
        }
        delta_s[k] = s * scale;
        delta_x[k] = x * scale;
    }
    Sensitivities { delta_s, delta_x }
}

/// Brute-force sensitivities from the state recursions
/// `Δs_{k+1} = wΔs_k + γ_kΔf_k`, `Δx_{k+1} = wΔx_k + α(1−w)Δs_k − αγ_kΔf_k`.
///
/// Each gradient difference `Δf_t` is injected as a unit impulse and the
/// recursion is run forward, which isolates the signed coefficient that
/// `Δf_t` carries in `Δx_k`. The ℓ₁ worst case then sums the absolute
/// coefficients times `2√rC`.
pub fn sensitivity_recursion_oracle(
    horizon: usize,
    schedule: &Schedule,
    w: f64,
    c_grad: f64,
    r: usize,
) -> Sensitivities {
    let scale = 2.0 * (r as f64).sqrt() * c_grad;
    let alpha = schedule.alpha;
    let mut abs_s = vec![0.0; horizon + 1];
    let mut abs_x = vec![0.0; horizon + 1];
    for t in 0..horizon {
        let g = schedule.gamma_at(t);
        let (mut ds, mut dx) = (0.0, 0.0);
        for k in t..horizon {
            let impulse = if k == t { 1.0 } else { 0.0 };
            let next_s = w * ds + g * impulse;
            let next_x = w * dx + alpha * (1.0 - w) * ds - alpha * g * impulse;
            ds = next_s;
            dx = next_x;
            abs_s[k + 1] += ds.abs();
            abs_x[k + 1] += dx.abs();
        }
    }
    Sensitivities {
        delta_s: abs_s.into_iter().map(|v| v * scale).collect(),
        delta_x: abs_x.into_iter().map(|v| v * scale).collect(),
    }
}

/// Per-iteration channel terms `(Σ_t w^{k−1−t}γ_t/β_k, αΣ_t|c_{k,t}|γ_t/β_k)`
/// for `k = 1..=K`, excluding the `2√rC` factor.
fn iteration_terms(horizon: usize, schedule: &Schedule, w: f64) -> Vec<(f64, f64)> {
    let gammas: Vec<f64> = (0..horizon).map(|t| schedule.gamma_at(t)).collect();
    let abs_c: Vec<f64> = (0..=horizon).map(|j| if j == 0 { 0.0 } else { c_by_lag(j, w).abs() }).collect();
    let mut out = Vec::with_capacity(horizon);
    let mut s_acc = 0.0;
    for k in 1..=horizon {
        s_acc = w * s_acc + gammas[k - 1];
        let x_acc: f64 = (0..k).map(|t| abs_c[k - t] * gammas[t]).sum();
        let beta = schedule.beta_at(k);
        out.push((s_acc / beta, schedule.alpha * x_acc / beta));
    }
    out
}

/// Channel coefficients for every agent under a finite horizon.
pub fn finite_channel_coefficients(q: &PrivacyQuery, horizon: usize) -> Vec<ChannelCoefficients> {
    let scale = q.l1_scale();
    q.w_diag
        .iter()
        .map(|&w| {
            let (s, x) = iteration_terms(horizon, &q.schedule, w)
                .into_iter()
                .fold((0.0, 0.0), |(a, b), (s, x)| (a + s, b + x));
            ChannelCoefficients {
                s_coef: scale * s,
                x_coef: scale * x,
            }
        })
        .collect()
}

fn report_from(
    q: &PrivacyQuery,
    coefs: &[ChannelCoefficients],
    noise: &NoiseParams,
) -> PrivacyReport {
    let per_agent: Vec<AgentBudget> = coefs
        .iter()
        .zip(&q.w_diag)
        .map(|(c, &w)| {
            let s_channel = c.s_coef / noise.b_eta;
            let x_channel = c.x_coef / noise.b_xi;
            AgentBudget {
                w_ii: w,
                s_channel,
                x_channel,
                eps: s_channel + x_channel,
            }
        })
        .collect();
    let (worst_agent, eps) = per_agent
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, be), (i, a)| {
            if a.eps > be {
                (i, a.eps)
            } else {
                (bi, be)
            }
        });
    PrivacyReport {
        horizon: q.horizon,
        noise: *noise,
        per_agent,
        eps,
        worst_agent,
        worst_agent_iterations: Vec::new(),
        tail_start: None,
        notes: Vec::new(),
    }
}

fn check_noise(noise: &NoiseParams) -> Result<()> {
    if !(noise.b_eta > 0.0 && noise.b_xi > 0.0) {
        return Err(Error::OutOfRange {
            name: "noise scale",
            value: noise.b_eta.min(noise.b_xi),
            expected: "b_eta > 0 and b_xi > 0 for a finite budget",
        });
    }
    Ok(())
}

/// Finite-horizon budget `ε_i = 2√rC Σ_k Σ_{t<k}(w^{k−1−t}/(β_kb_η) + α|c_{k,t}|/(β_kb_ξ))γ_t`.
pub fn finite_horizon_budget(q: &PrivacyQuery, noise: &NoiseParams) -> Result<PrivacyReport> {
    q.validate()?;
    check_noise(noise)?;
    let Horizon::Finite(horizon) = q.horizon else {
        return Err(Error::Config("finite_horizon_budget needs a finite horizon".into()));
    };
    let coefs = finite_channel_coefficients(q, horizon);
    let mut report = report_from(q, &coefs, noise);
    let scale = q.l1_scale();
    report.worst_agent_iterations = iteration_terms(horizon, &q.schedule, q.w_diag[report.worst_agent])
        .into_iter()
        .enumerate()
        .map(|(i, (s, x))| IterationContribution {
            k: i + 1,
            s_channel: scale * s / noise.b_eta,
            x_channel: scale * x / noise.b_xi,
        })
        .collect();
    Ok(report)
}

/// Worst-agent budget after each `K = 1..=k_max`.
pub fn budget_trajectory(q: &PrivacyQuery, noise: &NoiseParams, k_max: usize) -> Result<Vec<f64>> {
    q.validate()?;
    check_noise(noise)?;
    let scale = q.l1_scale();
    let mut worst = vec![f64::NEG_INFINITY; k_max];
    for &w in &q.w_diag {
        let mut acc = 0.0;
        for (i, (s, x)) in iteration_terms(k_max, &q.schedule, w).into_iter().enumerate() {
            acc += scale * (s / noise.b_eta + x / noise.b_xi);
            worst[i] = worst[i].max(acc);
        }
    }
    Ok(worst)
}

/// Eulerian numbers `⟨n, j⟩` for `j = 0..n` (row 0 is `[1]`).
pub fn eulerian_numbers(order: usize) -> Vec<f64> {
    let mut row = vec![1.0];
    for n in 1..=order {
        let mut next = vec![0.0; n];
        for (j, slot) in next.iter_mut().enumerate() {
            let keep = if j < row.len() { (j + 1) as f64 * row[j] } else { 0.0 };
            let shift = if j >= 1 && j - 1 < row.len() {
                (n - j) as f64 * row[j - 1]
            } else {
                0.0
            };
            *slot = keep + shift;
        }
        row = next;
    }
    row
}

/// `P_n(w) = Σ_{j<n} ⟨n, j⟩ w^j`, with `P_0 = 1`.
pub fn eulerian_polynomial(order: usize, w: f64) -> f64 {
    eulerian_numbers(order)
        .iter()
        .rev()
        .fold(0.0, |acc, c| acc * w + c)
}

/// `Σ_{t≥1} t^n w^t = w·P_n(w)/(1−w)^{n+1}` for `0 < w < 1`.
pub fn staircase_sum(order: usize, w: f64) -> f64 {
    w * eulerian_polynomial(order, w) / (1.0 - w).powi(order as i32 + 1)
}

/// `Σ_{t=1}^{terms} t^n w^t`.
pub fn staircase_partial_sum(order: usize, w: f64, terms: usize) -> f64 {
    (1..=terms)
        .map(|t| (t as f64).powi(order as i32) * w.powi(t as i32))
        .sum()
}

/// `Σ_{k>start} k^{−s}` for `s > 1`: direct summation over a fixed block, then
/// an Euler–Maclaurin remainder whose truncation error is below `1e-15`.
pub fn zeta_tail(s: f64, start: u64) -> f64 {
    assert!(s > 1.0, "tail sum diverges for s <= 1");
    let cutoff = start + 2000;
    let mut direct = 0.0;
    for k in (start + 1..=cutoff).rev() {
        direct += (k as f64).powf(-s);
    }
    let n = cutoff as f64;
    // Σ_{k>N} f(k) = ∫_N^∞ f − f(N)/2 − f'(N)/12 + f'''(N)/720 − …
    let remainder = n.powf(1.0 - s) / (s - 1.0) - 0.5 * n.powf(-s) + s * n.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * n.powf(-s - 3.0) / 720.0;
    direct + remainder
}

/// Channel coefficients for every agent in the infinite-horizon limit, plus
/// the tail start index when `m` is not an integer.
pub fn infinite_channel_coefficients(q: &PrivacyQuery) -> Result<(Vec<ChannelCoefficients>, Option<u64>)> {
    let Schedule { alpha, gamma, p, q: qq, m } = q.schedule;
    if !(qq < p - 2.0) {
        return Err(Error::HypothesisViolated(format!(
            "infinite-horizon budget needs q < p - 2, got p = {p}, q = {qq}"
        )));
    }
    let order = p.ceil() as usize;
    let (start, flagged) = if m.fract() == 0.0 {
        (m as u64, None)
    } else {
        (m.ceil() as u64, Some(m.ceil() as u64 + 1))
    };
    let tail_s = zeta_tail(p - qq, start);
    let tail_x = zeta_tail(p - qq - 1.0, start);
    let scale = q.l1_scale();
    let coefs = q
        .w_diag
        .iter()
        .map(|&w| {
            let lead = scale * gamma * eulerian_polynomial(order, w)
                / (m.powf(p) * (1.0 - w).powi(order as i32 + 1));
            ChannelCoefficients {
                s_coef: lead * tail_s / w.powf(m),
                x_coef: lead * alpha * tail_x / w.powf(m + 1.0),
            }
        })
        .collect();
    Ok((coefs, flagged))
}

/// Infinite-horizon budget for decaying schedules with `q < p − 2`.
pub fn infinite_horizon_budget(q: &PrivacyQuery, noise: &NoiseParams) -> Result<PrivacyReport> {
    q.validate()?;
    check_noise(noise)?;
    let (coefs, flagged) = infinite_channel_coefficients(q)?;
    let mut report = report_from(q, &coefs, noise);
    report.horizon = Horizon::Infinite;
    if let Some(start) = flagged {
        report.tail_start = Some(start);
        report.notes.push(format!(
            "m = {} is not an integer; tail sums start at k = {start}",
            q.schedule.m
        ));
    }
    Ok(report)
}

/// Dispatches on the query's horizon.
pub fn budget(q: &PrivacyQuery, noise: &NoiseParams) -> Result<PrivacyReport> {
    match q.horizon {
        Horizon::Finite(_) => finite_horizon_budget(q, noise),
        Horizon::Infinite => infinite_horizon_budget(q, noise),
    }
}

fn channel_coefficients(q: &PrivacyQuery) -> Result<Vec<ChannelCoefficients>> {
    q.validate()?;
    match q.horizon {
        Horizon::Finite(k) => Ok(finite_channel_coefficients(q, k)),
        Horizon::Infinite => Ok(infinite_channel_coefficients(q)?.0),
    }
}

/// Result of [`calibrate_noise`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub noise: NoiseParams,
    pub target_eps: f64,
    /// Requested share of the budget spent by the tracker channel.
    pub split: f64,
    /// Share actually spent by the tracker channel at the worst agent.
    pub realized_split: f64,
    pub worst_agent: usize,
}

/// Laplace scales that spend exactly `target_eps` at the worst agent.
///
/// Each channel is first sized so that the agent with the largest coefficient
/// in that channel spends its share (`split` for the tracker channel,
/// `1 − split` for the decision channel). Both scales are then multiplied by
/// the same factor, chosen so that `maxᵢ εᵢ` equals the target. When one agent
/// maximizes both channels, the split is realized exactly.
pub fn calibrate_noise(target_eps: f64, split: f64, q: &PrivacyQuery) -> Result<Calibration> {
    if !(target_eps > 0.0 && target_eps.is_finite()) {
        return Err(Error::OutOfRange {
            name: "eps",
            value: target_eps,
            expected: "eps > 0",
        });
    }
    if !(split > 0.0 && split < 1.0) {
        return Err(Error::OutOfRange {
            name: "split",
            value: split,
            expected: "0 < split < 1",
        });
    }
    let coefs = channel_coefficients(q)?;
    let s_max = coefs.iter().map(|c| c.s_coef).fold(0.0, f64::max);
    let x_max = coefs.iter().map(|c| c.x_coef).fold(0.0, f64::max);
    if !(s_max > 0.0 && x_max > 0.0) {
        return Err(Error::OutOfRange {
            name: "c_grad",
            value: q.c_grad,
            expected: "C > 0 so that the budget depends on the noise",
        });
    }
    let mut noise = NoiseParams {
        b_eta: s_max / (split * target_eps),
        b_xi: x_max / ((1.0 - split) * target_eps),
    };
    let (worst_agent, worst) = coefs
        .iter()
        .map(|c| c.eps(&noise))
        .enumerate()
        .fold((0, 0.0), |(bi, be), (i, e)| if e > be { (i, e) } else { (bi, be) });
    let factor = worst / target_eps;
    noise.b_eta *= factor;
    noise.b_xi *= factor;
    let c = coefs[worst_agent];
    let realized_split = (c.s_coef / noise.b_eta) / c.eps(&noise);
    Ok(Calibration {
        noise,
        target_eps,
        split,
        realized_split,
        worst_agent,
    })
}
