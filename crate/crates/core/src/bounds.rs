//! Convergence bounds, stepsize conditions, and steady-state errors.
//!
//! The expected errors `[E‖x̄_k − x*‖², E‖x_k − 1x̄_k‖², E‖y_k − 1ȳ_k‖²]` obey
//! a component-wise linear recursion `v_{k+1} ≤ A_k v_k + B_k` with a
//! nonnegative 3×3 matrix. For decaying schedules `A_k` and `B_k` vary with
//! `k` ([`lemma1_system`]). For the constant schedule `γ_k = β_k = 1`, a
//! simplified constant pair `(A, B)` dominates them ([`thm3_system`]). Its
//! fixed point `(I − A)⁻¹B` gives the steady-state errors `θ₁`, `θ₂` and the
//! total `θ = 2nθ₁ + 2θ₂`.
//!
//! Throughout, `T = 1 − ρ_w²` and `d_I = √(n − 1)`.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::ObjectiveSet;
use crate::randomness::{NoiseParams, Schedule};
use crate::topology::WeightMatrix;

/// Every scalar the bound formulas depend on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub mu: f64,
    pub ell: f64,
    pub n: usize,
    pub r: usize,
    pub rho_w: f64,
    pub rho_wo: f64,
    pub d_i_sq: f64,
    pub norm_wo_sq: f64,
    pub norm_v_sq: f64,
    /// `‖W − I‖²`, used only by the prior stepsize bound.
    pub norm_w_minus_i_sq: f64,
    pub sigma_eta_sq: f64,
    pub sigma_xi_sq: f64,
    /// `Σᵢ ‖∇f_i(x*)‖²`.
    pub c_star: f64,
}

impl ProblemConstants {
    /// Constants of a concrete instance; noise second moments are `2nrb²`.
    pub fn from_instance(wm: &WeightMatrix, obj: &ObjectiveSet, noise: &NoiseParams) -> Self {
        let sp = wm.spectral_profile();
        Self {
            mu: obj.mu,
            ell: obj.ell,
            n: obj.n,
            r: obj.r,
            rho_w: sp.rho_w,
            rho_wo: sp.rho_wo,
            d_i_sq: sp.d_i_sq,
            norm_wo_sq: sp.norm_wo_sq,
            norm_v_sq: sp.norm_v_sq,
            norm_w_minus_i_sq: sp.norm_w_minus_i_sq,
            sigma_eta_sq: noise.sigma_eta_sq(obj.n, obj.r),
            sigma_xi_sq: noise.sigma_xi_sq(obj.n, obj.r),
            c_star: obj.c_star(),
        }
    }

    /// Replaces the noise second moments.
    pub fn with_variances(mut self, sigma_eta_sq: f64, sigma_xi_sq: f64) -> Self {
        self.sigma_eta_sq = sigma_eta_sq;
        self.sigma_xi_sq = sigma_xi_sq;
        self
    }

    /// Replaces both spectral radii, leaving the norm fields untouched.
    pub fn with_spectrum(mut self, rho_w: f64, rho_wo: f64) -> Self {
        self.rho_w = rho_w;
        self.rho_wo = rho_wo;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu <= self.ell) {
            return Err(Error::OutOfRange {
                name: "mu",
                value: self.mu,
                expected: "0 < mu <= L",
            });
        }
        if !(self.rho_w >= 0.0 && self.rho_w < 1.0) {
            return Err(Error::OutOfRange {
                name: "rho_w",
                value: self.rho_w,
                expected: "0 <= rho_w < 1",
            });
        }
        if self.n < 2 {
            return Err(Error::OutOfRange {
                name: "n",
                value: self.n as f64,
                expected: "n >= 2",
            });
        }
        Ok(())
    }

    /// `T = 1 − ρ_w²`.
    pub fn t_w(&self) -> f64 {
        1.0 - self.rho_w * self.rho_w
    }

    pub fn d_i(&self) -> f64 {
        self.d_i_sq.sqrt()
    }
}

/// One term of a `min{…}` stepsize bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub name: String,
    pub value: f64,
}

/// A stepsize bound as the minimum of named arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepsizeBound {
    pub value: f64,
    pub binding: String,
    pub arms: Vec<Arm>,
}

impl StepsizeBound {
    fn from_arms(arms: Vec<(&str, f64)>) -> Self {
        let arms: Vec<Arm> = arms
            .into_iter()
            .map(|(name, value)| Arm {
                name: name.to_string(),
                value,
            })
            .collect();
        let best = arms
            .iter()
            .min_by(|a, b| a.value.total_cmp(&b.value))
            .expect("at least one arm");
        Self {
            value: best.value,
            binding: best.name.clone(),
            arms,
        }
    }
}

/// `√(2d₃/(d₂ + √(d₂² + 4d₁d₃)))`, the positive root bound of `d₁a⁴ + d₂a² − d₃ < 0`.
fn quartic_arm(d1: f64, d2: f64, d3: f64) -> f64 {
    (2.0 * d3 / (d2 + (d2 * d2 + 4.0 * d1 * d3).sqrt())).sqrt()
}

/// `√(2/(c₄₂ + √(c₄₂² + 4c₄₁)))`.
fn c4_arm(c41: f64, c42: f64) -> f64 {
    (2.0 / (c42 + (c42 * c42 + 4.0 * c41).sqrt())).sqrt()
}

/// `c₄₁ = 64(1+ρ_w²)(3μ+L)L⁶d_I²/(T⁴(μ+L))`.
pub fn c41(pc: &ProblemConstants) -> f64 {
    let (mu, l, t) = (pc.mu, pc.ell, pc.t_w());
    64.0 * (1.0 + pc.rho_w.powi(2)) * (3.0 * mu + l) * l.powi(6) * pc.d_i_sq / (t.powi(4) * (mu + l))
}

/// `c₄₂ = 64(1+ρ_w²)(μ+L+2L²)L²d_I²/(T⁴(μ+L))`, the form stated with the
/// constant-γ decay regime.
pub fn c42_thm1(pc: &ProblemConstants) -> f64 {
    let (mu, l, t) = (pc.mu, pc.ell, pc.t_w());
    64.0 * (1.0 + pc.rho_w.powi(2)) * (mu + l + 2.0 * l * l) * l * l * pc.d_i_sq / (t.powi(4) * (mu + l))
}

/// `c₄₂ = 64(1+ρ_w²)(μ²+2μL+5L²)L²d_I²/(T⁴(μ+L)²)`, the form stated with the
/// geometric-rate bound.
pub fn c42_cor1(pc: &ProblemConstants) -> f64 {
    let (mu, l, t) = (pc.mu, pc.ell, pc.t_w());
    64.0 * (1.0 + pc.rho_w.powi(2)) * (mu * mu + 2.0 * mu * l + 5.0 * l * l) * l * l * pc.d_i_sq
        / (t.powi(4) * (mu + l).powi(2))
}

fn consensus_arm(pc: &ProblemConstants, denom: f64) -> f64 {
    pc.t_w() / (denom * pc.ell * pc.d_i())
}

/// Bound on `αγ` for the constant-γ regime, using `c42_thm1`.
pub fn thm1_case1_bound(pc: &ProblemConstants) -> StepsizeBound {
    StepsizeBound::from_arms(vec![
        ("2/(mu+L)", 2.0 / (pc.mu + pc.ell)),
        ("T/(4*sqrt2*L*d_I)", consensus_arm(pc, 4.0 * 2f64.sqrt())),
        ("c41/c42_thm1", c4_arm(c41(pc), c42_thm1(pc))),
    ])
}

/// Geometric-rate bound on `αγ`, using `c42_cor1`.
pub fn cor1_stepsize_bound(pc: &ProblemConstants) -> StepsizeBound {
    StepsizeBound::from_arms(vec![
        ("2/(mu+L)", 2.0 / (pc.mu + pc.ell)),
        ("T/(4*sqrt2*L*d_I)", consensus_arm(pc, 4.0 * 2f64.sqrt())),
        ("c41/c42_cor1", c4_arm(c41(pc), c42_cor1(pc))),
    ])
}

/// The earlier robust gradient-tracking stepsize bound, for comparison.
pub fn prior_stepsize_bound(pc: &ProblemConstants) -> StepsizeBound {
    let (mu, l, t, di2) = (pc.mu, pc.ell, pc.t_w(), pc.d_i_sq);
    let n = pc.n as f64;
    let d1 = 48.0 * di2 * di2 * l.powi(6) / (mu * t * t);
    let d2 = 24.0 * di2 * di2 * l * l * (2.0 * l * l + mu * mu * n) * (pc.norm_w_minus_i_sq + 2.0) / (mu * t * t)
        + 10.0 * l.powi(4) * di2 / mu;
    let d3 = mu * n * t * t / 18.0;
    StepsizeBound::from_arms(vec![
        ("1/(mu+L)", 1.0 / (mu + l)),
        ("T/(4*sqrt3*L*d_I)", consensus_arm(pc, 4.0 * 3f64.sqrt())),
        ("quartic", quartic_arm(d1, d2, d3)),
    ])
}

/// `(d₁, d₂, d₃)` of the constant-stepsize determinant condition.
pub fn thm3_d_coefficients(pc: &ProblemConstants) -> (f64, f64, f64) {
    let (mu, l, t, di2) = (pc.mu, pc.ell, pc.t_w(), pc.d_i_sq);
    let d1 = 128.0 * l.powi(6) * di2 / (mu * t * t);
    let d2 = 8.0 * mu * l * l * di2 + 128.0 * mu * di2 * l * l / (t * t);
    let d3 = mu * t * t / 4.0;
    (d1, d2, d3)
}

/// Constant-stepsize bound on `α` guaranteeing `ρ(A) < 1`.
pub fn thm3_stepsize_bound(pc: &ProblemConstants) -> StepsizeBound {
    let (d1, d2, d3) = thm3_d_coefficients(pc);
    StepsizeBound::from_arms(vec![
        ("1/(mu+L)", 1.0 / (pc.mu + pc.ell)),
        ("T/(4*sqrt2*d_I*L)", consensus_arm(pc, 4.0 * 2f64.sqrt())),
        ("quartic", quartic_arm(d1, d2, d3)),
    ])
}

/// Bound on `α` under which `θ` is monotone in both spectral radii.
pub fn thm4_stepsize_bound(pc: &ProblemConstants) -> StepsizeBound {
    let (d1, d2, d3) = thm3_d_coefficients(pc);
    StepsizeBound::from_arms(vec![
        ("1/(mu+L)", 1.0 / (pc.mu + pc.ell)),
        ("T/(8*d_I*L)", consensus_arm(pc, 8.0)),
        ("quartic", quartic_arm(d1, d2, d3)),
    ])
}

/// A 3×3 nonnegative recursion matrix and forcing vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSystem {
    pub a: [[f64; 3]; 3],
    pub b: [f64; 3],
    pub rho_a: f64,
}

impl BoundSystem {
    pub fn new(a: [[f64; 3]; 3], b: [f64; 3]) -> Self {
        let rho_a = spectral_radius3(&a);
        Self { a, b, rho_a }
    }

    pub fn a_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.a[i][j])
    }

    pub fn b_vector(&self) -> Vector3<f64> {
        Vector3::from_row_slice(&self.b)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.a.iter().flatten().chain(&self.b).all(|v| *v >= 0.0)
    }

    /// Whether the directed graph of positive entries is strongly connected.
    pub fn is_irreducible(&self) -> bool {
        let adj = Matrix3::from_fn(|i, j| if self.a[i][j] > 0.0 || i == j { 1.0 } else { 0.0 });
        let reach = adj * adj;
        reach.iter().all(|v| *v > 0.0)
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let mut out = self.b;
        for (i, o) in out.iter_mut().enumerate() {
            for (j, vj) in v.iter().enumerate() {
                *o += self.a[i][j] * vj;
            }
        }
        out
    }
}

fn spectral_radius3(a: &[[f64; 3]; 3]) -> f64 {
    DMatrix::from_fn(3, 3, |i, j| a[i][j])
        .complex_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Time-varying recursion pair `(A_k, B_k)` for a general schedule.
///
/// Requires `αγ_0 < 2/(μ+L)`. The `α̃_k = αγ_k` factors inside `a₁₂` and
/// `a₃₂` are evaluated at iteration `k`.
pub fn lemma1_system(pc: &ProblemConstants, sched: &Schedule, k: usize) -> Result<BoundSystem> {
    pc.validate()?;
    let alpha = sched.alpha;
    let ag0 = alpha * sched.gamma_at(0);
    if !(ag0 < 2.0 / (pc.mu + pc.ell)) {
        return Err(Error::HypothesisViolated(format!(
            "alpha*gamma_0 = {ag0} must be below 2/(mu+L) = {}",
            2.0 / (pc.mu + pc.ell)
        )));
    }
    let (mu, l, t, di2) = (pc.mu, pc.ell, pc.t_w(), pc.d_i_sq);
    let n = pc.n as f64;
    let g_k = sched.gamma_at(k);
    let g_k1 = sched.gamma_at(k + 1);
    let dg2 = (g_k - g_k1).powi(2);
    let at_k = alpha * g_k;
    let at_k1 = alpha * g_k1;
    let half = (1.0 + pc.rho_w.powi(2)) / 2.0;

    let a12 = l * l * (1.0 + at_k * mu) / (mu * n);
    let a23 = (1.0 + pc.rho_w.powi(2)) / t;
    let a31 = 32.0 * n * l.powi(4) * di2 / t;
    let a32 = 32.0 * di2 * (l * l + at_k * at_k * l.powi(4)) / t;
    let a33 = 16.0 * l * l * di2 / t;
    let a34 = 16.0 * n * l * l * di2 / t;
    let a35 = 16.0 * l * l * di2 / t;

    let a = [
        [1.0 - at_k * mu, at_k * a12, 0.0],
        [0.0, half, alpha * alpha * a23],
        [
            g_k1 * g_k1 * at_k * at_k * a31 + dg2 * a34,
            g_k1 * g_k1 * a32 + dg2 * a35,
            half + at_k1 * at_k1 * a33,
        ],
    ];

    let (v2, wo2) = (pc.norm_v_sq, pc.norm_wo_sq);
    let (se, sx) = (pc.sigma_eta_sq, pc.sigma_xi_sq);
    let b1 = alpha * alpha * v2 * se / (n * n) + v2 * sx / (n * n);
    let b2 = di2 * wo2 * sx;
    let b31 = (4.0 * di2 * se / t) * (4.0 * at_k1 * at_k1 * l * l * v2 / n + (1.0 + at_k1 * l) * wo2)
        + 4.0 * g_k1 * g_k1 * l * l * di2 * wo2 * sx / t;
    let b32 = 8.0 * di2 * pc.c_star / t;
    let beta2 = sched.beta_at(k).powi(2);
    let b = [beta2 * b1, beta2 * b2, beta2 * b31 + dg2 * b32];
    Ok(BoundSystem::new(a, b))
}

/// Iterates `v_{k+1} = A_k v_k + B_k` from `v_0`, returning `v_0..=v_K`.
pub fn propagate_bound(pc: &ProblemConstants, sched: &Schedule, v0: [f64; 3], horizon: usize) -> Result<Vec<[f64; 3]>> {
    if v0.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::OutOfRange {
            name: "initial bound",
            value: v0.iter().copied().fold(f64::INFINITY, f64::min),
            expected: "nonnegative",
        });
    }
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(v0);
    let mut v = v0;
    for k in 0..horizon {
        v = lemma1_system(pc, sched, k)?.apply(v);
        out.push(v);
    }
    Ok(out)
}

/// Constant-stepsize pair `(A, B)`; requires `α < 1/(μ+L)`.
pub fn thm3_system(pc: &ProblemConstants, alpha: f64) -> Result<BoundSystem> {
    pc.validate()?;
    if !(alpha > 0.0 && alpha < 1.0 / (pc.mu + pc.ell)) {
        return Err(Error::HypothesisViolated(format!(
            "constant stepsize alpha = {alpha} must lie in (0, 1/(mu+L) = {})",
            1.0 / (pc.mu + pc.ell)
        )));
    }
    Ok(thm3_system_unchecked(pc, alpha))
}

fn thm3_system_unchecked(pc: &ProblemConstants, alpha: f64) -> BoundSystem {
    let (mu, l, t, di2) = (pc.mu, pc.ell, pc.t_w(), pc.d_i_sq);
    let n = pc.n as f64;
    let half = (1.0 + pc.rho_w.powi(2)) / 2.0;
    let a2 = alpha * alpha;
    let a = [
        [1.0 - alpha * mu, 2.0 * alpha * l * l / (mu * n), 0.0],
        [0.0, half, 2.0 * a2 / t],
        [
            32.0 * n * a2 * l.powi(4) * di2 / t,
            64.0 * di2 * l * l / t,
            half + 16.0 * a2 * l * l * di2 / t,
        ],
    ];
    let (se, sx) = (pc.sigma_eta_sq, pc.sigma_xi_sq);
    let rw2 = pc.rho_wo.powi(2);
    let b = [
        (a2 * se + sx) * rw2,
        n * di2 * sx * rw2,
        (24.0 * n * di2 * se / t + 4.0 * n * l * l * di2 * sx / t) * rw2,
    ];
    BoundSystem::new(a, b)
}

/// Steady-state errors from `(I − A)x = B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub theta1: f64,
    pub theta2: f64,
    /// `2nθ₁ + 2θ₂`.
    pub theta: f64,
    /// Third component, the tracking-error level.
    pub theta3: f64,
}

pub fn steady_state_error(bs: &BoundSystem, n: usize) -> Result<SteadyState> {
    if !(bs.rho_a < 1.0) {
        return Err(Error::NotContractive { rho_a: bs.rho_a });
    }
    let m = Matrix3::identity() - bs.a_matrix();
    let x = m.lu().solve(&bs.b_vector()).ok_or(Error::SingularSystem)?;
    Ok(SteadyState {
        theta1: x[0],
        theta2: x[1],
        theta: 2.0 * n as f64 * x[0] + 2.0 * x[1],
        theta3: x[2],
    })
}

/// Expanded rational-function form of `θ₁`, `θ₂` in `T = 1 − ρ_w²`.
pub fn closed_form_theta(pc: &ProblemConstants, alpha: f64) -> (f64, f64) {
    let (mu, l, di2) = (pc.mu, pc.ell, pc.d_i_sq);
    let t = pc.t_w();
    let n = pc.n as f64;
    let (se, sx) = (pc.sigma_eta_sq, pc.sigma_xi_sq);
    let a = alpha;
    let di4 = di2 * di2;

    let al1 = a * a * se / 4.0 + sx / 4.0;
    let al2 = a * di2 * l * l * sx / mu;
    let al3 = -8.0 * di2 * a.powi(4) * l * l * se - 8.0 * di2 * a * a * l * l * sx;
    let al4 = -32.0 * a.powi(3) * di4 * l.powi(4) * sx / mu;
    let al5 = (96.0 * a.powi(3) * di2 * l * l / mu - 128.0 * a.powi(4) * di2 * l * l) * se
        + (16.0 * a.powi(3) * di2 * l.powi(4) / mu - 128.0 * a * a * di2 * l * l) * sx;

    let be1 = a * mu * n * di2 * sx / 2.0;
    let be2 = 0.0;
    let be3 = -16.0 * n * a.powi(3) * mu * di4 * l * l * sx;
    let be4 = (64.0 * n * a.powi(6) * di2 * l.powi(4) + 48.0 * mu * n * a.powi(3) * di2) * se
        + (64.0 * n * a.powi(4) * di2 * l.powi(4) + 8.0 * mu * n * a.powi(3) * di2 * l * l) * sx;

    let c1 = a * mu / 4.0;
    let c2 = -8.0 * a.powi(3) * mu * di2 * l * l;
    let c3 = -128.0 * a.powi(5) * di2 * l.powi(6) / mu - 128.0 * a.powi(3) * mu * di2 * l * l;

    let den = c1 * t.powi(4) + c2 * t * t + c3;
    let rw2 = pc.rho_wo.powi(2);
    let th1 = (al1 * t.powi(4) + al2 * t.powi(3) + al3 * t * t + al4 * t + al5) / den * rw2;
    let th2 = (be1 * t.powi(3) + be2 * t * t + be3 * t + be4) / den * rw2;
    (th1, th2)
}

/// Decay regime selected by the schedule exponents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayCase {
    /// `p = 0`, `q > 0`.
    ConstantGamma,
    /// `0 < p ≤ 1`, `q > p`.
    SlowDecay,
    /// `p > 1`, `q ≥ p/2`.
    FastDecay,
}

/// Predicted polynomial decay exponents: errors behave like `(m+k)^{−exponent}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayExponents {
    pub opt: f64,
    pub cons: f64,
    pub track: f64,
    /// The optimization-error bound keeps a constant floor.
    pub opt_floor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm1Check {
    pub case: DecayCase,
    pub satisfied: bool,
    /// `αγ` (case conditions are stated in terms of the product).
    pub alpha_gamma: f64,
    /// Bound on `αγ` (upper for the constant-γ case, lower for slow decay).
    pub bound: Option<StepsizeBound>,
    /// Whether `αγ_0 < 2/(μ+L)` also holds.
    pub recursion_hypothesis: bool,
    pub exponents: DecayExponents,
    pub notes: Vec<String>,
}

/// Classifies `(p, q)` into a decay regime and checks its stepsize condition.
pub fn thm1_stepsize_check(pc: &ProblemConstants, p: f64, q: f64, alpha: f64, gamma: f64) -> Result<Thm1Check> {
    pc.validate()?;
    let ag = alpha * gamma;
    let upper = 2.0 / (pc.mu + pc.ell);
    let mut notes = Vec::new();
    if p == 0.0 && q > 0.0 {
        let bound = thm1_case1_bound(pc);
        let alt = c4_arm(c41(pc), c42_cor1(pc));
        notes.push(format!(
            "binding arm: {}; the alternative c42_cor1 arm evaluates to {alt:e}",
            bound.binding
        ));
        Ok(Thm1Check {
            case: DecayCase::ConstantGamma,
            satisfied: ag < bound.value,
            alpha_gamma: ag,
            recursion_hypothesis: ag < upper,
            bound: Some(bound),
            exponents: DecayExponents {
                opt: 2.0 * q,
                cons: 2.0 * q,
                track: 2.0 * q,
                opt_floor: false,
            },
            notes,
        })
    } else if p > 0.0 && p <= 1.0 && q > p {
        let rate = (2.0 * q - p).min(2.0 * p);
        let lower = rate / pc.mu;
        let feasible = lower < upper;
        if !feasible {
            notes.push(format!(
                "the lower bound {lower:e} on alpha*gamma is not below 2/(mu+L) = {upper:e}; \
                 the recursion can only hold from some later iteration on"
            ));
        }
        Ok(Thm1Check {
            case: DecayCase::SlowDecay,
            satisfied: ag > lower,
            alpha_gamma: ag,
            recursion_hypothesis: ag < upper,
            bound: Some(StepsizeBound {
                value: lower,
                binding: "min(2q-p,2p)/mu (lower bound)".into(),
                arms: vec![Arm {
                    name: "min(2q-p,2p)/mu (lower bound)".into(),
                    value: lower,
                }],
            }),
            exponents: DecayExponents {
                opt: rate,
                cons: 2.0 * q.min(p),
                track: 2.0 * q.min(p),
                opt_floor: false,
            },
            notes,
        })
    } else if p > 1.0 && q >= p / 2.0 {
        notes.push("holds for a sufficiently large offset m, which is not computed".into());
        Ok(Thm1Check {
            case: DecayCase::FastDecay,
            satisfied: true,
            alpha_gamma: ag,
            recursion_hypothesis: ag < upper,
            bound: None,
            exponents: DecayExponents {
                opt: p,
                cons: 2.0 * q.min(p),
                track: 2.0 * q.min(p),
                opt_floor: true,
            },
            notes,
        })
    } else {
        Err(Error::NoCaseMatches { p, q })
    }
}

/// One point of a monotonicity probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub rho_w: f64,
    pub rho_wo: f64,
    pub theta: f64,
    /// Central difference `∂θ/∂ρ_w`.
    pub fd_rhow: f64,
    /// Central difference `∂θ/∂ρ(W_o)`.
    pub fd_rhowo: f64,
    pub fd_sign_rhow: i8,
    pub fd_sign_rhowo: i8,
}

/// Step of the central differences in the monotonicity probe.
pub const PROBE_FD_STEP: f64 = 1e-4;

fn theta_at(template: &ProblemConstants, alpha: f64, rho_w: f64, rho_wo: f64) -> Result<f64> {
    let pc = template.with_spectrum(rho_w, rho_wo);
    Ok(steady_state_error(&thm3_system(&pc, alpha)?, pc.n)?.theta)
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// `θ` and its finite-difference slopes at each `(ρ_w, ρ(W_o))` point.
///
/// Every point must satisfy the monotonicity stepsize condition; the first
/// point that does not is reported as [`Error::StepsizeTooLarge`].
pub fn monotonicity_probe(template: &ProblemConstants, alpha: f64, grid: &[(f64, f64)]) -> Result<Vec<ProbeRow>> {
    let h = PROBE_FD_STEP;
    grid.iter()
        .map(|&(rho_w, rho_wo)| {
            let pc = template.with_spectrum(rho_w, rho_wo);
            pc.validate()?;
            let bound = thm4_stepsize_bound(&pc).value;
            if !(alpha < bound) {
                return Err(Error::StepsizeTooLarge {
                    alpha,
                    bound,
                    rho_w,
                    rho_wo,
                });
            }
            let theta = theta_at(template, alpha, rho_w, rho_wo)?;
            let fd_rhow = (theta_at(template, alpha, rho_w + h, rho_wo)?
                - theta_at(template, alpha, rho_w - h, rho_wo)?)
                / (2.0 * h);
            let fd_rhowo = (theta_at(template, alpha, rho_w, rho_wo + h)?
                - theta_at(template, alpha, rho_w, rho_wo - h)?)
                / (2.0 * h);
            Ok(ProbeRow {
                rho_w,
                rho_wo,
                theta,
                fd_rhow,
                fd_rhowo,
                fd_sign_rhow: sign(fd_rhow),
                fd_sign_rhowo: sign(fd_rhowo),
            })
        })
        .collect()
}

/// Signs of successive differences `v[i+1] − v[i]`.
pub fn successive_signs(values: &[f64]) -> Vec<i8> {
    values.windows(2).map(|w| sign(w[1] - w[0])).collect()
}
