//! Per-agent objective families with gradient oracles and their constants.
//!
//! Two families are provided: a rendezvous problem `f_i(x) = ‖x − a_i‖²` with a
//! private target per agent, and a regularized least-squares (ridge) problem
//! `f_i(x) = (u_iᵀx − v_i)² + ρ‖x‖²` with synthetic seeded data. Each
//! [`ObjectiveSet`] carries the strong-convexity modulus `mu`, the gradient
//! Lipschitz constant `ell`, a gradient bound `c_bound` on its domain box, and
//! the exact minimizer of the average objective.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard deviation of the label noise in synthetic ridge data.
pub const RIDGE_NOISE_STD: f64 = 25.0;
/// Half-width of the default ridge domain box `[−20, 20]ʳ`.
pub const RIDGE_BOX_HALF_WIDTH: f64 = 20.0;

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    }

    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    /// Uniform sample from the box.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| l + (h - l) * rng.random::<f64>())
            .collect()
    }
}

/// Which family an [`ObjectiveSet`] belongs to, with its data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Rendezvous {
        targets: Vec<Vec<f64>>,
    },
    Ridge {
        features: Vec<Vec<f64>>,
        labels: Vec<f64>,
        rho_pen: f64,
        /// Generating data, kept when the instance was synthesized.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        synthetic: Option<RidgeProvenance>,
    },
}

/// Latent parameters and noise behind a synthetic ridge instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeProvenance {
    pub seed: u64,
    pub x_tilde: Vec<Vec<f64>>,
    pub zeta: Vec<f64>,
}

/// n per-agent objectives on `ℝʳ` with their analytic constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSet {
    pub n: usize,
    pub r: usize,
    pub mu: f64,
    pub ell: f64,
    pub c_bound: f64,
    pub x_star: Vec<f64>,
    pub domain_box: DomainBox,
    pub family: Family,
}

impl ObjectiveSet {
    /// Rendezvous with per-agent targets; `mu = ell = 2`, `x* = mean(a_i)`.
    ///
    /// The domain box is the targets' bounding box with each half-width grown
    /// by 50% (at least 1), and `c_bound` is the largest gradient norm over it,
    /// attained at a box corner.
    pub fn rendezvous(targets: Vec<Vec<f64>>) -> Result<Self> {
        if targets.len() < 2 {
            return Err(Error::EmptyTargets);
        }
        let r = targets[0].len();
        if r == 0 || targets.iter().any(|a| a.len() != r) {
            return Err(Error::DimensionMismatch(
                "all targets must share one nonzero dimension".into(),
            ));
        }
        let n = targets.len();
        let mut lo = vec![f64::INFINITY; r];
        let mut hi = vec![f64::NEG_INFINITY; r];
        for a in &targets {
            for j in 0..r {
                lo[j] = lo[j].min(a[j]);
                hi[j] = hi[j].max(a[j]);
            }
        }
        for j in 0..r {
            let mid = 0.5 * (lo[j] + hi[j]);
            let half = (0.75 * (hi[j] - lo[j])).max(1.0);
            lo[j] = mid - half;
            hi[j] = mid + half;
        }
        let c_bound = targets
            .iter()
            .map(|a| {
                2.0 * (0..r)
                    .map(|j| (a[j] - lo[j]).abs().max((hi[j] - a[j]).abs()).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        let x_star = (0..r)
            .map(|j| targets.iter().map(|a| a[j]).sum::<f64>() / n as f64)
            .collect();
        Ok(Self {
            n,
            r,
            mu: 2.0,
            ell: 2.0,
            c_bound,
            x_star,
            domain_box: DomainBox { lo, hi },
            family: Family::Rendezvous { targets },
        })
    }

    /// Synthetic ridge instance: `u_i ~ U[−1,1]ʳ`, `x̃_i ~ U[0,10]ʳ`,
    /// `ζ_i ~ N(0, 25²)`, `v_i = u_iᵀx̃_i + ζ_i`. Deterministic in `seed`.
    pub fn ridge(n: usize, r: usize, rho_pen: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, RIDGE_NOISE_STD).expect("valid normal");
        let mut features = Vec::with_capacity(n);
        let mut x_tilde = Vec::with_capacity(n);
        let mut zeta = Vec::with_capacity(n);
        for _ in 0..n {
            features.push((0..r).map(|_| rng.random_range(-1.0..=1.0)).collect::<Vec<f64>>());
            x_tilde.push((0..r).map(|_| rng.random_range(0.0..=10.0)).collect::<Vec<f64>>());
            zeta.push(normal.sample(&mut rng));
        }
        let labels = (0..n)
            .map(|i| dot(&features[i], &x_tilde[i]) + zeta[i])
            .collect();
        Self::ridge_from_data(
            features,
            labels,
            rho_pen,
            Some(RidgeProvenance {
                seed,
                x_tilde,
                zeta,
            }),
        )
    }

    /// Ridge instance from explicit features `u_i` and labels `v_i`.
    ///
    /// `x*` solves `(Σu_iu_iᵀ + nρI)x = Σu_i v_i`; `mu = 2ρ`,
    /// `ell = 2(maxᵢ‖u_i‖² + ρ)`, domain `[−20, 20]ʳ`, and
    /// `c_bound = maxᵢ ‖∇f_i(center)‖ + ell·diam/2`.
    pub fn ridge_from_data(
        features: Vec<Vec<f64>>,
        labels: Vec<f64>,
        rho_pen: f64,
        synthetic: Option<RidgeProvenance>,
    ) -> Result<Self> {
        if !(rho_pen > 0.0) {
            return Err(Error::OutOfRange {
                name: "rho_pen",
                value: rho_pen,
                expected: "rho_pen > 0",
            });
        }
        let n = features.len();
        if n == 0 || labels.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} feature vectors, {} labels",
                labels.len()
            )));
        }
        let r = features[0].len();
        if r == 0 || features.iter().any(|u| u.len() != r) {
            return Err(Error::DimensionMismatch(
                "all feature vectors must share one nonzero dimension".into(),
            ));
        }
        let x_star = ridge_normal_equations(&features, &labels, rho_pen)?;
        let max_u_sq = features.iter().map(|u| dot(u, u)).fold(0.0, f64::max);
        let mut set = Self {
            n,
            r,
            mu: 2.0 * rho_pen,
            ell: 2.0 * (max_u_sq + rho_pen),
            c_bound: 0.0,
            x_star,
            domain_box: DomainBox {
                lo: vec![-RIDGE_BOX_HALF_WIDTH; r],
                hi: vec![RIDGE_BOX_HALF_WIDTH; r],
            },
            family: Family::Ridge {
                features,
                labels,
                rho_pen,
                synthetic,
            },
        };
        let center = set.domain_box.center();
        let half_diam = 0.5 * set.domain_box.diameter();
        set.c_bound = (0..n)
            .map(|i| norm(&set.grad(i, &center)) + set.ell * half_diam)
            .fold(0.0, f64::max);
        Ok(set)
    }

    /// `f_i(x)`.
    pub fn value(&self, i: usize, x: &[f64]) -> f64 {
        match &self.family {
            Family::Rendezvous { targets } => x
                .iter()
                .zip(&targets[i])
                .map(|(xj, aj)| (xj - aj).powi(2))
                .sum(),
            Family::Ridge {
                features,
                labels,
                rho_pen,
                ..
            } => (dot(&features[i], x) - labels[i]).powi(2) + rho_pen * dot(x, x),
        }
    }

    /// `(1/n) Σ f_i(x)`.
    pub fn global_value(&self, x: &[f64]) -> f64 {
        (0..self.n).map(|i| self.value(i, x)).sum::<f64>() / self.n as f64
    }

    /// Writes `∇f_i(x)` into `out`.
    pub fn grad_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        match &self.family {
            Family::Rendezvous { targets } => {
                for ((o, xj), aj) in out.iter_mut().zip(x).zip(&targets[i]) {
                    *o = 2.0 * (xj - aj);
                }
            }
            Family::Ridge {
                features,
                labels,
                rho_pen,
                ..
            } => {
                let u = &features[i];
                let resid = dot(u, x) - labels[i];
                for ((o, xj), uj) in out.iter_mut().zip(x).zip(u) {
                    *o = 2.0 * uj * resid + 2.0 * rho_pen * xj;
                }
            }
        }
    }

    pub fn grad(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.r];
        self.grad_into(i, x, &mut out);
        out
    }

    /// `(1/n) Σ ∇f_i(x)`.
    pub fn global_grad(&self, x: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.r];
        for i in 0..self.n {
            for (a, g) in acc.iter_mut().zip(self.grad(i, x)) {
                *a += g / self.n as f64;
            }
        }
        acc
    }

    /// Stacked gradient `∇F(X)`: row i is `∇f_i` at row i of `x` (n×r).
    pub fn grad_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.r);
        let mut row = vec![0.0; self.r];
        let mut g = vec![0.0; self.r];
        for i in 0..self.n {
            for j in 0..self.r {
                row[j] = x[(i, j)];
            }
            self.grad_into(i, &row, &mut g);
            for j in 0..self.r {
                out[(i, j)] = g[j];
            }
        }
        out
    }

    /// `Σᵢ ‖∇f_i(x*)‖²`.
    pub fn c_star(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let g = self.grad(i, &self.x_star);
                dot(&g, &g)
            })
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("objective set serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Radial projection onto the ball of radius `c_bound`.
pub fn clip_gradient(g: &[f64], c_bound: f64) -> Vec<f64> {
    let nrm = norm(g);
    if nrm <= c_bound {
        g.to_vec()
    } else {
        g.iter().map(|x| x * (c_bound / nrm)).collect()
    }
}

/// Max component deviation between central differences and `∇f_i(x)`.
pub fn finite_difference_check(obj: &ObjectiveSet, i: usize, x: &[f64], h: f64) -> f64 {
    let g = obj.grad(i, x);
    let mut xp = x.to_vec();
    let mut worst: f64 = 0.0;
    for j in 0..x.len() {
        xp[j] = x[j] + h;
        let fp = obj.value(i, &xp);
        xp[j] = x[j] - h;
        let fm = obj.value(i, &xp);
        xp[j] = x[j];
        worst = worst.max(((fp - fm) / (2.0 * h) - g[j]).abs());
    }
    worst
}

/// `(Σu_iu_iᵀ + nρI)⁻¹ Σu_iu_iᵀx̃_i`, the noiseless-label optimum.
pub fn ridge_noiseless_optimum(
    features: &[Vec<f64>],
    x_tilde: &[Vec<f64>],
    rho_pen: f64,
) -> Result<Vec<f64>> {
    let labels: Vec<f64> = features
        .iter()
        .zip(x_tilde)
        .map(|(u, xt)| dot(u, xt))
        .collect();
    ridge_normal_equations(features, &labels, rho_pen)
}

fn ridge_normal_equations(features: &[Vec<f64>], labels: &[f64], rho_pen: f64) -> Result<Vec<f64>> {
    let n = features.len();
    let r = features[0].len();
    let mut lhs = DMatrix::identity(r, r) * (n as f64 * rho_pen);
    let mut rhs = DVector::zeros(r);
    for (u, v) in features.iter().zip(labels) {
        let uv = DVector::from_column_slice(u);
        lhs += &uv * uv.transpose();
        rhs += &uv * *v;
    }
    let sol = lhs.cholesky().ok_or(Error::SingularSystem)?.solve(&rhs);
    Ok(sol.iter().copied().collect())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rendezvous_examples() {
        let o = ObjectiveSet::rendezvous(vec![vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(o.x_star, vec![1.0]);

        let o = ObjectiveSet::rendezvous(vec![vec![3.0, 3.0]; 4]).unwrap();
        assert_eq!(o.x_star, vec![3.0, 3.0]);
        assert!(o.c_star() == 0.0);

        let o = ObjectiveSet::rendezvous(vec![vec![0.0], vec![3.0], vec![6.0]]).unwrap();
        assert_eq!(o.x_star, vec![3.0]);
        assert!((o.global_value(&[3.0]) - 6.0).abs() < 1e-15);

        assert!(matches!(
            ObjectiveSet::rendezvous(vec![vec![1.0]]).unwrap_err(),
            Error::EmptyTargets
        ));
    }

    #[test]
    fn rendezvous_gradient_step_reaches_optimum() {
        let o = ObjectiveSet::rendezvous(vec![vec![1.0, -2.0], vec![4.0, 0.5], vec![-3.0, 7.0]]).unwrap();
        let x = vec![10.0, -10.0];
        let g = o.global_grad(&x);
        for j in 0..2 {
            assert!((g[j] - 2.0 * (x[j] - o.x_star[j])).abs() < 1e-12);
        }
        let next: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - 0.5 * b).collect();
        for j in 0..2 {
            assert!((next[j] - o.x_star[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn ridge_optimum_is_stationary() {
        let o = ObjectiveSet::ridge(4, 2, 0.1, 7).unwrap();
        assert!(norm(&o.global_grad(&o.x_star)) < 1e-9);
    }

    #[test]
    fn ridge_pure_penalty() {
        let o = ObjectiveSet::ridge_from_data(vec![vec![0.0, 0.0]], vec![3.0], 0.5, None).unwrap();
        assert_eq!(o.x_star, vec![0.0, 0.0]);
    }

    #[test]
    fn ridge_zero_noise_matches_noiseless_formula() {
        let o = ObjectiveSet::ridge(6, 3, 0.2, 9).unwrap();
        let Family::Ridge { features, rho_pen, synthetic: Some(prov), .. } = &o.family else {
            panic!("expected synthetic ridge");
        };
        let labels: Vec<f64> = features.iter().zip(&prov.x_tilde).map(|(u, x)| dot(u, x)).collect();
        let clean = ObjectiveSet::ridge_from_data(features.clone(), labels, *rho_pen, None).unwrap();
        let formula = ridge_noiseless_optimum(features, &prov.x_tilde, *rho_pen).unwrap();
        for j in 0..3 {
            assert!((clean.x_star[j] - formula[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn ridge_is_reproducible() {
        let a = ObjectiveSet::ridge(5, 3, 0.1, 42).unwrap();
        let b = ObjectiveSet::ridge(5, 3, 0.1, 42).unwrap();
        assert_eq!(a, b);
        let c = ObjectiveSet::ridge(5, 3, 0.1, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn ridge_rejects_nonpositive_penalty() {
        assert!(ObjectiveSet::ridge(3, 2, 0.0, 1).is_err());
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip_gradient(&[3.0, 4.0], 10.0), vec![3.0, 4.0]);
        assert_eq!(clip_gradient(&[3.0, 4.0], 5.0), vec![3.0, 4.0]);
        let c = clip_gradient(&[6.0, 8.0], 5.0);
        assert!((c[0] - 3.0).abs() < 1e-15 && (c[1] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn finite_differences() {
        let rv = ObjectiveSet::rendezvous(vec![vec![0.5, 1.0], vec![-2.0, 3.0]]).unwrap();
        assert!(finite_difference_check(&rv, 1, &[0.3, -0.7], 1e-5) < 1e-8);
        let rd = ObjectiveSet::ridge(4, 3, 0.1, 3).unwrap();
        assert!(finite_difference_check(&rd, 2, &[1.5, -4.0, 2.2], 1e-5) < 1e-6);
        assert!(finite_difference_check(&rd, 2, &[1.5, -4.0, 2.2], 1e-1) < 1e-6);
    }

    #[test]
    fn json_round_trip() {
        let o = ObjectiveSet::ridge(4, 2, 0.1, 1).unwrap();
        assert_eq!(ObjectiveSet::from_json(&o.to_json()).unwrap(), o);
    }

    fn check_assumptions(o: &ObjectiveSet, seed: u64, pairs: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..pairs {
            let x = o.domain_box.sample(&mut rng);
            let y = o.domain_box.sample(&mut rng);
            let d: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let dd = dot(&d, &d);
            for i in 0..o.n {
                let gx = o.grad(i, &x);
                let gy = o.grad(i, &y);
                let dg: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a - b).collect();
                assert!(dot(&dg, &d) >= o.mu * dd * (1.0 - 1e-12) - 1e-12);
                assert!(norm(&dg) <= o.ell * dd.sqrt() * (1.0 + 1e-12) + 1e-12);
                assert!(norm(&gx) <= o.c_bound * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn assumptions_hold_on_random_pairs() {
        check_assumptions(&ObjectiveSet::ridge(4, 2, 0.1, 7).unwrap(), 1, 10_000);
        check_assumptions(
            &ObjectiveSet::rendezvous(vec![vec![0.0, 1.0], vec![5.0, -2.0], vec![2.0, 2.0]]).unwrap(),
            2,
            10_000,
        );
    }

    proptest! {
        #[test]
        fn ridge_constants_valid(n in 1usize..8, r in 1usize..5, rho in 0.01f64..2.0, seed in any::<u64>()) {
            let o = ObjectiveSet::ridge(n, r, rho, seed).unwrap();
            prop_assert!(o.mu > 0.0 && o.mu <= o.ell);
            prop_assert!(norm(&o.global_grad(&o.x_star)) < 1e-9 * (1.0 + o.c_bound));
            check_assumptions(&o, seed ^ 0x5eed, 50);
        }

        #[test]
        fn clip_never_exceeds_bound(g in proptest::collection::vec(-100.0f64..100.0, 1..6), c in 0.01f64..50.0) {
            prop_assert!(norm(&clip_gradient(&g, c)) <= c * (1.0 + 1e-12));
        }
    }
}
