//! Coupling matrices and their spectral quantities.
//!
//! A [`WeightMatrix`] is a validated symmetric, doubly stochastic, non-negative
//! matrix with a positive diagonal whose off-diagonal support is connected.
//! [`SpectralProfile`] collects every spectral number the convergence and
//! steady-state formulas consume.
//!
//! Matrix norms of n×r state matrices follow the column-stacked convention:
//! the 2-norm of the vector of column 2-norms, i.e. the Frobenius norm. Under
//! it `‖I − 11ᵀ/n‖² = n − 1` and `‖W_o‖²` is the sum of squared entries.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;
const EDGE_TOL: f64 = 1e-15;

/// A validated inter-agent coupling matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    w: DMatrix<f64>,
}

/// Spectral summary of a [`WeightMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralProfile {
    /// Spectral radius of `W − 11ᵀ/n`.
    pub rho_w: f64,
    /// Spectral radius of the off-diagonal part `W_o`.
    pub rho_wo: f64,
    /// `‖I − 11ᵀ/n‖² = n − 1`.
    pub d_i_sq: f64,
    /// `‖W_o‖²`, sum of squared off-diagonal entries.
    pub norm_wo_sq: f64,
    /// `‖v‖²` with `v = W_oᵀ1`.
    pub norm_v_sq: f64,
    /// `‖W − I‖²`, sum of squared entries of `W − I`.
    pub norm_w_minus_i_sq: f64,
}

impl WeightMatrix {
    /// Validates a dense matrix against the coupling assumptions.
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = w.shape();
        if rows != cols || rows < 2 {
            return Err(Error::NotSquare { rows, cols });
        }
        let n = rows;
        for i in 0..n {
            for j in 0..n {
                let value = w[(i, j)];
                if !value.is_finite() || value < 0.0 {
                    return Err(Error::NegativeEntry { i, j, value });
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let gap = (w[(i, j)] - w[(j, i)]).abs();
                if gap > STOCHASTIC_TOL {
                    return Err(Error::NotSymmetric { i, j, gap });
                }
            }
        }
        for i in 0..n {
            let sum = w.row(i).sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NotDoublyStochastic {
                    kind: "row",
                    index: i,
                    sum,
                });
            }
            let sum = w.column(i).sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NotDoublyStochastic {
                    kind: "column",
                    index: i,
                    sum,
                });
            }
        }
        for i in 0..n {
            if w[(i, i)] <= 0.0 {
                return Err(Error::NonPositiveDiagonal {
                    i,
                    value: w[(i, i)],
                });
            }
        }
        if let Some(unreached) = first_unreachable(&w) {
            return Err(Error::Disconnected { unreached });
        }
        Ok(Self { w })
    }

    /// Builds from row-major rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::NotSquare {
                rows: n,
                cols: rows.first().map_or(0, Vec::len),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(n, n, &flat))
    }

    /// Parses a JSON dense row-major array (`[[w11, w12, ...], ...]`).
    pub fn from_json(text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = serde_json::from_str(text)?;
        Self::from_rows(&rows)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_rows()).expect("finite matrix serializes")
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| self.w.row(i).iter().copied().collect())
            .collect()
    }

    /// The rank-one averaging matrix `11ᵀ/n`.
    pub fn averaging(n: usize) -> Result<Self> {
        Self::new(DMatrix::from_element(n, n, 1.0 / n as f64))
    }

    /// Four agents on a ring with alternating edge weights `r·d` and `r·(1−d)`.
    ///
    /// `ρ(W_o) = r` for every admissible pair; `ρ_w` is given by
    /// [`ring_rho_w`].
    pub fn ring(r: f64, d: f64) -> Result<Self> {
        if !(r > 0.0 && r <= 0.5) {
            return Err(Error::OutOfRange {
                name: "ring r",
                value: r,
                expected: "0 < r <= 0.5",
            });
        }
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::OutOfRange {
                name: "ring d",
                value: d,
                expected: "0 < d < 1",
            });
        }
        let a = r * d;
        let b = r * (1.0 - d);
        let c = 1.0 - r;
        #[rustfmt::skip]
        let w = DMatrix::from_row_slice(4, 4, &[
            c, a, 0.0, b,
            a, c, b, 0.0,
            0.0, b, c, a,
            b, 0.0, a, c,
        ]);
        Self::new(w)
    }

    /// Ring matrix with prescribed `ρ(W_o)` and `ρ_w`, taking `d ≤ 1/2`.
    pub fn ring_with_spectrum(rho_wo: f64, rho_w: f64) -> Result<Self> {
        if !(rho_w >= 1.0 - rho_wo && rho_w < 1.0) {
            return Err(Error::OutOfRange {
                name: "ring rho_w",
                value: rho_w,
                expected: "1 - rho_wo <= rho_w < 1",
            });
        }
        let d = (1.0 - rho_w) / (2.0 * rho_wo);
        Self::ring(rho_wo, d)
    }

    /// Metropolis–Hastings weights on an undirected edge list.
    pub fn metropolis(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut degree = vec![0usize; n];
        for &(i, j) in edges {
            if i >= n || j >= n || i == j {
                return Err(Error::IndexError(format!("edge ({i}, {j}) for n = {n}")));
            }
            degree[i] += 1;
            degree[j] += 1;
        }
        let mut w = DMatrix::zeros(n, n);
        for &(i, j) in edges {
            let weight = 1.0 / (1.0 + degree[i].max(degree[j]) as f64);
            w[(i, j)] = weight;
            w[(j, i)] = weight;
        }
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
            w[(i, i)] = 1.0 - off;
        }
        Self::new(w)
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.w[(i, i)]).collect()
    }

    /// `W` with its diagonal zeroed.
    pub fn off_diagonal(&self) -> DMatrix<f64> {
        let mut wo = self.w.clone();
        wo.fill_diagonal(0.0);
        wo
    }

    /// `W − 11ᵀ/n`.
    pub fn deviation(&self) -> DMatrix<f64> {
        let n = self.n();
        self.w.map(|x| x - 1.0 / n as f64)
    }

    /// Relabels agents: entry `(i, j)` of the result is `w[perm[i]][perm[j]]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        if perm.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "permutation of length {} for n = {n}",
                perm.len()
            )));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| self.w[(perm[i], perm[j])]))
    }

    pub fn spectral_profile(&self) -> SpectralProfile {
        let n = self.n();
        let wo = self.off_diagonal();
        let v = wo.transpose() * DVector::from_element(n, 1.0);
        let mut w_minus_i = self.w.clone();
        for i in 0..n {
            w_minus_i[(i, i)] -= 1.0;
        }
        SpectralProfile {
            rho_w: symmetric_spectral_radius(&self.deviation()),
            rho_wo: symmetric_spectral_radius(&wo),
            d_i_sq: (n - 1) as f64,
            norm_wo_sq: wo.norm_squared(),
            norm_v_sq: v.norm_squared(),
            norm_w_minus_i_sq: w_minus_i.norm_squared(),
        }
    }
}

/// `ρ_w` of the four-agent ring in closed form: `1 − 2r·min(d, 1−d)` for `r ≤ 1/2`.
///
/// The ring's spectrum is `{1, 1−2r, 1−2rd, 1−2r(1−d)}`.
pub fn ring_rho_w(r: f64, d: f64) -> f64 {
    (1.0 - 2.0 * r * d.min(1.0 - d)).max((1.0 - 2.0 * r).abs())
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn symmetric_spectral_radius(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, &l| acc.max(l.abs()))
}

/// Spectral radius by power iteration on `mᵀm` (cross-check for symmetric input).
pub fn power_iteration_radius(m: &DMatrix<f64>, max_iter: usize, tol: f64) -> f64 {
    let n = m.nrows();
    let gram = m.transpose() * m;
    // deterministic start with no special alignment to the all-ones direction
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.37 * (i as f64 + 1.0).sin());
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let next = &gram * &v;
        let norm = next.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let updated = norm;
        v = next / norm;
        if (updated - lambda).abs() <= tol * updated.max(1.0) {
            lambda = updated;
            break;
        }
        lambda = updated;
    }
    lambda.sqrt()
}

fn first_unreachable(w: &DMatrix<f64>) -> Option<usize> {
    let n = w.nrows();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if j != i && !seen[j] && w[(i, j)] > EDGE_TOL {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen.iter().position(|&s| !s)
}
