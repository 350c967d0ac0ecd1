//! Least-squares fits for decay exponents and linear rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default fraction of leading iterations discarded before fitting.
pub const DEFAULT_BURN_IN: f64 = 0.2;
/// Fewest points a fit will accept after burn-in and filtering.
pub const MIN_FIT_POINTS: usize = 10;

/// Ordinary least-squares line `y ≈ intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
    pub points: usize,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} abscissae, {} ordinates", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("{n} points, need at least 3")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    let slope_stderr = (sse / (nf - 2.0) / sxx).sqrt();
    Ok(LinearFit {
        slope,
        intercept,
        slope_stderr,
        r_squared,
        points: n,
    })
}

fn post_burn_in(len: usize, burn_in: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&burn_in) {
        return Err(Error::OutOfRange {
            name: "burn_in",
            value: burn_in,
            expected: "0 <= burn_in < 1",
        });
    }
    Ok((len as f64 * burn_in).floor() as usize)
}

/// Slope of `log e_k` against `log(m + k)` after discarding the first
/// `burn_in` fraction; nonpositive entries are skipped. A sequence decaying
/// like `(m+k)^{−a}` yields slope `−a`.
pub fn fit_decay_exponent(errors: &[f64], m: f64, burn_in: f64) -> Result<LinearFit> {
    let start = post_burn_in(errors.len(), burn_in)?;
    let (x, y): (Vec<f64>, Vec<f64>) = errors
        .iter()
        .enumerate()
        .skip(start)
        .filter(|(_, e)| **e > 0.0 && e.is_finite())
        .map(|(k, e)| ((m + k as f64).ln(), e.ln()))
        .unzip();
    if x.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} usable points after burn-in, need {MIN_FIT_POINTS}",
            x.len()
        )));
    }
    linear_fit(&x, &y)
}

/// Slope of `log e_k` against `k` after burn-in, using only entries above
/// `floor` (to exclude the round-off plateau of an exactly converging run).
/// A geometric sequence `c·ρ^k` yields slope `ln ρ`.
pub fn fit_linear_rate(errors: &[f64], burn_in: f64, floor: f64) -> Result<LinearFit> {
    let start = post_burn_in(errors.len(), burn_in)?;
    let (x, y): (Vec<f64>, Vec<f64>) = errors
        .iter()
        .enumerate()
        .skip(start)
        .filter(|(_, e)| **e > floor && e.is_finite())
        .map(|(k, e)| (k as f64, e.ln()))
        .unzip();
    if x.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} usable points above {floor:e} after burn-in, need {MIN_FIT_POINTS}",
            x.len()
        )));
    }
    linear_fit(&x, &y)
}

/// Mean of the last `fraction` of a sequence.
pub fn tail_mean(values: &[f64], fraction: f64) -> f64 {
    let count = ((values.len() as f64 * fraction).ceil() as usize).clamp(1, values.len().max(1));
    let tail = &values[values.len() - count..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_power_law() {
        let m = 3.0;
        let e: Vec<f64> = (0..5000).map(|k| (m + k as f64).powf(-0.6)).collect();
        let fit = fit_decay_exponent(&e, m, DEFAULT_BURN_IN).unwrap();
        assert!((fit.slope + 0.6).abs() < 1e-9);
        assert!(fit.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn exact_geometric() {
        let e: Vec<f64> = (0..400).map(|k| 5.0 * 0.97f64.powi(k)).collect();
        let fit = fit_linear_rate(&e, 0.2, 0.0).unwrap();
        assert!((fit.slope - 0.97f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn floor_excludes_roundoff() {
        let mut e: Vec<f64> = (0..200).map(|k| 0.5f64.powi(k)).collect();
        for v in e.iter_mut().skip(100) {
            *v = 1e-31;
        }
        let fit = fit_linear_rate(&e, 0.0, 1e-25).unwrap();
        assert!((fit.slope - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn too_short_is_rejected() {
        assert!(matches!(
            fit_decay_exponent(&[1.0, 0.5, 0.3], 1.0, 0.2),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            fit_decay_exponent(&[0.0; 100], 1.0, 0.2),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn tail_mean_of_constant_tail() {
        let v: Vec<f64> = (0..10).map(|k| if k < 5 { 100.0 } else { 2.0 }).collect();
        assert_eq!(tail_mean(&v, 0.5), 2.0);
    }

    proptest! {
        #[test]
        fn recovers_exponent(a in 0.05f64..3.0, c in 0.01f64..100.0, m in 0.5f64..20.0) {
            let e: Vec<f64> = (0..300).map(|k| c * (m + k as f64).powf(-a)).collect();
            let fit = fit_decay_exponent(&e, m, 0.2).unwrap();
            prop_assert!((fit.slope + a).abs() < 1e-9);
        }
    }
}
