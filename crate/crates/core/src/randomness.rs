//! Seeded noise streams, the Laplace mechanism, and stepsize schedules.
//!
//! Every Laplace draw is addressed by `(run id, iteration, channel, agent,
//! coordinate)`. The tuple maps to a fixed position in a ChaCha keystream
//! keyed by the master seed, so a draw can be regenerated in isolation and
//! agents may be evaluated in any order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stepsize and noise-attenuation schedule.
///
/// `γ_k = γ/(m+k)^p` scales gradients, `β_k = 1/(m+k)^q` scales the injected
/// noise, and `α` is the constant consensus-side stepsize.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub alpha: f64,
    pub gamma: f64,
    pub p: f64,
    pub q: f64,
    pub m: f64,
}

impl Schedule {
    /// Constant stepsize `α` with `γ_k = β_k = 1`.
    pub fn constant(alpha: f64) -> Self {
        Self {
            alpha,
            gamma: 1.0,
            p: 0.0,
            q: 0.0,
            m: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(&'static str, f64, bool, &'static str); 5] = [
            ("alpha", self.alpha, self.alpha > 0.0, "alpha > 0"),
            ("gamma", self.gamma, self.gamma > 0.0, "gamma > 0"),
            ("p", self.p, self.p >= 0.0, "p >= 0"),
            ("q", self.q, self.q >= 0.0, "q >= 0"),
            ("m", self.m, self.m > 0.0, "m > 0"),
        ];
        for (name, value, ok, expected) in checks {
            if !ok || !value.is_finite() {
                return Err(Error::OutOfRange {
                    name,
                    value,
                    expected,
                });
            }
        }
        Ok(())
    }

    pub fn gamma_at(&self, k: usize) -> f64 {
        if self.p == 0.0 {
            self.gamma
        } else {
            self.gamma / (self.m + k as f64).powf(self.p)
        }
    }

    pub fn beta_at(&self, k: usize) -> f64 {
        if self.q == 0.0 {
            1.0
        } else {
            (self.m + k as f64).powf(-self.q)
        }
    }
}

/// Laplace scales for the two injected noise channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Scale of the tracker-channel noise `η`.
    pub b_eta: f64,
    /// Scale of the decision-channel noise `ξ`.
    pub b_xi: f64,
}

impl NoiseParams {
    pub fn zero() -> Self {
        Self {
            b_eta: 0.0,
            b_xi: 0.0,
        }
    }

    /// Scales whose i.i.d. n×r matrix second moments equal the given values.
    pub fn from_variances(sigma_eta_sq: f64, sigma_xi_sq: f64, n: usize, r: usize) -> Self {
        let cells = 2.0 * (n * r) as f64;
        Self {
            b_eta: (sigma_eta_sq / cells).sqrt(),
            b_xi: (sigma_xi_sq / cells).sqrt(),
        }
    }

    /// `E‖η‖² = 2nr·b_η²` for an n×r matrix of i.i.d. `Lap(b_η)` entries.
    pub fn sigma_eta_sq(&self, n: usize, r: usize) -> f64 {
        2.0 * (n * r) as f64 * self.b_eta * self.b_eta
    }

    pub fn sigma_xi_sq(&self, n: usize, r: usize) -> f64 {
        2.0 * (n * r) as f64 * self.b_xi * self.b_xi
    }

    pub fn is_zero(&self) -> bool {
        self.b_eta == 0.0 && self.b_xi == 0.0
    }
}

/// Which quantity a draw feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    /// Noise added to shared trackers.
    Eta = 0,
    /// Noise added to shared decision variables.
    Xi = 1,
    /// Uniform draws for the initial decision variables.
    Init = 2,
}

const CHANNELS: u64 = 3;

/// Run id reserved for run-independent draws (the shared initial state).
pub const SHARED_RUN: u64 = u64::MAX;

/// Counter-addressed random source for one run.
#[derive(Debug, Clone)]
pub struct NoiseStreams {
    rng: ChaCha8Rng,
    n: usize,
    r: usize,
}

impl NoiseStreams {
    pub fn new(master_seed: u64, run_id: u64, n: usize, r: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(run_id);
        Self { rng, n, r }
    }

    fn index(&self, k: usize, channel: Channel, agent: usize, coord: usize) -> u128 {
        let block = k as u128 * CHANNELS as u128 + channel as u128;
        (block * self.n as u128 + agent as u128) * self.r as u128 + coord as u128
    }

    fn seek(&mut self, index: u128) {
        // each u64 consumes two 32-bit keystream words
        self.rng.set_word_pos(index * 2);
    }

    /// Raw 64-bit word at `(k, channel, agent, coord)`.
    pub fn raw(&mut self, k: usize, channel: Channel, agent: usize, coord: usize) -> u64 {
        let idx = self.index(k, channel, agent, coord);
        self.seek(idx);
        self.rng.next_u64()
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self, k: usize, channel: Channel, agent: usize, coord: usize) -> f64 {
        open_unit(self.raw(k, channel, agent, coord))
    }

    /// One `Lap(b)` draw.
    pub fn laplace(&mut self, b: f64, k: usize, channel: Channel, agent: usize, coord: usize) -> f64 {
        laplace_from_unit(b, self.uniform(k, channel, agent, coord))
    }

    /// Fills a row-major n×r block of `Lap(b)` draws for iteration `k`.
    pub fn laplace_block(&mut self, b: f64, k: usize, channel: Channel, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n * self.r);
        let idx = self.index(k, channel, 0, 0);
        self.seek(idx);
        for slot in out.iter_mut() {
            *slot = laplace_from_unit(b, open_unit(self.rng.next_u64()));
        }
    }

    /// Fills a row-major n×r block of uniforms in (0, 1) for iteration `k`.
    pub fn uniform_block(&mut self, k: usize, channel: Channel, out: &mut [f64]) {
        let idx = self.index(k, channel, 0, 0);
        self.seek(idx);
        for slot in out.iter_mut() {
            *slot = open_unit(self.rng.next_u64());
        }
    }
}

fn open_unit(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn laplace_from_unit(b: f64, unit: f64) -> f64 {
    let u = unit - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Inverse-CDF `Lap(b)` sample from any generator.
pub fn laplace_sample<R: RngCore + ?Sized>(b: f64, rng: &mut R) -> f64 {
    laplace_from_unit(b, open_unit(rng.random::<u64>()))
}

/// Laplace CDF with scale `b` and zero location.
pub fn laplace_cdf(x: f64, b: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / b).exp()
    } else {
        1.0 - 0.5 * (-x / b).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn schedule_examples() {
        let s = Schedule {
            alpha: 0.1,
            gamma: 3.0,
            p: 0.0,
            q: 0.0,
            m: 1.0,
        };
        assert_eq!(s.gamma_at(0), 3.0);
        assert_eq!(s.gamma_at(1000), 3.0);

        let s = Schedule {
            alpha: 0.06,
            gamma: 2.0,
            p: 1.1,
            q: 0.05,
            m: 1.0,
        };
        assert_eq!(s.gamma_at(0), 2.0);
        assert!((s.beta_at(3) - 0.933_032_991_536_807_4).abs() < 1e-12);
    }

    #[test]
    fn laplace_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = laplace_sample(1.0, &mut rng);
            s1 += x;
            s2 += x * x;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((var - 2.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn laplace_abs_median() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut v: Vec<f64> = (0..200_001)
            .map(|_| laplace_sample(0.5, &mut rng).abs())
            .collect();
        v.sort_by(f64::total_cmp);
        let median = v[v.len() / 2];
        let expect = 0.5 * std::f64::consts::LN_2;
        assert!((median / expect - 1.0).abs() < 0.02);
    }

    #[test]
    fn kolmogorov_smirnov() {
        let mut s = NoiseStreams::new(9, 0, 1, 1);
        let n = 100_000;
        let mut v: Vec<f64> = (0..n).map(|k| s.laplace(1.3, k, Channel::Eta, 0, 0)).collect();
        v.sort_by(f64::total_cmp);
        let mut d: f64 = 0.0;
        for (i, x) in v.iter().enumerate() {
            let f = laplace_cdf(*x, 1.3);
            d = d.max((f - i as f64 / n as f64).abs());
            d = d.max(((i + 1) as f64 / n as f64 - f).abs());
        }
        // asymptotic critical value at significance 0.01
        let crit = 1.628 / (n as f64).sqrt();
        assert!(d < crit, "D = {d}, critical {crit}");
    }

    #[test]
    fn streams_are_replayable_and_order_free() {
        let mut a = NoiseStreams::new(5, 3, 4, 2);
        let mut block = vec![0.0; 8];
        a.laplace_block(0.7, 11, Channel::Xi, &mut block);
        let mut b = NoiseStreams::new(5, 3, 4, 2);
        for agent in (0..4).rev() {
            for coord in 0..2 {
                let x = b.laplace(0.7, 11, Channel::Xi, agent, coord);
                assert_eq!(x, block[agent * 2 + coord]);
            }
        }
        let mut c = NoiseStreams::new(5, 4, 4, 2);
        let mut other = vec![0.0; 8];
        c.laplace_block(0.7, 11, Channel::Xi, &mut other);
        assert_ne!(block, other);
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn substreams_are_uncorrelated() {
        let n = 100_000;
        let mut s = NoiseStreams::new(77, 0, 3, 2);
        let draw = |s: &mut NoiseStreams, ch, agent, coord| -> Vec<f64> {
            (0..n).map(|k| s.laplace(1.0, k, ch, agent, coord)).collect()
        };
        let base = draw(&mut s, Channel::Eta, 0, 0);
        let others = [
            draw(&mut s, Channel::Xi, 0, 0),
            draw(&mut s, Channel::Eta, 1, 0),
            draw(&mut s, Channel::Eta, 0, 1),
            draw(&mut s, Channel::Xi, 2, 1),
        ];
        for o in &others {
            assert!(correlation(&base, o).abs() < 0.01);
        }
        let lagged: Vec<f64> = base[1..].to_vec();
        assert!(correlation(&base[..n - 1], &lagged).abs() < 0.01);
        let mut t = NoiseStreams::new(77, 1, 3, 2);
        let other_run = draw(&mut t, Channel::Eta, 0, 0);
        assert!(correlation(&base, &other_run).abs() < 0.01);
    }

    #[test]
    fn variance_conversion_round_trips() {
        let np = NoiseParams::from_variances(0.01, 0.04, 4, 2);
        assert!((np.sigma_eta_sq(4, 2) - 0.01).abs() < 1e-15);
        assert!((np.sigma_xi_sq(4, 2) - 0.04).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn schedules_positive_nonincreasing(gamma in 0.01f64..10.0, p in 0.0f64..3.0, q in 0.0f64..3.0, m in 0.1f64..50.0, k in 0usize..100_000) {
            let s = Schedule { alpha: 0.1, gamma, p, q, m };
            prop_assert!(s.gamma_at(k) > 0.0 && s.beta_at(k) > 0.0);
            prop_assert!(s.gamma_at(k + 1) <= s.gamma_at(k));
            prop_assert!(s.beta_at(k + 1) <= s.beta_at(k));
        }

        #[test]
        fn laplace_is_finite_and_odd(x in any::<u64>(), b in 0.001f64..100.0) {
            let u = open_unit(x);
            prop_assert!(u > 0.0 && u < 1.0);
            let l = laplace_from_unit(b, u);
            prop_assert!(l.is_finite());
            let mirrored = laplace_from_unit(b, 1.0 - u);
            prop_assert!((l + mirrored).abs() <= 1e-9 * (1.0 + l.abs()));
        }
    }
}
