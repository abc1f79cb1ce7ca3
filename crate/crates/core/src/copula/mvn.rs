//! Multivariate normal rectangle probabilities.
//!
//! Genz's separation-of-variables transform integrated with a randomly shifted
//! Richtmyer lattice (tent-periodized). The error estimate is three standard
//! errors across the independent shifts; the point count doubles until that
//! estimate drops below the requested tolerance.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
pub fn phi_inv(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    if !x.is_finite() {
        return x;
    }
    // one Halley step against the more accurate forward function
    let e = phi(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Accuracy contract for randomized quasi-Monte-Carlo integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RqmcSettings {
    pub abs_tol: f64,
    pub initial_points: usize,
    pub max_points: usize,
    pub shifts: usize,
    pub seed: u64,
}

impl Default for RqmcSettings {
    fn default() -> Self {
        RqmcSettings {
            abs_tol: 5e-4,
            initial_points: 1 << 10,
            max_points: 1 << 20,
            shifts: 12,
            seed: 0x6d76_6e5f_7271_6d63,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvnEstimate {
    pub value: f64,
    pub error: f64,
    pub points: usize,
}

/// `P(lower < L z < upper)` for `z` standard normal, `L` lower-triangular.
///
/// Infinite limits are allowed. `chol` must have a strictly positive diagonal.
pub fn rectangle_probability(
    chol: &DMatrix<f64>,
    lower: &[f64],
    upper: &[f64],
    settings: &RqmcSettings,
) -> Result<MvnEstimate> {
    let m = chol.nrows();
    debug_assert_eq!(lower.len(), m);
    debug_assert_eq!(upper.len(), m);
    if lower.iter().zip(upper).any(|(a, b)| a >= b) {
        return Ok(MvnEstimate {
            value: 0.0,
            error: 0.0,
            points: 0,
        });
    }
    let first_lo = phi(lower[0] / chol[(0, 0)]);
    let first_hi = phi(upper[0] / chol[(0, 0)]);
    if m == 1 {
        return Ok(MvnEstimate {
            value: first_hi - first_lo,
            error: 0.0,
            points: 0,
        });
    }

    let generators = richtmyer_generators(m - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let shifts: Vec<Vec<f64>> = (0..settings.shifts.max(2))
        .map(|_| (0..m - 1).map(|_| rng.random::<f64>()).collect())
        .collect();

    let mut y = vec![0.0; m - 1];
    let mut w = vec![0.0; m - 1];
    let integrand = |w: &[f64], y: &mut [f64]| -> f64 {
        let (mut lo, mut hi) = (first_lo, first_hi);
        let mut f = hi - lo;
        for i in 1..m {
            if f <= 0.0 {
                return 0.0;
            }
            let q = (lo + w[i - 1] * (hi - lo)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
            y[i - 1] = phi_inv(q);
            let s: f64 = (0..i).map(|j| chol[(i, j)] * y[j]).sum();
            let d = chol[(i, i)];
            lo = phi((lower[i] - s) / d);
            hi = phi((upper[i] - s) / d);
            f *= hi - lo;
        }
        f.max(0.0)
    };

    let mut n = settings.initial_points.max(16);
    let mut last = MvnEstimate {
        value: f64::NAN,
        error: f64::INFINITY,
        points: 0,
    };
    while n <= settings.max_points {
        let means: Vec<f64> = shifts
            .iter()
            .map(|shift| {
                let mut acc = 0.0;
                for k in 1..=n {
                    for j in 0..m - 1 {
                        let x = (k as f64 * generators[j] + shift[j]).fract();
                        w[j] = (2.0 * x - 1.0).abs();
                    }
                    acc += integrand(&w, &mut y);
                }
                acc / n as f64
            })
            .collect();
        let k = means.len() as f64;
        let mean = means.iter().sum::<f64>() / k;
        let var = means.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
        last = MvnEstimate {
            value: mean,
            error: 3.0 * (var / k).sqrt(),
            points: n * means.len(),
        };
        if last.error <= settings.abs_tol {
            return Ok(last);
        }
        n *= 2;
    }
    Err(Error::CdfAccuracy {
        requested: settings.abs_tol,
        achieved: last.error,
        points: last.points,
    })
}

fn richtmyer_generators(dim: usize) -> Vec<f64> {
    let mut primes = Vec::with_capacity(dim);
    let mut candidate = 2u64;
    while primes.len() < dim {
        if primes.iter().take_while(|&&p| p * p <= candidate).all(|&p| candidate % p != 0) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes.into_iter().map(|p| (p as f64).sqrt().fract()).collect()
}
