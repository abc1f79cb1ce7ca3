//! Probabilities of the corners of a grid block.
//!
//! A corner at level `k` on some axis stands for the unit-cube interval
//! `[k / p, (k + 1) / p]`. The probability mass the copula puts on each
//! corner's box is obtained by inclusion-exclusion over the copula CDF and
//! normalized over the block's `2^m` corners.

use std::collections::HashMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DependenceModel, RqmcSettings, Sign};
use crate::error::{Error, Result};
use crate::grid::{BlockOrigin, CornerCode, GridConfig};

/// Unit-cube intervals represented by the lower (bit 0) and upper (bit 1)
/// corner of a block along one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisBoxes {
    pub low: (f64, f64),
    pub high: (f64, f64),
}

impl AxisBoxes {
    fn interval(&self, bit: bool) -> (f64, f64) {
        if bit {
            self.high
        } else {
            self.low
        }
    }
}

/// Corner boxes of the block at `origin`.
pub fn block_boxes(cfg: &GridConfig, origin: &BlockOrigin) -> Vec<AxisBoxes> {
    let p = cfg.levels() as f64;
    let box_of = |level: u32| (level as f64 / p, (level + 1) as f64 / p);
    origin
        .levels
        .iter()
        .map(|&o| AxisBoxes {
            low: box_of(o),
            high: box_of(o + cfg.step()),
        })
        .collect()
}

/// Corner boxes of the whole cube split in half on every axis.
pub fn half_cube_boxes(dim: usize) -> Vec<AxisBoxes> {
    vec![
        AxisBoxes {
            low: (0.0, 0.5),
            high: (0.5, 1.0),
        };
        dim
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CornerMethod {
    Exact,
    MonteCarlo {
        samples: usize,
        accepted: usize,
        tolerance: f64,
    },
}

/// Probability of each corner, indexed by [`CornerCode::index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerDistribution {
    probabilities: Vec<f64>,
    method: CornerMethod,
}

impl CornerDistribution {
    pub fn uniform(dim: usize) -> Self {
        let n = 1usize << dim;
        CornerDistribution {
            probabilities: vec![1.0 / n as f64; n],
            method: CornerMethod::Exact,
        }
    }

    pub fn dim(&self) -> usize {
        self.probabilities.len().trailing_zeros() as usize
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn method(&self) -> &CornerMethod {
        &self.method
    }

    pub fn probability(&self, corner: &CornerCode) -> f64 {
        self.probabilities[corner.index()]
    }

    /// Inverse-CDF draw of one corner.
    pub fn sample(&self, rng: &mut dyn RngCore) -> CornerCode {
        let target: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.probabilities.len() - 1;
        for (i, &p) in self.probabilities.iter().enumerate() {
            acc += p;
            if target < acc {
                chosen = i;
                break;
            }
        }
        // never land on a zero-probability corner through rounding at the tail
        if self.probabilities[chosen] == 0.0 {
            chosen = (0..chosen)
                .rev()
                .chain(chosen + 1..self.probabilities.len())
                .find(|&i| self.probabilities[i] > 0.0)
                .unwrap_or(chosen);
        }
        CornerCode::from_index(chosen, self.dim())
    }

    /// Distribution over the corners of the parameter-level block.
    ///
    /// A `+1` member's corner bit equals its group's bit; a `-1` member sits on
    /// the reflected block, so its bit is negated.
    pub fn expand_to_members(&self, model: &DependenceModel) -> Vec<f64> {
        let n = model.n_params();
        let mut out = vec![0.0; 1usize << n];
        for (index, &p) in self.probabilities.iter().enumerate() {
            let member_index: usize = (0..n)
                .map(|param| {
                    let (g, sign) = model.group_of(param);
                    let bit = (index >> g) & 1 == 1;
                    let bit = match sign {
                        Sign::Plus => bit,
                        Sign::Minus => !bit,
                    };
                    usize::from(bit) << param
                })
                .sum();
            out[member_index] += p;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CornerOptions {
    /// Largest factor count handled by inclusion-exclusion; above it corners
    /// are estimated from copula samples.
    pub exact_max_dim: usize,
    pub mc_samples: usize,
    pub mc_seed: u64,
    /// Raw corner mass below `-negative_tolerance` is reported as an error.
    pub negative_tolerance: f64,
    pub accuracy: RqmcSettings,
}

impl Default for CornerOptions {
    fn default() -> Self {
        CornerOptions {
            exact_max_dim: 12,
            mc_samples: 1_000_000,
            mc_seed: 0x636f_726e_6572,
            negative_tolerance: 1e-3,
            accuracy: RqmcSettings::default(),
        }
    }
}

/// Corner distribution of the cell described by `boxes`.
pub fn corner_distribution(
    model: &DependenceModel,
    boxes: &[AxisBoxes],
    options: &CornerOptions,
) -> Result<CornerDistribution> {
    let m = model.dim();
    if boxes.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: boxes.len(),
            context: "cell boxes",
        });
    }
    for (axis, b) in boxes.iter().enumerate() {
        for (lo, hi) in [b.low, b.high] {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
                return Err(Error::DegenerateCell { axis, lo, hi });
            }
        }
    }
    if m <= options.exact_max_dim {
        exact(model, boxes, options)
    } else {
        monte_carlo(model, boxes, options)
    }
}

fn exact(model: &DependenceModel, boxes: &[AxisBoxes], options: &CornerOptions) -> Result<CornerDistribution> {
    let m = boxes.len();
    // distinct boundary values per axis, so shared CDF points are computed once
    let knots: Vec<Vec<f64>> = boxes
        .iter()
        .map(|b| {
            let mut v = vec![b.low.0, b.low.1, b.high.0, b.high.1];
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        })
        .collect();
    let knot_index = |axis: usize, value: f64| -> u8 {
        knots[axis].iter().position(|&k| k == value).unwrap() as u8
    };

    let mut cache: HashMap<Vec<u8>, f64> = HashMap::new();
    let mut point = vec![0.0; m];
    let mut key = vec![0u8; m];
    let mut raw = Vec::with_capacity(1 << m);
    for corner in 0..1usize << m {
        let mut mass = 0.0;
        for vertex in 0..1usize << m {
            let mut lower_count = 0;
            let mut zero = false;
            for axis in 0..m {
                let (lo, hi) = boxes[axis].interval((corner >> axis) & 1 == 1);
                let take_upper = (vertex >> axis) & 1 == 1;
                let v = if take_upper { hi } else { lo };
                if !take_upper {
                    lower_count += 1;
                }
                zero |= v == 0.0;
                point[axis] = v;
                key[axis] = knot_index(axis, v);
            }
            if zero {
                continue;
            }
            let c = match cache.get(&key) {
                Some(&c) => c,
                None => {
                    let c = model.cdf(&point, &options.accuracy)?;
                    cache.insert(key.clone(), c);
                    c
                }
            };
            if lower_count % 2 == 0 {
                mass += c;
            } else {
                mass -= c;
            }
        }
        raw.push(mass);
    }

    for (corner, &p) in raw.iter().enumerate() {
        if p < -options.negative_tolerance {
            return Err(Error::NegativeProbability {
                corner,
                value: p,
                tolerance: options.negative_tolerance,
            });
        }
    }
    let clamped: Vec<f64> = raw.iter().map(|&p| p.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total <= 0.0 {
        return Err(Error::CornerSampling("the cell's corners carry no probability mass".into()));
    }
    Ok(CornerDistribution {
        probabilities: clamped.iter().map(|p| p / total).collect(),
        method: CornerMethod::Exact,
    })
}

fn monte_carlo(model: &DependenceModel, boxes: &[AxisBoxes], options: &CornerOptions) -> Result<CornerDistribution> {
    let m = boxes.len();
    let mut rng = ChaCha8Rng::seed_from_u64(options.mc_seed);
    let mut counts: HashMap<usize, usize> = HashMap::new();
    let mut accepted = 0usize;
    let mut u = vec![0.0; m];
    'draws: for _ in 0..options.mc_samples {
        model.copula().sample_into(&mut rng, &mut u);
        let mut corner = 0usize;
        for (axis, b) in boxes.iter().enumerate() {
            let v = u[axis];
            if v >= b.low.0 && v < b.low.1 {
                continue;
            }
            if v >= b.high.0 && v < b.high.1 {
                corner |= 1 << axis;
                continue;
            }
            continue 'draws;
        }
        *counts.entry(corner).or_default() += 1;
        accepted += 1;
    }
    if accepted == 0 {
        return Err(Error::CornerSampling(format!(
            "none of {} copula samples fell on a corner of the cell",
            options.mc_samples
        )));
    }
    let mut probabilities = vec![0.0; 1usize << m];
    for (corner, count) in counts {
        probabilities[corner] = count as f64 / accepted as f64;
    }
    Ok(CornerDistribution {
        probabilities,
        method: CornerMethod::MonteCarlo {
            samples: options.mc_samples,
            accepted,
            tolerance: 3.0 * (0.25 / accepted as f64).sqrt(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::{build_dependence_model, CorrelationScale, CorrelationSpec};

    fn three_factor() -> DependenceModel {
        let spec = CorrelationSpec::new(
            &[
                vec![1.0, -0.7, -0.7],
                vec![-0.7, 1.0, 0.7],
                vec![-0.7, 0.7, 1.0],
            ],
            CorrelationScale::Pearson,
        )
        .unwrap();
        build_dependence_model(&spec).unwrap()
    }

    #[test]
    fn three_factor_whole_cube_corners() {
        let model = three_factor();
        let cfg = GridConfig::new(3, 2, 1).unwrap();
        let origin = BlockOrigin::new(&cfg, vec![0, 0, 0]).unwrap();
        let dist = corner_distribution(&model, &block_boxes(&cfg, &origin), &CornerOptions::default()).unwrap();
        let p = |bits: &[u8]| dist.probability(&CornerCode::from_bits(bits));
        assert!((p(&[0, 0, 0]) - 0.0633).abs() < 2e-3);
        assert!((p(&[1, 0, 0]) - 0.3101).abs() < 2e-3);
        assert!((p(&[0, 1, 1]) - 0.3101).abs() < 2e-3);
        assert!((dist.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn independence_is_uniform() {
        let model = DependenceModel::independent(3);
        let cfg = GridConfig::new(3, 5, 2).unwrap();
        let origin = BlockOrigin::new(&cfg, vec![0, 2, 1]).unwrap();
        let dist = corner_distribution(&model, &block_boxes(&cfg, &origin), &CornerOptions::default()).unwrap();
        for &p in dist.probabilities() {
            assert!((p - 0.125).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_cell_is_rejected() {
        let model = DependenceModel::independent(2);
        let mut boxes = half_cube_boxes(2);
        boxes[1].high = (0.5, 0.5);
        assert!(matches!(
            corner_distribution(&model, &boxes, &CornerOptions::default()),
            Err(Error::DegenerateCell { axis: 1, .. })
        ));
        assert!(corner_distribution(&model, &half_cube_boxes(3), &CornerOptions::default()).is_err());
    }

    #[test]
    fn monte_carlo_mode_agrees_with_exact() {
        let model = three_factor();
        let boxes = half_cube_boxes(3);
        let exact = corner_distribution(&model, &boxes, &CornerOptions::default()).unwrap();
        let options = CornerOptions {
            exact_max_dim: 0,
            mc_samples: 200_000,
            ..CornerOptions::default()
        };
        let mc = corner_distribution(&model, &boxes, &options).unwrap();
        let CornerMethod::MonteCarlo { tolerance, accepted, .. } = *mc.method() else {
            panic!("expected Monte-Carlo mode");
        };
        assert_eq!(accepted, 200_000);
        for (a, b) in exact.probabilities().iter().zip(mc.probabilities()) {
            assert!((a - b).abs() < tolerance, "{a} vs {b}");
        }
    }

    #[test]
    fn comonotone_pair_has_no_discordant_corners() {
        let spec = CorrelationSpec::from_pairs(3, &[(0, 2, 1.0)], CorrelationScale::Spearman).unwrap();
        let model = build_dependence_model(&spec).unwrap();
        let cfg = GridConfig::new(model.dim(), 4, 1).unwrap();
        let origin = BlockOrigin::new(&cfg, vec![1, 2]).unwrap();
        let dist = corner_distribution(&model, &block_boxes(&cfg, &origin), &CornerOptions::default()).unwrap();
        let members = dist.expand_to_members(&model);
        for (index, &p) in members.iter().enumerate() {
            let (b0, b2) = (index & 1, (index >> 2) & 1);
            if b0 != b2 {
                assert_eq!(p, 0.0, "corner {index:03b}");
            } else {
                assert!((p - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sampling_skips_impossible_corners() {
        let dist = CornerDistribution {
            probabilities: vec![0.5, 0.5, 0.0, 0.0],
            method: CornerMethod::Exact,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert!(dist.sample(&mut rng).index() < 2);
        }
    }
}
