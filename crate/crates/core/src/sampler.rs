//! Path sampling: LHSD block selection, copula-weighted start corners and
//! uniformly random traversal orders.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::copula::{block_boxes, corner_distribution, half_cube_boxes, CornerDistribution, CornerOptions, DependenceModel};
use crate::error::{Error, Result};
use crate::grid::{build_path, BlockOrigin, CornerCode, ElementaryPath, GridConfig, GridPoint};

/// `ranks[i][j]`: rank (1-based) of sample `i` among all samples on dimension `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankStatistics {
    pub ranks: Vec<Vec<u32>>,
}

/// Per-dimension ranks; ties are broken by sample index.
pub fn rank_stats(samples: &[Vec<f64>]) -> RankStatistics {
    let l = samples.len();
    let m = samples.first().map_or(0, Vec::len);
    let mut ranks = vec![vec![0u32; m]; l];
    let mut order: Vec<usize> = (0..l).collect();
    for j in 0..m {
        // sort_by is stable, so equal values keep index order
        order.sort_by(|&a, &b| samples[a][j].total_cmp(&samples[b][j]));
        for (position, &i) in order.iter().enumerate() {
            ranks[i][j] = position as u32 + 1;
        }
        order.sort_unstable();
    }
    RankStatistics { ranks }
}

/// `count` block origins from repeated LHSD rounds of `p - s` copula samples.
///
/// Within a round each origin index occurs exactly once per axis; surplus
/// origins from the last round are dropped.
pub fn lhsd_blocks(
    model: &DependenceModel,
    cfg: &GridConfig,
    count: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<BlockOrigin>> {
    if cfg.n_factors() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: cfg.n_factors(),
            context: "grid factors vs dependence model",
        });
    }
    let l = cfg.block_positions() as usize;
    if l < 1 {
        return Err(Error::InvalidGrid("no valid block positions".into()));
    }
    let mut origins = Vec::with_capacity(count);
    while origins.len() < count {
        let samples = model.sample(l, rng);
        let ranks = rank_stats(&samples);
        for row in ranks.ranks {
            origins.push(BlockOrigin {
                levels: row.into_iter().map(|r| r - 1).collect(),
            });
        }
    }
    origins.truncate(count);
    Ok(origins)
}

/// Where start-corner distributions come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CornerMode {
    /// Computed for each sampled block.
    #[default]
    PerBlock,
    /// Computed once on the half-split cube and reused for every block.
    /// Adequate for symmetric copulas such as the Gaussian.
    Shared,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanOptions {
    pub corner_mode: CornerMode,
    pub corners: CornerOptions,
}

/// Caches corner distributions per block.
pub struct CornerSampler<'a> {
    model: &'a DependenceModel,
    cfg: GridConfig,
    options: PlanOptions,
    cache: HashMap<BlockOrigin, CornerDistribution>,
    shared: Option<CornerDistribution>,
}

impl<'a> CornerSampler<'a> {
    pub fn new(model: &'a DependenceModel, cfg: GridConfig, options: PlanOptions) -> Self {
        CornerSampler {
            model,
            cfg,
            options,
            cache: HashMap::new(),
            shared: None,
        }
    }

    pub fn distribution(&mut self, block: &BlockOrigin) -> Result<&CornerDistribution> {
        let (model, cfg, opts) = (self.model, self.cfg, self.options.corners);
        match self.options.corner_mode {
            CornerMode::Shared => {
                if self.shared.is_none() {
                    self.shared = Some(corner_distribution(model, &half_cube_boxes(model.dim()), &opts)?);
                }
                Ok(self.shared.as_ref().unwrap())
            }
            CornerMode::PerBlock => {
                if !self.cache.contains_key(block) {
                    let dist = corner_distribution(model, &block_boxes(&cfg, block), &opts)?;
                    self.cache.insert(block.clone(), dist);
                }
                Ok(&self.cache[block])
            }
        }
    }

    pub fn sample(&mut self, block: &BlockOrigin, rng: &mut dyn RngCore) -> Result<CornerCode> {
        Ok(self.distribution(block)?.sample(rng))
    }
}

/// Draw the starting corner of a path in `block`.
pub fn sample_start_corner(
    model: &DependenceModel,
    cfg: &GridConfig,
    block: &BlockOrigin,
    options: &PlanOptions,
    rng: &mut dyn RngCore,
) -> Result<CornerCode> {
    CornerSampler::new(model, *cfg, *options).sample(block, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub grid: GridConfig,
    pub seed: u64,
    pub paths: Vec<ElementaryPath>,
}

impl SamplingPlan {
    pub fn from_paths(grid: GridConfig, seed: u64, paths: Vec<ElementaryPath>) -> Result<Self> {
        for p in &paths {
            p.validate(&grid)?;
        }
        Ok(SamplingPlan { grid, seed, paths })
    }

    pub fn points_per_path(&self) -> usize {
        self.grid.n_factors() + 1
    }

    /// Model evaluations needed, `(m + 1) r`.
    pub fn evaluation_count(&self) -> usize {
        self.paths.len() * self.points_per_path()
    }

    /// Every evaluation point in plan order: path-major, then position on the path.
    pub fn points(&self) -> impl Iterator<Item = &GridPoint> {
        self.paths.iter().flat_map(|p| p.points.iter())
    }

    pub fn distinct_points(&self) -> usize {
        let mut pts: Vec<&GridPoint> = self.points().collect();
        pts.sort();
        pts.dedup();
        pts.len()
    }
}

/// Build `r` paths: LHSD blocks, then a start corner and a permutation per block.
///
/// The result is a pure function of the inputs and `seed`.
pub fn build_plan(
    model: &DependenceModel,
    cfg: &GridConfig,
    r: usize,
    seed: u64,
    options: &PlanOptions,
) -> Result<SamplingPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = lhsd_blocks(model, cfg, r, &mut rng)?;
    let mut corners = CornerSampler::new(model, *cfg, *options);
    let m = cfg.n_factors();
    let mut paths = Vec::with_capacity(r);
    for block in &blocks {
        let start = corners.sample(block, &mut rng)?;
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut rng);
        paths.push(build_path(cfg, block, &start, &order)?);
    }
    Ok(SamplingPlan {
        grid: *cfg,
        seed,
        paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::{build_dependence_model, CorrelationScale, CorrelationSpec};

    #[test]
    fn ranks_of_small_samples() {
        let r = rank_stats(&[vec![0.9], vec![0.1], vec![0.5]]);
        assert_eq!(r.ranks, vec![vec![3], vec![1], vec![2]]);
        let sorted: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 / 10.0]).collect();
        let r = rank_stats(&sorted);
        assert_eq!(r.ranks.iter().map(|v| v[0]).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn ties_break_by_index() {
        let vals = [0.3, 0.7, 0.5, 0.1, 0.2, 0.5];
        let samples: Vec<Vec<f64>> = vals.iter().map(|&v| vec![v]).collect();
        let r = rank_stats(&samples);
        assert!(r.ranks[2][0] < r.ranks[5][0]);
        let mut col: Vec<u32> = r.ranks.iter().map(|v| v[0]).collect();
        col.sort();
        assert_eq!(col, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn independence_rounds_form_latin_squares() {
        let model = DependenceModel::independent(3);
        let cfg = GridConfig::new(3, 4, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let blocks = lhsd_blocks(&model, &cfg, 2, &mut rng).unwrap();
        for j in 0..3 {
            let mut col: Vec<u32> = blocks.iter().map(|b| b.levels[j]).collect();
            col.sort();
            assert_eq!(col, vec![0, 1]);
        }
    }

    #[test]
    fn comonotone_group_is_one_axis() {
        let spec = CorrelationSpec::from_pairs(2, &[(0, 1, 1.0)], CorrelationScale::Spearman).unwrap();
        let model = build_dependence_model(&spec).unwrap();
        let cfg = GridConfig::new(1, 5, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let blocks = lhsd_blocks(&model, &cfg, 4, &mut rng).unwrap();
        let mut col: Vec<u32> = blocks.iter().map(|b| b.levels[0]).collect();
        col.sort();
        assert_eq!(col, vec![0, 1, 2, 3]);
    }

    #[test]
    fn rounds_and_truncation() {
        // p=4, s=2: two origins per round, ten paths take five rounds
        let model = DependenceModel::independent(7);
        let cfg = GridConfig::new(7, 4, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let blocks = lhsd_blocks(&model, &cfg, 10, &mut rng).unwrap();
        assert_eq!(blocks.len(), 10);
        for round in blocks.chunks(2) {
            for j in 0..7 {
                assert_ne!(round[0].levels[j], round[1].levels[j]);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let odd = lhsd_blocks(&model, &cfg, 9, &mut rng).unwrap();
        assert_eq!(odd[..], blocks[..9]);
    }

    #[test]
    fn dimension_mismatch() {
        let model = DependenceModel::independent(3);
        let cfg = GridConfig::new(2, 4, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(lhsd_blocks(&model, &cfg, 1, &mut rng).is_err());
    }

    #[test]
    fn single_factor_corners_are_fair() {
        let model = DependenceModel::independent(1);
        let cfg = GridConfig::new(1, 3, 1).unwrap();
        let block = BlockOrigin::new(&cfg, vec![1]).unwrap();
        let mut sampler = CornerSampler::new(&model, cfg, PlanOptions::default());
        let probs = sampler.distribution(&block).unwrap().probabilities().to_vec();
        assert!(probs.iter().all(|p| (p - 0.5).abs() < 1e-15), "{probs:?}");
    }

    #[test]
    fn single_factor_plan() {
        let model = DependenceModel::independent(1);
        let cfg = GridConfig::new(1, 4, 1).unwrap();
        let plan = build_plan(&model, &cfg, 1, 42, &PlanOptions::default()).unwrap();
        assert_eq!(plan.evaluation_count(), 2);
        let units: Vec<f64> = plan.points().map(|p| p.to_unit(&cfg)[0]).collect();
        assert!(((units[1] - units[0]).abs() - cfg.morris_step()).abs() < 1e-15);
    }

    #[test]
    fn plans_are_reproducible() {
        let spec = CorrelationSpec::new(
            &[vec![1.0, 0.5, 0.0], vec![0.5, 1.0, -0.2], vec![0.0, -0.2, 1.0]],
            CorrelationScale::Spearman,
        )
        .unwrap();
        let model = build_dependence_model(&spec).unwrap();
        let cfg = GridConfig::new(3, 6, 2).unwrap();
        let a = build_plan(&model, &cfg, 13, 7, &PlanOptions::default()).unwrap();
        let b = build_plan(&model, &cfg, 13, 7, &PlanOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.paths.len(), 13);
        assert!(a.distinct_points() <= a.evaluation_count());
        for p in &a.paths {
            p.validate(&cfg).unwrap();
        }
        let c = build_plan(&model, &cfg, 13, 8, &PlanOptions::default()).unwrap();
        assert_ne!(a, c);
    }
}
