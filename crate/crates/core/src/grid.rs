//! Discrete geometry of the `p`-level unit hypercube.
//!
//! Everything here works on integer level indices. Unit-cube coordinates are
//! derived on demand with [`GridConfig::unit`], so path identity never depends
//! on floating-point rounding.
//!
//! An elementary path lives on the contour of an `s x ... x s` block: it starts
//! at one corner, flips one axis at a time in the order given by a permutation,
//! and ends at the opposite corner.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid shape: number of effective factors, levels per axis and Morris step in cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawGridConfig", into = "RawGridConfig")]
pub struct GridConfig {
    n_factors: usize,
    levels: u32,
    step: u32,
}

#[derive(Serialize, Deserialize)]
struct RawGridConfig {
    n_factors: usize,
    levels: u32,
    step: u32,
}

impl TryFrom<RawGridConfig> for GridConfig {
    type Error = Error;

    fn try_from(raw: RawGridConfig) -> Result<Self> {
        GridConfig::new(raw.n_factors, raw.levels, raw.step)
    }
}

impl From<GridConfig> for RawGridConfig {
    fn from(cfg: GridConfig) -> Self {
        RawGridConfig {
            n_factors: cfg.n_factors,
            levels: cfg.levels,
            step: cfg.step,
        }
    }
}

impl GridConfig {
    pub fn new(n_factors: usize, levels: u32, step: u32) -> Result<Self> {
        if n_factors == 0 {
            return Err(Error::InvalidGrid("at least one factor is required".into()));
        }
        if levels < 2 {
            return Err(Error::InvalidGrid(format!(
                "levels must be at least 2, got {levels}"
            )));
        }
        if step == 0 || step >= levels {
            return Err(Error::InvalidGrid(format!(
                "step must lie in [1, {}], got {step}",
                levels - 1
            )));
        }
        Ok(GridConfig {
            n_factors,
            levels,
            step,
        })
    }

    pub fn n_factors(&self) -> usize {
        self.n_factors
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    /// Morris step as the exact ratio `(s, p - 1)`.
    pub fn morris_step_ratio(&self) -> (u32, u32) {
        (self.step, self.levels - 1)
    }

    /// Morris step `s / (p - 1)` in unit-cube coordinates.
    pub fn morris_step(&self) -> f64 {
        self.step as f64 / (self.levels - 1) as f64
    }

    /// Number of valid block origins per axis, `p - s`.
    pub fn block_positions(&self) -> u32 {
        self.levels - self.step
    }

    /// Unit-cube coordinate of a level.
    pub fn unit(&self, level: u32) -> f64 {
        level as f64 / (self.levels - 1) as f64
    }

    /// Same grid with a different number of factors.
    pub fn with_factors(&self, n_factors: usize) -> Result<Self> {
        GridConfig::new(n_factors, self.levels, self.step)
    }
}

/// Morris step `s / (p - 1)`.
pub fn morris_step(cfg: &GridConfig) -> f64 {
    cfg.morris_step()
}

/// Number of distinct undirected elementary paths: `(p - s)^n * 2^n * n! / 2`.
pub fn count_paths(cfg: &GridConfig) -> Result<u128> {
    let n = cfg.n_factors;
    let overflow = || Error::Overflow(format!("n={n}, p={}, s={}", cfg.levels, cfg.step));
    let exponent = u32::try_from(n).map_err(|_| overflow())?;
    let cells = (cfg.block_positions() as u128)
        .checked_pow(exponent)
        .ok_or_else(overflow)?;
    let corners = 2u128.checked_pow(exponent).ok_or_else(overflow)?;
    let orders = (1..=n as u128).try_fold(1u128, |acc, k| acc.checked_mul(k));
    let orders = orders.ok_or_else(overflow)?;
    let directed = cells
        .checked_mul(corners)
        .and_then(|v| v.checked_mul(orders))
        .ok_or_else(overflow)?;
    Ok(directed / 2)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridPoint {
    pub levels: Vec<u32>,
}

impl GridPoint {
    pub fn to_unit(&self, cfg: &GridConfig) -> Vec<f64> {
        self.levels.iter().map(|&l| cfg.unit(l)).collect()
    }
}

/// Lower corner of an `s`-wide block, in level indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlockOrigin {
    pub levels: Vec<u32>,
}

impl BlockOrigin {
    pub fn new(cfg: &GridConfig, levels: Vec<u32>) -> Result<Self> {
        if levels.len() != cfg.n_factors {
            return Err(Error::DimensionMismatch {
                expected: cfg.n_factors,
                got: levels.len(),
                context: "block origin",
            });
        }
        let max = cfg.levels - 1 - cfg.step;
        if let Some(bad) = levels.iter().find(|&&l| l > max) {
            return Err(Error::InvalidGrid(format!(
                "block origin level {bad} exceeds {max}"
            )));
        }
        Ok(BlockOrigin { levels })
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    /// Grid point of the corner with the given code.
    pub fn corner(&self, cfg: &GridConfig, code: &CornerCode) -> GridPoint {
        GridPoint {
            levels: self
                .levels
                .iter()
                .zip(&code.bits)
                .map(|(&o, &b)| o + if b { cfg.step } else { 0 })
                .collect(),
        }
    }
}

/// Binary label of a block corner; bit `j` set means the upper level on axis `j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "Vec<u8>", into = "Vec<u8>")]
pub struct CornerCode {
    pub bits: Vec<bool>,
}

impl From<Vec<u8>> for CornerCode {
    fn from(bits: Vec<u8>) -> Self {
        CornerCode {
            bits: bits.into_iter().map(|b| b != 0).collect(),
        }
    }
}

impl From<CornerCode> for Vec<u8> {
    fn from(code: CornerCode) -> Self {
        code.bits.into_iter().map(u8::from).collect()
    }
}

impl CornerCode {
    pub fn from_bits(bits: &[u8]) -> Self {
        CornerCode::from(bits.to_vec())
    }

    /// Corner whose bit `j` is bit `j` of `index`.
    pub fn from_index(index: usize, dim: usize) -> Self {
        CornerCode {
            bits: (0..dim).map(|j| (index >> j) & 1 == 1).collect(),
        }
    }

    pub fn index(&self) -> usize {
        self.bits
            .iter()
            .enumerate()
            .map(|(j, &b)| usize::from(b) << j)
            .sum()
    }

    pub fn negated(&self) -> Self {
        CornerCode {
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.bits.len()
    }
}

/// One traversal step: axis flipped and whether its level went up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Move {
    pub axis: usize,
    pub upward: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementaryPath {
    pub origin: BlockOrigin,
    pub start: CornerCode,
    /// Zero-based axis indices in the order they are flipped.
    pub order: Vec<usize>,
    pub points: Vec<GridPoint>,
}

/// Walk from `start` to its negation, flipping axes in `order`.
pub fn build_path(
    cfg: &GridConfig,
    origin: &BlockOrigin,
    start: &CornerCode,
    order: &[usize],
) -> Result<ElementaryPath> {
    let n = cfg.n_factors;
    for (got, context) in [
        (origin.dim(), "block origin"),
        (start.dim(), "start corner"),
        (order.len(), "permutation"),
    ] {
        if got != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got,
                context,
            });
        }
    }
    let mut seen = vec![false; n];
    for &axis in order {
        if axis >= n || std::mem::replace(&mut seen[axis], true) {
            return Err(Error::InvalidGrid(format!(
                "{order:?} is not a permutation of 0..{n}"
            )));
        }
    }
    BlockOrigin::new(cfg, origin.levels.clone())?;

    let mut code = start.clone();
    let mut points = Vec::with_capacity(n + 1);
    points.push(origin.corner(cfg, &code));
    for &axis in order {
        code.bits[axis] = !code.bits[axis];
        points.push(origin.corner(cfg, &code));
    }
    Ok(ElementaryPath {
        origin: origin.clone(),
        start: start.clone(),
        order: order.to_vec(),
        points,
    })
}

impl ElementaryPath {
    pub fn dim(&self) -> usize {
        self.order.len()
    }

    /// Corner codes visited along the path.
    pub fn corner_codes(&self) -> Vec<CornerCode> {
        let mut code = self.start.clone();
        let mut out = vec![code.clone()];
        for &axis in &self.order {
            code.bits[axis] = !code.bits[axis];
            out.push(code.clone());
        }
        out
    }

    /// The step taken between point `k` and point `k + 1`, for every `k`.
    pub fn moves(&self) -> impl Iterator<Item = Move> + '_ {
        self.points.windows(2).zip(&self.order).map(|(pair, &axis)| Move {
            axis,
            upward: pair[1].levels[axis] > pair[0].levels[axis],
        })
    }

    /// Same walk traversed from the end corner back to the start.
    pub fn reversed(&self) -> ElementaryPath {
        let mut order = self.order.clone();
        order.reverse();
        let mut points = self.points.clone();
        points.reverse();
        ElementaryPath {
            origin: self.origin.clone(),
            start: self.start.negated(),
            order,
            points,
        }
    }

    /// Checks the structural path invariants against `cfg`.
    pub fn validate(&self, cfg: &GridConfig) -> Result<()> {
        let n = cfg.n_factors;
        if self.points.len() != n + 1 {
            return Err(Error::DimensionMismatch {
                expected: n + 1,
                got: self.points.len(),
                context: "path points",
            });
        }
        if let Some(p) = self.points.iter().find(|p| p.levels.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: p.levels.len(),
                context: "grid point",
            });
        }
        if self
            .points
            .iter()
            .flat_map(|p| &p.levels)
            .any(|&l| l >= cfg.levels)
        {
            return Err(Error::InvalidGrid("path leaves the grid".into()));
        }
        let mut changed = vec![false; n];
        for pair in self.points.windows(2) {
            let diffs: Vec<usize> = (0..n)
                .filter(|&j| pair[0].levels[j] != pair[1].levels[j])
                .collect();
            let [axis] = diffs[..] else {
                return Err(Error::InvalidGrid(format!(
                    "step changes {} axes",
                    diffs.len()
                )));
            };
            if pair[0].levels[axis].abs_diff(pair[1].levels[axis]) != cfg.step {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} moves by a step other than {}",
                    cfg.step
                )));
            }
            if std::mem::replace(&mut changed[axis], true) {
                return Err(Error::InvalidGrid(format!("axis {axis} changes twice")));
            }
        }
        Ok(())
    }
}

/// All `n!` flip orders for `n` axes, in lexicographic order.
pub fn all_orders(n: usize) -> Vec<Vec<usize>> {
    (0..n).permutations(n).collect()
}

/// Every block origin of the grid, in lexicographic order.
pub fn all_origins(cfg: &GridConfig) -> Vec<BlockOrigin> {
    (0..cfg.n_factors)
        .map(|_| 0..cfg.block_positions())
        .multi_cartesian_product()
        .map(|levels| BlockOrigin { levels })
        .collect()
}

/// Every distinct undirected path, one representative per reversal pair.
///
/// The representative is the direction whose start corner has bit 0 clear.
pub fn all_paths(cfg: &GridConfig) -> Result<Vec<ElementaryPath>> {
    let total = count_paths(cfg)?;
    if total > 10_000_000 {
        return Err(Error::Overflow(format!(
            "refusing to enumerate {total} paths"
        )));
    }
    let n = cfg.n_factors;
    let orders = all_orders(n);
    let mut out = Vec::with_capacity(total as usize);
    for origin in all_origins(cfg) {
        for corner in (0..1usize << n).filter(|c| c & 1 == 0) {
            let start = CornerCode::from_index(corner, n);
            for order in &orders {
                out.push(build_path(cfg, &origin, &start, order)?);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, p: u32, s: u32) -> GridConfig {
        GridConfig::new(n, p, s).unwrap()
    }

    #[test]
    fn morris_step_values() {
        assert_eq!(cfg(1, 4, 2).morris_step(), 2.0 / 3.0);
        assert_eq!(cfg(1, 2, 1).morris_step(), 1.0);
        assert_eq!(cfg(1, 4, 1).morris_step(), 1.0 / 3.0);
        assert_eq!(cfg(1, 4, 2).morris_step_ratio(), (2, 3));
    }

    #[test]
    fn config_rejects_bad_shapes() {
        assert!(GridConfig::new(0, 4, 1).is_err());
        assert!(GridConfig::new(2, 1, 1).is_err());
        assert!(GridConfig::new(2, 4, 0).is_err());
        assert!(GridConfig::new(2, 4, 4).is_err());
        assert!(serde_json::from_str::<GridConfig>(r#"{"n_factors":2,"levels":3,"step":3}"#).is_err());
    }

    #[test]
    fn path_counts() {
        assert_eq!(count_paths(&cfg(2, 4, 1)).unwrap(), 36);
        assert_eq!(count_paths(&cfg(3, 3, 1)).unwrap(), 192);
        assert_eq!(count_paths(&cfg(1, 2, 1)).unwrap(), 1);
    }

    #[test]
    fn path_count_overflow_is_reported() {
        let err = count_paths(&cfg(60, 1000, 1)).unwrap_err();
        assert!(matches!(err, Error::Overflow(_)));
    }

    #[test]
    fn gray_code_walk() {
        let c = cfg(3, 2, 1);
        let origin = BlockOrigin::new(&c, vec![0, 0, 0]).unwrap();
        let path = build_path(&c, &origin, &CornerCode::from_bits(&[1, 0, 0]), &[2, 0, 1]).unwrap();
        let codes: Vec<Vec<u8>> = path.corner_codes().into_iter().map(Vec::from).collect();
        assert_eq!(codes, vec![vec![1, 0, 0], vec![1, 0, 1], vec![0, 0, 1], vec![0, 1, 1]]);

        let c2 = cfg(2, 2, 1);
        let o2 = BlockOrigin::new(&c2, vec![0, 0]).unwrap();
        let p = build_path(&c2, &o2, &CornerCode::from_bits(&[0, 0]), &[0, 1]).unwrap();
        let codes: Vec<Vec<u8>> = p.corner_codes().into_iter().map(Vec::from).collect();
        assert_eq!(codes, vec![vec![0, 0], vec![1, 0], vec![1, 1]]);
        let p = build_path(&c2, &o2, &CornerCode::from_bits(&[1, 1]), &[1, 0]).unwrap();
        let codes: Vec<Vec<u8>> = p.corner_codes().into_iter().map(Vec::from).collect();
        assert_eq!(codes, vec![vec![1, 1], vec![1, 0], vec![0, 0]]);
    }

    #[test]
    fn block_path_uses_step_levels() {
        let c = cfg(2, 4, 2);
        let origin = BlockOrigin::new(&c, vec![1, 0]).unwrap();
        let p = build_path(&c, &origin, &CornerCode::from_bits(&[0, 1]), &[1, 0]).unwrap();
        let levels: Vec<Vec<u32>> = p.points.iter().map(|g| g.levels.clone()).collect();
        assert_eq!(levels, vec![vec![1, 2], vec![1, 0], vec![3, 0]]);
        p.validate(&c).unwrap();
    }

    #[test]
    fn build_path_dimension_errors() {
        let c = cfg(3, 4, 1);
        let origin = BlockOrigin { levels: vec![0, 0] };
        let err = build_path(&c, &origin, &CornerCode::from_index(0, 3), &[0, 1, 2]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        let origin = BlockOrigin { levels: vec![0, 0, 0] };
        assert!(build_path(&c, &origin, &CornerCode::from_index(0, 3), &[0, 0, 2]).is_err());
        assert!(build_path(&c, &origin, &CornerCode::from_index(0, 2), &[0, 1, 2]).is_err());
        let origin = BlockOrigin { levels: vec![0, 3, 0] };
        assert!(build_path(&c, &origin, &CornerCode::from_index(0, 3), &[0, 1, 2]).is_err());
    }

    #[test]
    fn reversal_ends_where_it_started() {
        let c = cfg(3, 4, 1);
        let origin = BlockOrigin::new(&c, vec![2, 0, 1]).unwrap();
        let p = build_path(&c, &origin, &CornerCode::from_bits(&[0, 1, 1]), &[1, 2, 0]).unwrap();
        let r = p.reversed();
        r.validate(&c).unwrap();
        let rebuilt = build_path(&c, &r.origin, &r.start, &r.order).unwrap();
        assert_eq!(rebuilt, r);
        assert_eq!(r.points.last(), p.points.first());
    }

    #[test]
    fn all_paths_matches_count() {
        for (n, p, s) in [(1, 2, 1), (2, 4, 1), (2, 4, 3), (3, 3, 1)] {
            let c = cfg(n, p, s);
            assert_eq!(all_paths(&c).unwrap().len() as u128, count_paths(&c).unwrap());
        }
    }
}
