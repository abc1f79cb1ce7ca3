//! Dependence models over the unit hypercube.
//!
//! Parameters with rank correlation of exactly ±1 are factored out into
//! comonotone groups driven by a single latent uniform. The remaining
//! dependence between groups is carried by a residual copula over one
//! coordinate per group (the *effective factors*).

mod corners;
pub mod mvn;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use corners::{
    block_boxes, corner_distribution, half_cube_boxes, AxisBoxes, CornerDistribution, CornerMethod,
    CornerOptions,
};
pub use mvn::RqmcSettings;

/// |ρ| at or above this is treated as perfect dependence.
const PERFECT: f64 = 1.0 - 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;

/// Scale on which correlation entries are given.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationScale {
    /// Spearman rank correlation; converted with `2 sin(pi rho / 6)`.
    #[default]
    Spearman,
    /// Pearson correlation of the latent normals, used as is.
    Pearson,
}

/// Pearson correlation of a Gaussian copula with the given Spearman correlation.
pub fn spearman_to_pearson(rho_s: f64) -> f64 {
    2.0 * (std::f64::consts::PI * rho_s / 6.0).sin()
}

/// Spearman correlation of a Gaussian copula with the given Pearson correlation.
pub fn pearson_to_spearman(rho: f64) -> f64 {
    6.0 / std::f64::consts::PI * (rho / 2.0).asin()
}

/// Symmetric correlation matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSpec {
    matrix: DMatrix<f64>,
    scale: CorrelationScale,
}

impl CorrelationSpec {
    pub fn new(rows: &[Vec<f64>], scale: CorrelationScale) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidCorrelation("empty matrix".into()));
        }
        if let Some(row) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::InvalidCorrelation(format!(
                "row of length {} in a {n}x{n} matrix",
                row.len()
            )));
        }
        let matrix = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::from_matrix(matrix, scale)
    }

    pub fn identity(n: usize) -> Self {
        CorrelationSpec {
            matrix: DMatrix::identity(n, n),
            scale: CorrelationScale::Spearman,
        }
    }

    /// Identity matrix with the listed off-diagonal entries set symmetrically.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize, f64)], scale: CorrelationScale) -> Result<Self> {
        let mut matrix = DMatrix::identity(n, n);
        for &(a, b, rho) in pairs {
            if a >= n || b >= n {
                return Err(Error::InvalidCorrelation(format!(
                    "pair ({a}, {b}) out of range for {n} parameters"
                )));
            }
            if a == b {
                return Err(Error::InvalidCorrelation(format!(
                    "pair ({a}, {b}) sets a diagonal entry"
                )));
            }
            matrix[(a, b)] = rho;
            matrix[(b, a)] = rho;
        }
        Self::from_matrix(matrix, scale)
    }

    fn from_matrix(matrix: DMatrix<f64>, scale: CorrelationScale) -> Result<Self> {
        let n = matrix.nrows();
        for i in 0..n {
            if (matrix[(i, i)] - 1.0).abs() > SYMMETRY_TOL {
                return Err(Error::InvalidCorrelation(format!(
                    "diagonal entry {i} is {}",
                    matrix[(i, i)]
                )));
            }
            for j in 0..n {
                let v = matrix[(i, j)];
                if !v.is_finite() || v.abs() > 1.0 {
                    return Err(Error::InvalidCorrelation(format!(
                        "entry ({i}, {j}) = {v} outside [-1, 1]"
                    )));
                }
                if (v - matrix[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidCorrelation(format!(
                        "entries ({i}, {j}) and ({j}, {i}) differ"
                    )));
                }
            }
        }
        Ok(CorrelationSpec { matrix, scale })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn scale(&self) -> CorrelationScale {
        self.scale
    }

    fn to_pearson(&self, rho: f64) -> f64 {
        match self.scale {
            CorrelationScale::Spearman => spearman_to_pearson(rho),
            CorrelationScale::Pearson => rho,
        }
    }
}

/// A copula over the effective factors.
///
/// Implementations must be immutable after construction; all randomness comes
/// through the caller's generator.
pub trait Copula: fmt::Debug + Send + Sync {
    fn dim(&self) -> usize;

    fn name(&self) -> &'static str;

    /// One draw written into `out` (length `dim`), components in (0, 1).
    fn sample_into(&self, rng: &mut dyn RngCore, out: &mut [f64]);

    /// Probability of the box `[lower, upper]`, both inside the unit cube.
    fn rectangle_probability(&self, lower: &[f64], upper: &[f64], accuracy: &RqmcSettings) -> Result<f64>;

    fn cdf(&self, u: &[f64], accuracy: &RqmcSettings) -> Result<f64> {
        let zeros = vec![0.0; u.len()];
        self.rectangle_probability(&zeros, u, accuracy)
    }
}

#[derive(Debug, Clone)]
pub struct IndependenceCopula {
    dim: usize,
}

impl IndependenceCopula {
    pub fn new(dim: usize) -> Self {
        IndependenceCopula { dim }
    }
}

impl Copula for IndependenceCopula {
    fn dim(&self) -> usize {
        self.dim
    }

    fn name(&self) -> &'static str {
        "independence"
    }

    fn sample_into(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = open_unit(rng);
        }
    }

    fn rectangle_probability(&self, lower: &[f64], upper: &[f64], _: &RqmcSettings) -> Result<f64> {
        Ok(lower.iter().zip(upper).map(|(a, b)| (b - a).max(0.0)).product())
    }
}

fn open_unit(rng: &mut dyn RngCore) -> f64 {
    // 53 random bits shifted into (0, 1)
    ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Gaussian copula parameterized by a Pearson correlation matrix.
#[derive(Debug, Clone)]
pub struct GaussianCopula {
    correlation: DMatrix<f64>,
    cholesky: DMatrix<f64>,
}

impl GaussianCopula {
    pub fn new(correlation: DMatrix<f64>) -> Result<Self> {
        let min_eigenvalue = correlation
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eigenvalue < -1e-10 {
            return Err(Error::NotPositiveSemiDefinite { min_eigenvalue });
        }
        let cholesky = psd_cholesky(&correlation, min_eigenvalue)?;
        Ok(GaussianCopula {
            correlation,
            cholesky,
        })
    }

    pub fn correlation(&self) -> &DMatrix<f64> {
        &self.correlation
    }
}

fn psd_cholesky(correlation: &DMatrix<f64>, min_eigenvalue: f64) -> Result<DMatrix<f64>> {
    if let Some(c) = correlation.clone().cholesky() {
        return Ok(c.l());
    }
    // singular but PSD: shrink slightly toward the identity
    let n = correlation.nrows();
    let eps = 1e-9;
    let shrunk = correlation * (1.0 - eps) + DMatrix::identity(n, n) * eps;
    Ok(shrunk
        .cholesky()
        .ok_or(Error::NotPositiveSemiDefinite { min_eigenvalue })?
        .l())
}

impl Copula for GaussianCopula {
    fn dim(&self) -> usize {
        self.correlation.nrows()
    }

    fn name(&self) -> &'static str {
        "gaussian"
    }

    fn sample_into(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        let n = self.dim();
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for (i, slot) in out.iter_mut().enumerate() {
            let x: f64 = (0..=i).map(|j| self.cholesky[(i, j)] * z[j]).sum();
            *slot = mvn::phi(x).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
        }
    }

    fn rectangle_probability(&self, lower: &[f64], upper: &[f64], accuracy: &RqmcSettings) -> Result<f64> {
        if lower.iter().zip(upper).any(|(a, b)| a >= b) {
            return Ok(0.0);
        }
        // unconstrained axes integrate out exactly
        let active: Vec<usize> = (0..self.dim())
            .filter(|&i| lower[i] > 0.0 || upper[i] < 1.0)
            .collect();
        match active.len() {
            0 => return Ok(1.0),
            1 => return Ok(upper[active[0]] - lower[active[0]]),
            _ => {}
        }
        let a: Vec<f64> = active.iter().map(|&i| mvn::phi_inv(lower[i])).collect();
        let b: Vec<f64> = active.iter().map(|&i| mvn::phi_inv(upper[i])).collect();
        let est = if active.len() == self.dim() {
            mvn::rectangle_probability(&self.cholesky, &a, &b, accuracy)?
        } else {
            let sub = self.correlation.select_rows(&active).select_columns(&active);
            let chol = psd_cholesky(&sub, 0.0)?;
            mvn::rectangle_probability(&chol, &a, &b, accuracy)?
        };
        Ok(est.value.clamp(0.0, 1.0))
    }
}

/// Direction of a group member relative to the group's latent uniform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn of(rho: f64) -> Sign {
        if rho < 0.0 {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    fn times(self, other: Sign) -> Sign {
        if self == other {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

impl From<Sign> for i8 {
    fn from(s: Sign) -> i8 {
        match s {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

impl TryFrom<i8> for Sign {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            other => Err(format!("sign must be 1 or -1, got {other}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupMember {
    pub param: usize,
    pub sign: Sign,
}

/// Parameters that move together as one effective factor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorGroup {
    pub members: Vec<GroupMember>,
}

/// Comonotone groups plus a residual copula over one coordinate per group.
#[derive(Debug, Clone)]
pub struct DependenceModel {
    n_params: usize,
    groups: Vec<FactorGroup>,
    member_of: Vec<(usize, Sign)>,
    copula: Arc<dyn Copula>,
}

impl DependenceModel {
    /// Every parameter its own factor, independence copula.
    pub fn independent(n_params: usize) -> Self {
        let groups = (0..n_params)
            .map(|param| FactorGroup {
                members: vec![GroupMember {
                    param,
                    sign: Sign::Plus,
                }],
            })
            .collect();
        Self::from_parts(n_params, groups, Arc::new(IndependenceCopula::new(n_params)))
            .expect("singleton groups are always valid")
    }

    /// Assemble a model from explicit groups and a residual copula.
    pub fn from_parts(n_params: usize, groups: Vec<FactorGroup>, copula: Arc<dyn Copula>) -> Result<Self> {
        if copula.dim() != groups.len() {
            return Err(Error::DimensionMismatch {
                expected: groups.len(),
                got: copula.dim(),
                context: "residual copula",
            });
        }
        let mut member_of = vec![None; n_params];
        for (g, group) in groups.iter().enumerate() {
            match group.members.first() {
                None => return Err(Error::InconsistentGroups(format!("group {g} is empty"))),
                Some(first) if first.sign != Sign::Plus => {
                    return Err(Error::InconsistentGroups(format!(
                        "first member of group {g} must have sign +1"
                    )))
                }
                _ => {}
            }
            for m in &group.members {
                let slot = member_of.get_mut(m.param).ok_or_else(|| {
                    Error::InconsistentGroups(format!("parameter {} out of range", m.param))
                })?;
                if slot.replace((g, m.sign)).is_some() {
                    return Err(Error::InconsistentGroups(format!(
                        "parameter {} belongs to two groups",
                        m.param
                    )));
                }
            }
        }
        let member_of = member_of
            .into_iter()
            .enumerate()
            .map(|(p, slot)| {
                slot.ok_or_else(|| Error::InconsistentGroups(format!("parameter {p} has no group")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DependenceModel {
            n_params,
            groups,
            member_of,
            copula,
        })
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Number of effective factors.
    pub fn dim(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[FactorGroup] {
        &self.groups
    }

    pub fn copula(&self) -> &dyn Copula {
        self.copula.as_ref()
    }

    /// Group index and sign of a parameter.
    pub fn group_of(&self, param: usize) -> (usize, Sign) {
        self.member_of[param]
    }

    /// `count` i.i.d. draws over the effective factors.
    pub fn sample(&self, count: usize, rng: &mut dyn RngCore) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                let mut u = vec![0.0; self.dim()];
                self.copula.sample_into(rng, &mut u);
                u
            })
            .collect()
    }

    /// Parameter-level coordinates implied by an effective-factor point.
    pub fn expand(&self, u: &[f64]) -> Vec<f64> {
        self.member_of
            .iter()
            .map(|&(g, sign)| match sign {
                Sign::Plus => u[g],
                Sign::Minus => 1.0 - u[g],
            })
            .collect()
    }

    /// Copula CDF over the effective factors.
    pub fn cdf(&self, u: &[f64], accuracy: &RqmcSettings) -> Result<f64> {
        self.check_unit(u, self.dim(), "cdf argument")?;
        if u.iter().any(|&v| v == 0.0) {
            return Ok(0.0);
        }
        if u.iter().all(|&v| v == 1.0) {
            return Ok(1.0);
        }
        self.copula.cdf(u, accuracy)
    }

    /// Probability of a box over the effective factors.
    pub fn rectangle_probability(&self, lower: &[f64], upper: &[f64], accuracy: &RqmcSettings) -> Result<f64> {
        self.check_unit(lower, self.dim(), "rectangle lower corner")?;
        self.check_unit(upper, self.dim(), "rectangle upper corner")?;
        self.copula.rectangle_probability(lower, upper, accuracy)
    }

    /// Probability of a box over the original parameters.
    ///
    /// Each group's latent uniform must satisfy every member's constraint; the
    /// intersection is then measured under the residual copula.
    pub fn member_rectangle_probability(
        &self,
        lower: &[f64],
        upper: &[f64],
        accuracy: &RqmcSettings,
    ) -> Result<f64> {
        self.check_unit(lower, self.n_params, "rectangle lower corner")?;
        self.check_unit(upper, self.n_params, "rectangle upper corner")?;
        let mut lo = vec![0.0f64; self.dim()];
        let mut hi = vec![1.0f64; self.dim()];
        for (p, &(g, sign)) in self.member_of.iter().enumerate() {
            let (a, b) = match sign {
                Sign::Plus => (lower[p], upper[p]),
                Sign::Minus => (1.0 - upper[p], 1.0 - lower[p]),
            };
            lo[g] = lo[g].max(a);
            hi[g] = hi[g].min(b);
        }
        if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            return Ok(0.0);
        }
        self.copula.rectangle_probability(&lo, &hi, accuracy)
    }

    fn check_unit(&self, u: &[f64], dim: usize, context: &'static str) -> Result<()> {
        if u.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: u.len(),
                context,
            });
        }
        if let Some(bad) = u.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidCorrelation(format!(
                "{context} component {bad} outside [0, 1]"
            )));
        }
        Ok(())
    }
}

/// Factor perfect correlations into groups and build the residual copula.
///
/// The residual is the independence copula when every residual correlation is
/// zero, otherwise a Gaussian copula on the Pearson scale.
pub fn build_dependence_model(spec: &CorrelationSpec) -> Result<DependenceModel> {
    let n = spec.dim();

    // union-find over perfect entries
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            if spec.get(i, j).abs() >= PERFECT {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut roots: Vec<usize> = Vec::new();
    let mut group_members: Vec<Vec<usize>> = Vec::new();
    for p in 0..n {
        let root = find(&mut parent, p);
        match roots.iter().position(|&r| r == root) {
            Some(g) => group_members[g].push(p),
            None => {
                roots.push(root);
                group_members.push(vec![p]);
            }
        }
    }

    let mut groups = Vec::with_capacity(group_members.len());
    for members in &group_members {
        let first = members[0];
        let signs: Vec<Sign> = members
            .iter()
            .map(|&p| if p == first { Sign::Plus } else { Sign::of(spec.get(first, p)) })
            .collect();
        // every pair inside a group must agree with the signs implied through the first member
        for (a, &pa) in members.iter().enumerate() {
            for (b, &pb) in members.iter().enumerate().skip(a + 1) {
                let rho = spec.get(pa, pb);
                let implied = signs[a].times(signs[b]).as_f64();
                if (rho - implied).abs() > 1e-9 {
                    return Err(Error::InconsistentGroups(format!(
                        "parameters {pa} and {pb} are perfectly dependent through their group, \
                         which implies rho = {implied}, but rho = {rho}"
                    )));
                }
            }
        }
        groups.push(FactorGroup {
            members: members
                .iter()
                .zip(&signs)
                .map(|(&param, &sign)| GroupMember { param, sign })
                .collect(),
        });
    }

    let m = groups.len();
    let mut residual = DMatrix::identity(m, m);
    let mut any_dependence = false;
    for g in 0..m {
        for h in g + 1..m {
            let rep = {
                let (a, b) = (&groups[g].members[0], &groups[h].members[0]);
                spec.get(a.param, b.param)
            };
            for a in &groups[g].members {
                for b in &groups[h].members {
                    let oriented = spec.get(a.param, b.param) * a.sign.as_f64() * b.sign.as_f64();
                    if (oriented - rep).abs() > 1e-9 {
                        return Err(Error::InconsistentGroups(format!(
                            "correlation between parameters {} and {} ({}) disagrees with \
                             their groups' correlation ({rep})",
                            a.param,
                            b.param,
                            spec.get(a.param, b.param)
                        )));
                    }
                }
            }
            if rep != 0.0 {
                any_dependence = true;
            }
            let pearson = spec.to_pearson(rep);
            residual[(g, h)] = pearson;
            residual[(h, g)] = pearson;
        }
    }

    let copula: Arc<dyn Copula> = if any_dependence {
        Arc::new(GaussianCopula::new(residual)?)
    } else {
        Arc::new(IndependenceCopula::new(m))
    };
    DependenceModel::from_parts(n, groups, copula)
}
