//! Elementary effects and the μ, μ*, σ screening measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::SamplingPlan;

/// One elementary effect of one factor on one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSample {
    pub factor: usize,
    pub path: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedPath {
    pub path: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSet {
    pub n_factors: usize,
    pub samples: Vec<EffectSample>,
    /// Paths dropped because a model output on them was not finite.
    pub excluded: Vec<ExcludedPath>,
}

impl EffectSet {
    pub fn for_factor(&self, factor: usize) -> impl Iterator<Item = f64> + '_ {
        self.samples
            .iter()
            .filter(move |s| s.factor == factor)
            .map(|s| s.value)
    }
}

/// Difference quotients along every path.
///
/// `outputs` holds one model output per plan point, in plan order. A step that
/// lowers a factor's level is divided by `-δ`, so every effect is measured
/// with respect to the factor increasing.
pub fn elementary_effects(plan: &SamplingPlan, outputs: &[f64]) -> Result<EffectSet> {
    let per_path = plan.points_per_path();
    if outputs.len() != plan.evaluation_count() {
        return Err(Error::OutputShape {
            path: plan.paths.len(),
            expected: plan.evaluation_count(),
            got: outputs.len(),
        });
    }
    let delta = plan.grid.morris_step();
    let mut samples = Vec::with_capacity(plan.paths.len() * plan.grid.n_factors());
    let mut excluded = Vec::new();
    for (i, (path, values)) in plan.paths.iter().zip(outputs.chunks(per_path)).enumerate() {
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            excluded.push(ExcludedPath {
                path: i,
                reason: format!("non-finite model output {} at point {k}", values[k]),
            });
            continue;
        }
        for (step, mv) in path.moves().enumerate() {
            let signed = if mv.upward { delta } else { -delta };
            samples.push(EffectSample {
                factor: mv.axis,
                path: i,
                value: (values[step + 1] - values[step]) / signed,
            });
        }
    }
    Ok(EffectSet {
        n_factors: plan.grid.n_factors(),
        samples,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorMeasures {
    pub name: String,
    pub mu: f64,
    pub mu_star: f64,
    /// Absent with fewer than two effects.
    pub sigma: Option<f64>,
    pub effects: usize,
}

impl FactorMeasures {
    /// `sqrt(μ² + σ²)`.
    pub fn composite(&self) -> Option<f64> {
        self.sigma.map(|s| self.mu.hypot(s))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub paths: usize,
    pub levels: u32,
    pub step: u32,
    pub seed: u64,
    pub copula: String,
    pub evaluations: usize,
    pub excluded_paths: Vec<ExcludedPath>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub factors: Vec<FactorMeasures>,
    /// Factor indices by decreasing μ*, then decreasing σ, then input order.
    pub ranking: Vec<usize>,
    pub metadata: ReportMetadata,
}

impl SensitivityReport {
    /// 1-based rank of each factor.
    pub fn ranks(&self) -> Vec<usize> {
        let mut out = vec![0; self.factors.len()];
        for (position, &f) in self.ranking.iter().enumerate() {
            out[f] = position + 1;
        }
        out
    }
}

pub fn measures(effects: &EffectSet, names: &[String]) -> Result<SensitivityReport> {
    if effects.samples.is_empty() {
        return Err(Error::EmptyEffects);
    }
    if names.len() != effects.n_factors {
        return Err(Error::DimensionMismatch {
            expected: effects.n_factors,
            got: names.len(),
            context: "factor names",
        });
    }
    let factors = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let d: Vec<f64> = effects.for_factor(j).collect();
            let r = d.len() as f64;
            let mu = d.iter().sum::<f64>() / r;
            let mu_star = d.iter().map(|v| v.abs()).sum::<f64>() / r;
            let sigma = (d.len() >= 2)
                .then(|| (d.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (r - 1.0)).sqrt());
            FactorMeasures {
                name: name.clone(),
                mu,
                mu_star,
                sigma,
                effects: d.len(),
            }
        })
        .collect::<Vec<_>>();

    let mut ranking: Vec<usize> = (0..factors.len()).collect();
    ranking.sort_by(|&a, &b| {
        let (fa, fb) = (&factors[a], &factors[b]);
        fb.mu_star
            .total_cmp(&fa.mu_star)
            .then_with(|| fb.sigma.unwrap_or(0.0).total_cmp(&fa.sigma.unwrap_or(0.0)))
            .then(a.cmp(&b))
    });
    Ok(SensitivityReport {
        factors,
        ranking,
        metadata: ReportMetadata::default(),
    })
}
