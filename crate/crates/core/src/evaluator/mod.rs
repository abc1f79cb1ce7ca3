//! Scaling grid points to physical parameters and evaluating models on them.

mod external;
mod models;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::copula::{DependenceModel, Sign};
use crate::error::{Error, Result};
use crate::grid::{GridConfig, GridPoint};

pub use external::{ExternalModel, TMPDIR_ENV};
pub use models::{
    synthetic_reference,
    BufferboxModel, BufferboxObjective, LinearModel, ModelSpec, ProductModel, QuadraticModel,
};

/// Physical range of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSpec {
    pub name: String,
    pub min: f64,
    pub max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

impl ParameterSpec {
    pub fn new(name: impl Into<String>, min: f64, max: f64) -> Self {
        ParameterSpec {
            name: name.into(),
            min,
            max,
            baseline: None,
            unit: None,
        }
    }

    /// `min + t (max - min)`, hitting both endpoints exactly.
    pub fn at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            self.min
        } else if t >= 1.0 {
            self.max
        } else {
            self.min + t * (self.max - self.min)
        }
    }
}

/// Reject empty lists, duplicate names and empty or non-finite ranges.
pub fn validate_specs(specs: &[ParameterSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::config("parameters", "at least one parameter is required"));
    }
    let mut seen = HashMap::new();
    for (i, s) in specs.iter().enumerate() {
        let field = format!("parameters[{i}]");
        if s.name.trim().is_empty() {
            return Err(Error::config(format!("{field}.name"), "must not be empty"));
        }
        if let Some(j) = seen.insert(s.name.as_str(), i) {
            return Err(Error::config(
                format!("{field}.name"),
                format!("duplicate of parameters[{j}] ({})", s.name),
            ));
        }
        if !(s.min.is_finite() && s.max.is_finite() && s.min < s.max) {
            return Err(Error::config(
                format!("{field}.min"),
                format!("need finite min < max, got [{}, {}] for {}", s.min, s.max, s.name),
            ));
        }
        if let Some(b) = s.baseline {
            if !(s.min..=s.max).contains(&b) {
                return Err(Error::config(
                    format!("{field}.baseline"),
                    format!("{b} lies outside [{}, {}]", s.min, s.max),
                ));
            }
        }
    }
    Ok(())
}

/// Level of every parameter implied by an effective-factor grid point.
///
/// Members with sign -1 take the mirrored level `p - 1 - level`.
pub fn member_levels(point: &GridPoint, cfg: &GridConfig, model: &DependenceModel) -> Result<Vec<u32>> {
    if point.levels.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: point.levels.len(),
            context: "grid point",
        });
    }
    let top = cfg.levels() - 1;
    Ok((0..model.n_params())
        .map(|param| {
            let (g, sign) = model.group_of(param);
            let level = point.levels[g];
            match sign {
                Sign::Plus => level,
                Sign::Minus => top - level,
            }
        })
        .collect())
}

/// Physical parameter vector of a grid point.
pub fn scale(
    point: &GridPoint,
    cfg: &GridConfig,
    model: &DependenceModel,
    specs: &[ParameterSpec],
) -> Result<Vec<f64>> {
    if specs.len() != model.n_params() {
        return Err(Error::DimensionMismatch {
            expected: model.n_params(),
            got: specs.len(),
            context: "parameter specs",
        });
    }
    let top = (cfg.levels() - 1) as f64;
    Ok(member_levels(point, cfg, model)?
        .into_iter()
        .zip(specs)
        .map(|(level, spec)| spec.at(level as f64 / top))
        .collect())
}

/// A scalar model of named physical parameters.
pub trait Model: Send + Sync {
    /// Stable identifier; part of every cache key.
    fn id(&self) -> &str;

    fn evaluate(&self, x: &[f64]) -> Result<f64>;
}

/// Cache key: SHA-256 over the model id and the 17-significant-digit
/// rendering of each value.
pub fn content_hash(model_id: &str, x: &[f64]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model_id.as_bytes());
    for v in x {
        hasher.update(format!("\n{v:.16e}").as_bytes());
    }
    hex::encode(hasher.finalize())
}

/// One evaluated plan point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    /// Position in plan order.
    pub index: usize,
    pub path: usize,
    pub step: usize,
    /// Effective-factor levels.
    pub levels: Vec<u32>,
    pub values: Vec<f64>,
    /// `None` when the model returned a non-finite value.
    pub output: Option<f64>,
    pub model: String,
    pub hash: String,
    pub wall_time_ms: f64,
}

impl EvaluationRecord {
    pub fn output_or_nan(&self) -> f64 {
        self.output.unwrap_or(f64::NAN)
    }
}

type Slot = Arc<Mutex<Option<f64>>>;

/// Memoizing front end to a [`Model`].
///
/// Concurrent requests for the same point wait on one another so the model
/// is called once; failures are not cached.
pub struct Evaluator {
    model: Arc<dyn Model>,
    slots: Mutex<HashMap<String, Slot>>,
    calls: AtomicUsize,
}

/// Result of a cached evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub hash_hit: bool,
}

impl Evaluator {
    pub fn new(model: Arc<dyn Model>) -> Self {
        Evaluator {
            model,
            slots: Mutex::new(HashMap::new()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn model_id(&self) -> &str {
        self.model.id()
    }

    /// Model invocations so far (cache misses).
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn hash(&self, x: &[f64]) -> String {
        content_hash(self.model.id(), x)
    }

    /// Seed the cache with a known result.
    pub fn insert(&self, hash: String, value: f64) {
        let slot = self.slot(hash);
        *slot.lock().unwrap() = Some(value);
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        let slot = self.slot(self.hash(x));
        let mut guard = slot.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(value) = *guard {
            return Ok(Evaluation { value, hash_hit: true });
        }
        self.calls.fetch_add(1, Ordering::Relaxed);
        let value = self.model.evaluate(x)?;
        *guard = Some(value);
        Ok(Evaluation {
            value,
            hash_hit: false,
        })
    }

    fn slot(&self, hash: String) -> Slot {
        self.slots.lock().unwrap().entry(hash).or_default().clone()
    }
}
