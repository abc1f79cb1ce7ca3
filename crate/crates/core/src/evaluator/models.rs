//! Built-in model registry.

use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{ExternalModel, Model};
use crate::bufferbox::{self, BufferParams, Scenario};
use crate::error::{Error, Result};
use crate::objective::{epsilon, thin_observations, ReferenceSet, Site};

/// Model section of a campaign configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `Σ a_j x_j`
    Linear { coefficients: Vec<f64> },
    /// `Σ a_j x_j²`
    Quadratic { coefficients: Vec<f64> },
    /// `Σ a_j x_j + c Π x_j`; an empty coefficient list means no linear part.
    Product {
        #[serde(default)]
        coefficients: Vec<f64>,
        #[serde(default = "one")]
        interaction: f64,
    },
    /// The two-layer buffer model; parameters are matched by name and any
    /// parameter not listed keeps its baseline value.
    Bufferbox {
        #[serde(default)]
        scenario: Scenario,
    },
    /// `command... <input.json>`; the last non-empty stdout line is the output.
    External {
        command: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        timeout_secs: Option<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::Linear { .. } => "linear",
            ModelSpec::Quadratic { .. } => "quadratic",
            ModelSpec::Product { .. } => "product",
            ModelSpec::Bufferbox { .. } => "bufferbox",
            ModelSpec::External { .. } => "external",
        }
    }

    /// Check the spec against the parameter names without building anything.
    pub fn validate(&self, names: &[String]) -> Result<()> {
        let n = names.len();
        let check_len = |coefficients: &[f64], allow_empty: bool| {
            if coefficients.len() == n || (allow_empty && coefficients.is_empty()) {
                Ok(())
            } else {
                Err(Error::config(
                    "model.coefficients",
                    format!("{} coefficients for {n} parameters", coefficients.len()),
                ))
            }
        };
        match self {
            ModelSpec::Linear { coefficients } | ModelSpec::Quadratic { coefficients } => {
                check_len(coefficients, false)
            }
            ModelSpec::Product { coefficients, .. } => check_len(coefficients, true),
            ModelSpec::Bufferbox { scenario } => {
                if let Some(bad) = names.iter().find(|name| !bufferbox::PARAMETER_NAMES.contains(&name.as_str())) {
                    return Err(Error::config(
                        "parameters",
                        format!(
                            "`{bad}` is not a buffer model parameter (expected one of {})",
                            bufferbox::PARAMETER_NAMES.join(", ")
                        ),
                    ));
                }
                scenario
                    .validate()
                    .map_err(|e| Error::config("model.scenario", e.to_string()))
            }
            ModelSpec::External { command, timeout_secs } => {
                if command.is_empty() || command[0].is_empty() {
                    return Err(Error::config("model.command", "must name an executable"));
                }
                match timeout_secs {
                    Some(t) if !(t.is_finite() && *t > 0.0) => {
                        Err(Error::config("model.timeout_secs", format!("must be positive, got {t}")))
                    }
                    _ => Ok(()),
                }
            }
        }
    }

    /// Instantiate the model. `objective` only affects the buffer model.
    pub fn build(&self, names: &[String], objective: BufferboxObjective) -> Result<Arc<dyn Model>> {
        self.validate(names)?;
        Ok(match self {
            ModelSpec::Linear { coefficients } => Arc::new(LinearModel::new(coefficients.clone())),
            ModelSpec::Quadratic { coefficients } => Arc::new(QuadraticModel::new(coefficients.clone())),
            ModelSpec::Product {
                coefficients,
                interaction,
            } => Arc::new(ProductModel::new(coefficients.clone(), *interaction)),
            ModelSpec::Bufferbox { scenario } => {
                Arc::new(BufferboxModel::new(names.to_vec(), scenario.clone(), objective)?)
            }
            ModelSpec::External { command, timeout_secs } => Arc::new(ExternalModel::new(
                command.clone(),
                names.to_vec(),
                timeout_secs.map(Duration::from_secs_f64),
            )),
        })
    }
}

pub(super) fn digest_id(kind: &str, content: &serde_json::Value) -> String {
    let digest = Sha256::digest(content.to_string().as_bytes());
    format!("{kind}-{}", &hex::encode(digest)[..16])
}

fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected,
            got: x.len(),
            context: "model input",
        })
    }
}

#[derive(Debug, Clone)]
pub struct LinearModel {
    coefficients: Vec<f64>,
    id: String,
}

impl LinearModel {
    pub fn new(coefficients: Vec<f64>) -> Self {
        let id = digest_id("linear", &json!(coefficients));
        LinearModel { coefficients, id }
    }
}

impl Model for LinearModel {
    fn id(&self) -> &str {
        &self.id
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.coefficients.len(), x)?;
        Ok(self.coefficients.iter().zip(x).map(|(a, v)| a * v).sum())
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticModel {
    coefficients: Vec<f64>,
    id: String,
}

impl QuadraticModel {
    pub fn new(coefficients: Vec<f64>) -> Self {
        let id = digest_id("quadratic", &json!(coefficients));
        QuadraticModel { coefficients, id }
    }
}

impl Model for QuadraticModel {
    fn id(&self) -> &str {
        &self.id
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.coefficients.len(), x)?;
        Ok(self.coefficients.iter().zip(x).map(|(a, v)| a * v * v).sum())
    }
}

#[derive(Debug, Clone)]
pub struct ProductModel {
    coefficients: Vec<f64>,
    interaction: f64,
    id: String,
}

impl ProductModel {
    pub fn new(coefficients: Vec<f64>, interaction: f64) -> Self {
        let id = digest_id("product", &json!([coefficients, interaction]));
        ProductModel {
            coefficients,
            interaction,
            id,
        }
    }
}

impl Model for ProductModel {
    fn id(&self) -> &str {
        &self.id
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if !self.coefficients.is_empty() {
            check_dim(self.coefficients.len(), x)?;
        }
        let linear: f64 = self.coefficients.iter().zip(x).map(|(a, v)| a * v).sum();
        Ok(linear + self.interaction * x.iter().product::<f64>())
    }
}

/// Scalar reduction of a buffer model run.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum BufferboxObjective {
    /// Time mean of the total water-column concentration.
    #[default]
    MeanConcentration,
    /// Mean absolute error against observations on the hourly output grid.
    Epsilon(ReferenceSet),
}

#[derive(Debug, Clone)]
pub struct BufferboxModel {
    names: Vec<String>,
    scenario: Scenario,
    objective: BufferboxObjective,
    id: String,
}

impl BufferboxModel {
    pub fn new(names: Vec<String>, scenario: Scenario, objective: BufferboxObjective) -> Result<Self> {
        scenario.validate()?;
        let objective_id = match &objective {
            BufferboxObjective::MeanConcentration => json!("mean_concentration"),
            BufferboxObjective::Epsilon(reference) => {
                if reference.len() != Self::sites(&scenario).len() {
                    return Err(Error::UndefinedObjective(format!(
                        "{} reference entries for {} model outputs",
                        reference.len(),
                        Self::sites(&scenario).len()
                    )));
                }
                json!({"epsilon": [reference.values(), reference.mask()]})
            }
        };
        let id = digest_id("bufferbox", &json!([names, scenario, objective_id]));
        Ok(BufferboxModel {
            names,
            scenario,
            objective,
            id,
        })
    }

    /// Observation sites of the output series: one cell, every output time.
    pub fn sites(scenario: &Scenario) -> Vec<Site> {
        let n = (scenario.horizon / scenario.output_interval + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|k| Site {
                time: k as f64 * scenario.output_interval,
                cell: 0,
            })
            .collect()
    }

    pub fn params(&self, x: &[f64]) -> Result<BufferParams> {
        check_dim(self.names.len(), x)?;
        BufferParams::from_named(self.names.iter().map(String::as_str).zip(x.iter().copied()))
    }
}

/// Observations from a run with every baseline parameter perturbed by a
/// random factor in `[1 - perturbation, 1 + perturbation]`, keeping each
/// output with probability `coverage`.
pub fn synthetic_reference(
    scenario: &Scenario,
    perturbation: f64,
    coverage: f64,
    seed: u64,
) -> Result<Vec<(Site, f64)>> {
    if !(0.0..1.0).contains(&perturbation) {
        return Err(Error::config(
            "objective.perturbation",
            format!("must lie in [0, 1), got {perturbation}"),
        ));
    }
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::config("objective.coverage", format!("must lie in (0, 1], got {coverage}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = BufferParams::baseline();
    for name in bufferbox::PARAMETER_NAMES {
        let factor = 1.0 + perturbation * rng.random_range(-1.0..=1.0);
        let value = params.get(name)? * factor;
        params.set(name, value)?;
    }
    let output = bufferbox::run(&params, scenario)?;
    let sites = BufferboxModel::sites(scenario);
    Ok(thin_observations(&sites, &output.concentration, coverage, seed.wrapping_add(1)))
}

impl Model for BufferboxModel {
    fn id(&self) -> &str {
        &self.id
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let output = bufferbox::run(&self.params(x)?, &self.scenario)?;
        match &self.objective {
            BufferboxObjective::MeanConcentration => Ok(output.mean_concentration()),
            BufferboxObjective::Epsilon(reference) => epsilon(&output.concentration, reference),
        }
    }
}
