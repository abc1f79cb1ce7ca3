//! Screening campaigns: configuration, planning, execution and analysis.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::copula::{build_dependence_model, CorrelationScale, CorrelationSpec, DependenceModel, Sign};
use crate::effects::{elementary_effects, measures, SensitivityReport};
use crate::error::{Error, Result};
use crate::evaluator::{
    content_hash, member_levels, scale, synthetic_reference, validate_specs, BufferboxModel,
    BufferboxObjective, EvaluationRecord, Evaluator, Model, ModelSpec, ParameterSpec,
};
use crate::grid::GridConfig;
use crate::objective::{read_reference_csv, ReferenceSet};
use crate::sampler::{build_plan, PlanOptions, SamplingPlan};

/// The shipped North Sea buffer-model campaign.
pub const NORTHSEA_CONFIG: &str = include_str!("../configs/northsea.json");

const PLAN_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CopulaKind {
    /// Correlations as configured: ±1 pairs become groups, the rest a Gaussian copula.
    #[default]
    Gaussian,
    /// Every parameter its own independent factor; correlations are ignored.
    Independence,
}

impl std::str::FromStr for CopulaKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gaussian" => Ok(CopulaKind::Gaussian),
            "independence" => Ok(CopulaKind::Independence),
            other => Err(format!("unknown copula `{other}` (expected gaussian or independence)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub a: String,
    pub b: String,
    pub rho: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationConfig {
    #[serde(default)]
    pub scale: CorrelationScale,
    #[serde(default)]
    pub pairs: Vec<PairSpec>,
}

/// Quantity of interest for the buffer model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    #[default]
    MeanConcentration,
    /// ε against a `time,cell,value` CSV file; relative paths are resolved
    /// against the configuration file's directory.
    Epsilon { reference: PathBuf },
    /// ε against a perturbed-parameter run of the same scenario.
    SyntheticEpsilon {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_coverage")]
        coverage: f64,
        #[serde(default = "default_perturbation")]
        perturbation: f64,
    },
}

fn default_coverage() -> f64 {
    0.6
}

fn default_perturbation() -> f64 {
    0.25
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub parameters: Vec<ParameterSpec>,
    #[serde(default)]
    pub correlations: CorrelationConfig,
    #[serde(default)]
    pub copula: CopulaKind,
    pub levels: u32,
    pub step: u32,
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSpec,
    #[serde(default)]
    pub objective: ObjectiveSpec,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub sampling: PlanOptions,
}

/// Command-line overrides of configuration fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub levels: Option<u32>,
    pub step: Option<u32>,
    pub paths: Option<usize>,
    pub copula: Option<CopulaKind>,
    pub workers: Option<usize>,
}

impl CampaignConfig {
    /// Parse and validate. Relative reference paths are resolved against `base_dir`.
    pub fn from_json(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut cfg: CampaignConfig = serde_json::from_str(text).map_err(|source| Error::Json {
            context: "campaign configuration".into(),
            source,
        })?;
        if let (ObjectiveSpec::Epsilon { reference }, Some(base)) = (&mut cfg.objective, base_dir) {
            if reference.is_relative() {
                *reference = base.join(&*reference);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path.parent())
    }

    pub fn northsea() -> Self {
        Self::from_json(NORTHSEA_CONFIG, None).expect("shipped configuration is valid")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.levels {
            self.levels = v;
        }
        if let Some(v) = o.step {
            self.step = v;
        }
        if let Some(v) = o.paths {
            self.paths = v;
        }
        if let Some(v) = o.copula {
            self.copula = v;
        }
        if let Some(v) = o.workers {
            self.workers = v;
        }
        self.validate()
    }

    pub fn names(&self) -> Vec<String> {
        self.parameters.iter().map(|p| p.name.clone()).collect()
    }

    /// Check every field; errors name the offending one.
    pub fn validate(&self) -> Result<()> {
        validate_specs(&self.parameters)?;
        if self.levels < 2 {
            return Err(Error::config("levels", format!("need at least 2 levels, got {}", self.levels)));
        }
        if self.step == 0 || self.step >= self.levels {
            return Err(Error::config(
                "step",
                format!("need 1 <= step < levels = {}, got {}", self.levels, self.step),
            ));
        }
        if self.paths == 0 {
            return Err(Error::config("paths", "need at least one path"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers", "need at least one worker"));
        }
        self.correlation_spec()?;
        self.dependence_model()?;
        self.model.validate(&self.names())?;
        match (&self.objective, &self.model) {
            (ObjectiveSpec::MeanConcentration, _) => {}
            (_, ModelSpec::Bufferbox { .. }) => {}
            _ => {
                return Err(Error::config(
                    "objective",
                    "an ε objective needs the bufferbox model",
                ))
            }
        }
        if let ObjectiveSpec::SyntheticEpsilon {
            coverage, perturbation, ..
        } = self.objective
        {
            if !(coverage > 0.0 && coverage <= 1.0) {
                return Err(Error::config("objective.coverage", format!("must lie in (0, 1], got {coverage}")));
            }
            if !(0.0..1.0).contains(&perturbation) {
                return Err(Error::config(
                    "objective.perturbation",
                    format!("must lie in [0, 1), got {perturbation}"),
                ));
            }
        }
        Ok(())
    }

    pub fn correlation_spec(&self) -> Result<CorrelationSpec> {
        let index: HashMap<&str, usize> = self
            .parameters
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.as_str(), i))
            .collect();
        let mut pairs = Vec::with_capacity(self.correlations.pairs.len());
        for (k, pair) in self.correlations.pairs.iter().enumerate() {
            let lookup = |name: &str, side: &str| {
                index.get(name).copied().ok_or_else(|| {
                    Error::config(
                        format!("correlations.pairs[{k}].{side}"),
                        format!("unknown parameter `{name}`"),
                    )
                })
            };
            let (a, b) = (lookup(&pair.a, "a")?, lookup(&pair.b, "b")?);
            if a == b {
                return Err(Error::config(
                    format!("correlations.pairs[{k}].b"),
                    "a parameter cannot be paired with itself",
                ));
            }
            if !(pair.rho.is_finite() && pair.rho.abs() <= 1.0) {
                return Err(Error::config(
                    format!("correlations.pairs[{k}].rho"),
                    format!("must lie in [-1, 1], got {}", pair.rho),
                ));
            }
            pairs.push((a, b, pair.rho));
        }
        CorrelationSpec::from_pairs(self.parameters.len(), &pairs, self.correlations.scale)
            .map_err(|e| Error::config("correlations", e.to_string()))
    }

    pub fn dependence_model(&self) -> Result<DependenceModel> {
        match self.copula {
            CopulaKind::Independence => Ok(DependenceModel::independent(self.parameters.len())),
            CopulaKind::Gaussian => build_dependence_model(&self.correlation_spec()?)
                .map_err(|e| Error::config("correlations", e.to_string())),
        }
    }

    pub fn grid(&self, factors: usize) -> Result<GridConfig> {
        GridConfig::new(factors, self.levels, self.step).map_err(|e| Error::config("levels", e.to_string()))
    }

    fn bufferbox_objective(&self) -> Result<BufferboxObjective> {
        let ModelSpec::Bufferbox { scenario } = &self.model else {
            return Ok(BufferboxObjective::MeanConcentration);
        };
        let sites = BufferboxModel::sites(scenario);
        Ok(match &self.objective {
            ObjectiveSpec::MeanConcentration => BufferboxObjective::MeanConcentration,
            ObjectiveSpec::Epsilon { reference } => {
                let observations = read_reference_csv(reference)?;
                BufferboxObjective::Epsilon(ReferenceSet::align(&sites, &observations)?)
            }
            ObjectiveSpec::SyntheticEpsilon {
                seed,
                coverage,
                perturbation,
            } => {
                let observations = synthetic_reference(scenario, *perturbation, *coverage, *seed)?;
                BufferboxObjective::Epsilon(ReferenceSet::align(&sites, &observations)?)
            }
        })
    }

    /// Instantiate the configured model.
    pub fn build_model(&self) -> Result<Arc<dyn Model>> {
        self.model.build(&self.names(), self.bufferbox_objective()?)
    }
}

/// One effective factor: a parameter or a comonotone group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorInfo {
    pub name: String,
    pub members: Vec<FactorMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorMember {
    pub name: String,
    pub sign: Sign,
}

/// Everything needed to run and analyze a campaign elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub format: u32,
    pub config: CampaignConfig,
    pub copula: String,
    pub factors: Vec<FactorInfo>,
    pub plan: SamplingPlan,
}

/// A plan point with its physical coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPoint {
    pub index: usize,
    pub path: usize,
    pub step: usize,
    pub levels: Vec<u32>,
    pub member_levels: Vec<u32>,
    pub values: Vec<f64>,
}

impl PlanFile {
    pub fn factor_names(&self) -> Vec<String> {
        self.factors.iter().map(|f| f.name.clone()).collect()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let plan: PlanFile = serde_json::from_str(&text).map_err(|source| Error::Json {
            context: format!("plan file {}", path.display()),
            source,
        })?;
        if plan.format != PLAN_FORMAT {
            return Err(Error::config("format", format!("unsupported plan format {}", plan.format)));
        }
        plan.config.validate()?;
        Ok(plan)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &(to_pretty_json(self)? + "\n"))
    }

    /// Plan points in order, scaled to physical values.
    pub fn points(&self) -> Result<Vec<PlannedPoint>> {
        let model = self.config.dependence_model()?;
        let cfg = &self.plan.grid;
        let per_path = self.plan.points_per_path();
        self.plan
            .points()
            .enumerate()
            .map(|(index, point)| {
                Ok(PlannedPoint {
                    index,
                    path: index / per_path,
                    step: index % per_path,
                    levels: point.levels.clone(),
                    member_levels: member_levels(point, cfg, &model)?,
                    values: scale(point, cfg, &model, &self.config.parameters)?,
                })
            })
            .collect()
    }
}

fn describe_copula(cfg: &CampaignConfig, model: &DependenceModel) -> String {
    match cfg.copula {
        CopulaKind::Independence => "independence".into(),
        CopulaKind::Gaussian => {
            let grouped = model.groups().iter().filter(|g| g.members.len() > 1).count();
            format!(
                "gaussian ({:?} scale), {} factors, {} comonotone groups, residual {}",
                cfg.correlations.scale,
                model.dim(),
                grouped,
                model.copula().name()
            )
            .to_lowercase()
        }
    }
}

fn factor_infos(cfg: &CampaignConfig, model: &DependenceModel) -> Vec<FactorInfo> {
    model
        .groups()
        .iter()
        .map(|g| {
            let members: Vec<FactorMember> = g
                .members
                .iter()
                .map(|m| FactorMember {
                    name: cfg.parameters[m.param].name.clone(),
                    sign: m.sign,
                })
                .collect();
            FactorInfo {
                name: members.iter().map(|m| m.name.as_str()).collect::<Vec<_>>().join(" / "),
                members,
            }
        })
        .collect()
}

/// Sample the campaign's paths.
pub fn plan(cfg: &CampaignConfig) -> Result<PlanFile> {
    cfg.validate()?;
    let model = cfg.dependence_model()?;
    let grid = cfg.grid(model.dim())?;
    let plan = build_plan(&model, &grid, cfg.paths, cfg.seed, &cfg.sampling)?;
    Ok(PlanFile {
        format: PLAN_FORMAT,
        config: cfg.clone(),
        copula: describe_copula(cfg, &model),
        factors: factor_infos(cfg, &model),
        plan,
    })
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the configured worker count.
    pub workers: Option<usize>,
    /// Per-evaluation limit for external models.
    pub timeout: Option<Duration>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub points: usize,
    /// Records already present and reused.
    pub reused: usize,
    /// Records written by this run.
    pub written: usize,
    /// Model invocations.
    pub calls: usize,
}

/// Read JSON-lines records. A truncated final line (interrupted write) is ignored.
pub fn read_records(path: &Path) -> Result<Vec<EvaluationRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) if Some(i) == last && !line.ends_with('}') => {}
            Err(source) => {
                return Err(Error::Json {
                    context: format!("record on line {} of {}", i + 1, path.display()),
                    source,
                })
            }
        }
    }
    Ok(out)
}

fn record_matches(record: &EvaluationRecord, point: &PlannedPoint) -> bool {
    record.levels == point.levels
        && record.values.len() == point.values.len()
        && record.values.iter().zip(&point.values).all(|(a, b)| a.to_bits() == b.to_bits())
        && record.hash == content_hash(&record.model, &point.values)
}

/// Evaluate every plan point not yet in `records_path`, appending records in
/// plan order.
pub fn run(plan: &PlanFile, records_path: &Path, options: &RunOptions) -> Result<RunSummary> {
    let mut model = plan.config.build_model()?;
    if let (Some(t), ModelSpec::External { command, .. }) = (options.timeout, &plan.config.model) {
        model = Arc::new(crate::evaluator::ExternalModel::new(command.clone(), plan.config.names(), Some(t)));
    }
    let evaluator = Evaluator::new(model);
    let points = plan.points()?;

    let mut done = vec![false; points.len()];
    if records_path.exists() {
        for r in read_records(records_path)? {
            if r.model != evaluator.model_id() {
                continue;
            }
            if let Some(p) = points.get(r.index) {
                if record_matches(&r, p) {
                    done[r.index] = true;
                    evaluator.insert(r.hash.clone(), r.output_or_nan());
                }
            }
        }
    }
    let reused = done.iter().filter(|&&d| d).count();
    let pending: Vec<&PlannedPoint> = points.iter().filter(|p| !done[p.index]).collect();

    // one job per distinct point, in first-occurrence order
    let mut job_of_hash: HashMap<String, usize> = HashMap::new();
    let mut jobs: Vec<&PlannedPoint> = Vec::new();
    let pending_job: Vec<(usize, String)> = pending
        .iter()
        .map(|p| {
            let hash = evaluator.hash(&p.values);
            let j = *job_of_hash.entry(hash.clone()).or_insert_with(|| {
                jobs.push(p);
                jobs.len() - 1
            });
            (j, hash)
        })
        .collect();

    if let Some(parent) = records_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(records_path)
        .map_err(|e| Error::io(records_path, e))?;
    let mut out = BufWriter::new(file);

    let workers = options.workers.unwrap_or(plan.config.workers).max(1).min(jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, Result<(f64, f64)>)>();
    let mut results: Vec<Option<std::result::Result<(f64, f64), String>>> = vec![None; jobs.len()];
    let mut written = 0usize;
    let mut cursor = 0usize;
    let mut first_error: Option<(usize, String)> = None;

    let emit = |results: &[Option<std::result::Result<(f64, f64), String>>],
                    cursor: &mut usize,
                    out: &mut BufWriter<File>,
                    skip_failed: bool|
     -> Result<usize> {
        let mut n = 0;
        while *cursor < pending.len() {
            let (j, hash) = &pending_job[*cursor];
            let (value, ms) = match &results[*j] {
                Some(Ok(v)) => *v,
                Some(Err(_)) | None if skip_failed => {
                    *cursor += 1;
                    continue;
                }
                _ => break,
            };
            let p = pending[*cursor];
            let record = EvaluationRecord {
                index: p.index,
                path: p.path,
                step: p.step,
                levels: p.levels.clone(),
                values: p.values.clone(),
                output: value.is_finite().then_some(value),
                model: evaluator.model_id().to_string(),
                hash: hash.clone(),
                wall_time_ms: ms,
            };
            let line = serde_json::to_string(&record).map_err(|source| Error::Json {
                context: "serializing a record".into(),
                source,
            })?;
            writeln!(out, "{line}")
                .and_then(|_| out.flush())
                .map_err(|e| Error::io(records_path, e))?;
            *cursor += 1;
            n += 1;
        }
        Ok(n)
    };

    std::thread::scope(|scope| -> Result<()> {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, stop, jobs, evaluator) = (&next, &stop, &jobs, &evaluator);
            scope.spawn(move || loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                let j = next.fetch_add(1, Ordering::Relaxed);
                let Some(p) = jobs.get(j) else { break };
                let start = Instant::now();
                let result = evaluator
                    .evaluate(&p.values)
                    .map(|e| (e.value, start.elapsed().as_secs_f64() * 1e3));
                if result.is_err() {
                    stop.store(true, Ordering::Relaxed);
                }
                if tx.send((j, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (j, result) in rx {
            match result {
                Ok(v) => results[j] = Some(Ok(v)),
                Err(e) => {
                    if first_error.is_none() {
                        first_error = Some((jobs[j].index, e.to_string()));
                    }
                    results[j] = Some(Err(e.to_string()));
                }
            }
            if first_error.is_none() {
                written += emit(&results, &mut cursor, &mut out, false)?;
            }
        }
        Ok(())
    })?;

    if let Some((index, message)) = first_error {
        // keep whatever finished so a rerun resumes from there
        emit(&results, &mut cursor, &mut out, true)?;
        return Err(Error::Evaluation { index, message });
    }
    Ok(RunSummary {
        points: points.len(),
        reused,
        written,
        calls: evaluator.calls(),
    })
}

/// Measures from a plan and its records.
///
/// Records are matched to plan points by index, levels, values and hash; when
/// several match, the last one wins.
pub fn analyze(plan: &PlanFile, records: &[EvaluationRecord]) -> Result<SensitivityReport> {
    let points = plan.points()?;
    let mut outputs: Vec<Option<f64>> = vec![None; points.len()];
    let mut models: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        if let Some(p) = points.get(r.index) {
            if record_matches(r, p) {
                outputs[r.index] = Some(r.output_or_nan());
                *models.entry(r.model.as_str()).or_default() += 1;
            }
        }
    }
    if models.len() > 1 {
        return Err(Error::config(
            "records",
            format!("records mix several models: {}", models.keys().cloned().collect::<Vec<_>>().join(", ")),
        ));
    }
    let missing: Vec<usize> = (0..points.len()).filter(|&i| outputs[i].is_none()).collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteRecords { missing });
    }
    let outputs: Vec<f64> = outputs.into_iter().map(Option::unwrap).collect();
    let effects = elementary_effects(&plan.plan, &outputs)?;
    let mut report = measures(&effects, &plan.factor_names())?;
    report.metadata.paths = plan.plan.paths.len();
    report.metadata.levels = plan.plan.grid.levels();
    report.metadata.step = plan.plan.grid.step();
    report.metadata.seed = plan.plan.seed;
    report.metadata.copula = plan.copula.clone();
    report.metadata.evaluations = points.len();
    report.metadata.excluded_paths = effects.excluded;
    Ok(report)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `name,mu,mu_star,sigma,rank,composite`, rows by rank.
pub fn report_csv(report: &SensitivityReport) -> Result<String> {
    let ranks = report.ranks();
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |source| Error::Csv {
        context: "writing the report".into(),
        source,
    };
    w.write_record(["name", "mu", "mu_star", "sigma", "rank", "composite"])
        .map_err(csv_err)?;
    for &f in &report.ranking {
        let m = &report.factors[f];
        w.write_record([
            m.name.clone(),
            m.mu.to_string(),
            m.mu_star.to_string(),
            fmt_opt(m.sigma),
            ranks[f].to_string(),
            fmt_opt(m.composite()),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("report.csv", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Ranking table for the terminal.
pub fn report_table(report: &SensitivityReport) -> String {
    let width = report.factors.iter().map(|f| f.name.len()).max().unwrap_or(4).max(6);
    let mut s = String::new();
    let _ = writeln!(s, "{:>4}  {:<width$}  {:>12}  {:>12}  {:>12}", "rank", "factor", "mu*", "mu", "sigma");
    for (position, &f) in report.ranking.iter().enumerate() {
        let m = &report.factors[f];
        let sigma = m.sigma.map(|v| format!("{v:12.5e}")).unwrap_or_else(|| format!("{:>12}", "-"));
        let _ = writeln!(
            s,
            "{:>4}  {:<width$}  {:12.5e}  {:12.5e}  {sigma}",
            position + 1,
            m.name,
            m.mu_star,
            m.mu
        );
    }
    if !report.metadata.excluded_paths.is_empty() {
        let _ = writeln!(s, "excluded paths:");
        for e in &report.metadata.excluded_paths {
            let _ = writeln!(s, "  path {}: {}", e.path, e.reason);
        }
    }
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Scatter of (μ*, σ) with labeled points.
pub fn report_svg(report: &SensitivityReport) -> String {
    let (w, h) = (640.0, 480.0);
    let (left, right, top, bottom) = (70.0, 30.0, 30.0, 60.0);
    let pts: Vec<(f64, f64, &str)> = report
        .factors
        .iter()
        .map(|f| (f.mu_star, f.sigma.unwrap_or(0.0), f.name.as_str()))
        .collect();
    let nice_max = |v: f64| if v > 0.0 && v.is_finite() { v * 1.1 } else { 1.0 };
    let xmax = nice_max(pts.iter().map(|p| p.0).fold(0.0, f64::max));
    let ymax = nice_max(pts.iter().map(|p| p.1).fold(0.0, f64::max));
    let sx = |x: f64| left + x / xmax * (w - left - right);
    let sy = |y: f64| h - bottom - y / ymax * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#,
        h - bottom,
        w - right
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{0}" stroke="black"/>"#,
        h - bottom
    );
    for k in 0..=4 {
        let fx = xmax * k as f64 / 4.0;
        let fy = ymax * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{fx:.3e}</text>"#,
            sx(fx),
            h - bottom + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{fy:.3e}</text>"#,
            left - 6.0,
            sy(fy) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">μ*</text>"#,
        (left + w - right) / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" font-size="13" transform="rotate(-90 18 {:.1})">σ</text>"#,
        (top + h - bottom) / 2.0,
        (top + h - bottom) / 2.0
    );
    for (x, y, name) in &pts {
        let (px, py) = (sx(*x), sy(*y));
        let _ = writeln!(s, r#"<circle cx="{px:.1}" cy="{py:.1}" r="4" fill="steelblue"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            px + 6.0,
            py - 6.0,
            xml_escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        context: "serializing output".into(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Files written by [`write_report`].
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub svg: PathBuf,
}

pub fn write_report(report: &SensitivityReport, dir: &Path) -> Result<ReportFiles> {
    let files = ReportFiles {
        csv: dir.join("report.csv"),
        json: dir.join("report.json"),
        svg: dir.join("plot.svg"),
    };
    write_text(&files.csv, &report_csv(report)?)?;
    write_text(&files.json, &(to_pretty_json(report)? + "\n"))?;
    write_text(&files.svg, &report_svg(report))?;
    Ok(files)
}

/// Plan, run and analyze in `dir`: `plan.json`, `records.jsonl` and the report files.
pub fn run_campaign(cfg: &CampaignConfig, dir: &Path, options: &RunOptions) -> Result<SensitivityReport> {
    let plan_file = plan(cfg)?;
    let plan_path = dir.join("plan.json");
    let records_path = dir.join("records.jsonl");
    plan_file.write(&plan_path)?;
    run(&plan_file, &records_path, options)?;
    let report = analyze(&plan_file, &read_records(&records_path)?)?;
    write_report(&report, dir)?;
    Ok(report)
}
