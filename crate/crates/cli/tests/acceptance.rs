//! Acceptance checks. Each criterion prints one PASS or FAIL line; the
//! process exits non-zero if any fails.

use std::collections::HashSet;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use cmorris::bufferbox::{run, BufferParams, Scenario, PARAMETER_NAMES};
use cmorris::campaign::{self, CampaignConfig, RunOptions};
use cmorris::copula::{
    block_boxes, build_dependence_model, corner_distribution, CornerOptions, CorrelationScale, CorrelationSpec,
    DependenceModel,
};
use cmorris::effects::{elementary_effects, measures};
use cmorris::evaluator::{scale, synthetic_reference, BufferboxModel, BufferboxObjective, LinearModel, Model, ParameterSpec};
use cmorris::grid::{all_paths, count_paths, BlockOrigin, CornerCode, GridConfig};
use cmorris::objective::ReferenceSet;
use cmorris::sampler::{build_plan, lhsd_blocks, PlanOptions};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn c1_corner_probabilities() -> Outcome {
    let start = Instant::now();
    let spec = CorrelationSpec::new(
        &[vec![1.0, -0.7, -0.7], vec![-0.7, 1.0, 0.7], vec![-0.7, 0.7, 1.0]],
        CorrelationScale::Pearson,
    )
    .map_err(|e| e.to_string())?;
    let model = build_dependence_model(&spec).map_err(|e| e.to_string())?;
    let cfg = GridConfig::new(3, 2, 1).unwrap();
    let origin = BlockOrigin::new(&cfg, vec![0, 0, 0]).unwrap();
    let dist = corner_distribution(&model, &block_boxes(&cfg, &origin), &CornerOptions::default())
        .map_err(|e| e.to_string())?;
    let p000 = dist.probability(&CornerCode::from_bits(&[0, 0, 0]));
    let p100 = dist.probability(&CornerCode::from_bits(&[1, 0, 0]));
    let elapsed = start.elapsed().as_secs_f64();
    let msg = format!("P(0,0,0)={p000:.4} P(1,0,0)={p100:.4} in {elapsed:.2}s");
    ensure((p000 - 0.0633).abs() <= 2e-3 && (p100 - 0.3101).abs() <= 2e-3 && elapsed < 60.0, msg.clone())?;
    Ok(msg)
}

fn c2_campaign_budget() -> Outcome {
    let cfg = CampaignConfig::northsea();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = campaign::run_campaign(&cfg, dir.path(), &RunOptions::default()).map_err(|e| e.to_string())?;
    let plan = campaign::PlanFile::read(&dir.path().join("plan.json")).map_err(|e| e.to_string())?;
    let points = plan.plan.evaluation_count();
    let records = campaign::read_records(&dir.path().join("records.jsonl")).map_err(|e| e.to_string())?;
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).map_err(|e| e.to_string())?;
    let rows = csv.lines().count() - 1;
    let msg = format!(
        "{} parameters, {points} points, {} records, {} factors, {rows} report rows",
        cfg.parameters.len(),
        records.len(),
        report.factors.len()
    );
    ensure(points == 80 && records.len() == 80 && report.factors.len() == 7 && rows == 7, msg.clone())?;
    Ok(msg)
}

/// All point sequences that change each coordinate once by ±s, each path
/// counted once regardless of direction.
fn enumerate_paths(n: usize, p: u32, s: u32) -> usize {
    fn extend(p: u32, s: u32, seq: &mut Vec<Vec<u32>>, moved: &mut [bool], out: &mut HashSet<Vec<Vec<u32>>>) {
        if seq.len() == moved.len() + 1 {
            let mut rev = seq.clone();
            rev.reverse();
            out.insert(seq.clone().min(rev));
            return;
        }
        let last = seq.last().unwrap().clone();
        for axis in 0..moved.len() {
            if moved[axis] {
                continue;
            }
            for next_level in [last[axis].checked_sub(s), Some(last[axis] + s).filter(|&l| l < p)].into_iter().flatten() {
                let mut next = last.clone();
                next[axis] = next_level;
                moved[axis] = true;
                seq.push(next);
                extend(p, s, seq, moved, out);
                seq.pop();
                moved[axis] = false;
            }
        }
    }
    let mut out = HashSet::new();
    for code in 0..(p as usize).pow(n as u32) {
        let start: Vec<u32> = (0..n).map(|j| (code / (p as usize).pow(j as u32) % p as usize) as u32).collect();
        extend(p, s, &mut vec![start], &mut vec![false; n], &mut out);
    }
    out.len()
}

fn c3_path_count() -> Outcome {
    let mut cases = 0;
    for n in 1..=3 {
        for p in 2..=4u32 {
            for s in 1..p {
                let cfg = GridConfig::new(n, p, s).unwrap();
                let expected = enumerate_paths(n, p, s) as u128;
                let counted = count_paths(&cfg).map_err(|e| e.to_string())?;
                let listed = all_paths(&cfg).map_err(|e| e.to_string())?.len() as u128;
                ensure(
                    counted == expected && listed == expected,
                    format!("n={n} p={p} s={s}: formula {counted}, listed {listed}, enumerated {expected}"),
                )?;
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} grids match exhaustive enumeration"))
}

fn chi_square_p(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

fn c4_degeneration() -> Outcome {
    let cfg = GridConfig::new(2, 4, 1).unwrap();
    let model = DependenceModel::independent(2);
    let l = cfg.block_positions() as usize;
    let mut cells = vec![0u64; l * l];
    let mut corners = vec![0u64; 4];
    let mut orders = vec![0u64; 2];
    for seed in 0..10_000u64 {
        let plan = build_plan(&model, &cfg, 1, seed, &PlanOptions::default()).map_err(|e| e.to_string())?;
        let path = &plan.paths[0];
        cells[path.origin.levels[0] as usize * l + path.origin.levels[1] as usize] += 1;
        corners[path.start.index()] += 1;
        orders[path.order[0]] += 1;
    }
    let ps: Vec<f64> = [&cells, &corners, &orders].iter().map(|c| chi_square_p(c)).collect();
    let msg = format!("p-values cells {:.3}, corners {:.3}, orders {:.3}", ps[0], ps[1], ps[2]);
    ensure(ps.iter().all(|&p| p > 0.01), msg.clone())?;
    Ok(msg)
}

fn c5_linear_model() -> Outcome {
    let a = [0.3, -2.0, 1.1, -0.05, 4.0, 0.7];
    let n = a.len();
    let spec = CorrelationSpec::from_pairs(n, &[(0, 2, 0.5), (1, 4, -0.3), (3, 5, 0.8)], CorrelationScale::Spearman)
        .map_err(|e| e.to_string())?;
    let dep = build_dependence_model(&spec).map_err(|e| e.to_string())?;
    let cfg = GridConfig::new(n, 4, 2).unwrap();
    let specs: Vec<ParameterSpec> = (0..n).map(|j| ParameterSpec::new(format!("x{j}"), 0.0, 1.0)).collect();
    let model = LinearModel::new(a.to_vec());
    let plan = build_plan(&dep, &cfg, 20, 99, &PlanOptions::default()).map_err(|e| e.to_string())?;
    let outputs = plan
        .points()
        .map(|p| model.evaluate(&scale(p, &cfg, &dep, &specs)?))
        .collect::<cmorris::Result<Vec<f64>>>()
        .map_err(|e| e.to_string())?;
    let names: Vec<String> = specs.iter().map(|s| s.name.clone()).collect();
    let report = measures(&elementary_effects(&plan, &outputs).map_err(|e| e.to_string())?, &names)
        .map_err(|e| e.to_string())?;
    let mut worst_sigma = 0.0f64;
    let mut worst_rel = 0.0f64;
    for (f, aj) in report.factors.iter().zip(a) {
        worst_sigma = worst_sigma.max(f.sigma.unwrap_or(f64::INFINITY));
        worst_rel = worst_rel.max((f.mu_star - aj.abs()).abs() / aj.abs());
    }
    let mut expected: Vec<usize> = (0..n).collect();
    expected.sort_by(|&i, &j| a[j].abs().total_cmp(&a[i].abs()));
    let msg = format!("max sigma {worst_sigma:.1e}, max mu* rel err {worst_rel:.1e}, ranking {:?}", report.ranking);
    ensure(worst_sigma <= 1e-12 && worst_rel <= 1e-12 && report.ranking == expected, msg.clone())?;
    Ok(msg)
}

fn random_model(n: usize, kind: u64, rng: &mut ChaCha8Rng) -> DependenceModel {
    use rand::Rng;
    match kind % 3 {
        0 => DependenceModel::independent(n),
        1 => {
            // normalized Gram matrix of random vectors
            let v: Vec<Vec<f64>> = (0..n).map(|_| (0..n + 1).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let norm: Vec<f64> = v.iter().map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            if i == j {
                                1.0
                            } else {
                                0.9 * v[i].iter().zip(&v[j]).map(|(x, y)| x * y).sum::<f64>() / (norm[i] * norm[j])
                            }
                        })
                        .collect()
                })
                .collect();
            build_dependence_model(&CorrelationSpec::new(&rows, CorrelationScale::Pearson).unwrap()).unwrap()
        }
        _ => {
            let pairs: Vec<(usize, usize, f64)> = (0..n / 2)
                .map(|k| (2 * k, 2 * k + 1, if rng.random::<bool>() { 1.0 } else { -1.0 }))
                .collect();
            build_dependence_model(&CorrelationSpec::from_pairs(n, &pairs, CorrelationScale::Spearman).unwrap()).unwrap()
        }
    }
}

fn c6_lhsd_stratification() -> Outcome {
    let mut rounds_checked = 0;
    for seed in 0..300u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2 + (seed % 5) as usize;
        let model = random_model(n, seed, &mut rng);
        let p = 3 + (seed % 6) as u32;
        let s = 1 + (seed / 7 % (p as u64 - 1)) as u32;
        let cfg = GridConfig::new(model.dim(), p, s).unwrap();
        let l = (p - s) as usize;
        let blocks = lhsd_blocks(&model, &cfg, 4 * l, &mut rng).map_err(|e| e.to_string())?;
        for round in blocks.chunks(l) {
            for j in 0..model.dim() {
                let mut col: Vec<u32> = round.iter().map(|b| b.levels[j]).collect();
                col.sort_unstable();
                ensure(
                    col == (0..l as u32).collect::<Vec<_>>(),
                    format!("seed {seed}: axis {j} origins {col:?}"),
                )?;
            }
            rounds_checked += 1;
        }
    }
    Ok(format!("{rounds_checked} rounds over 300 seeds are Latin in every axis"))
}

fn c7_comonotone_reflection() -> Outcome {
    let cfg = CampaignConfig::northsea();
    let plan = campaign::plan(&cfg).map_err(|e| e.to_string())?;
    let top = cfg.levels - 1;
    let names = cfg.names();
    let idx = |n: &str| names.iter().position(|x| x == n).unwrap();
    let mut checked = 0;
    for point in plan.points().map_err(|e| e.to_string())? {
        for pair in cfg.correlations.pairs.iter().filter(|p| p.rho == -1.0) {
            let (i, j) = (idx(&pair.a), idx(&pair.b));
            let (li, lj) = (point.member_levels[i], point.member_levels[j]);
            ensure(li + lj == top, format!("point {}: {}={li}, {}={lj}", point.index, pair.a, pair.b))?;
            // the scaled values sit on the same mirrored levels
            for (k, level) in [(i, li), (j, lj)] {
                let spec = &cfg.parameters[k];
                let t = (point.values[k] - spec.min) / (spec.max - spec.min);
                ensure(
                    (t * top as f64 - level as f64).abs() < 1e-9,
                    format!("point {}: {} = {} is not level {level}", point.index, spec.name, point.values[k]),
                )?;
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} anti-correlated member pairs reflect exactly"))
}

fn c8_copula_fidelity() -> Outcome {
    let spec = CorrelationSpec::from_pairs(2, &[(0, 1, 0.7)], CorrelationScale::Spearman).map_err(|e| e.to_string())?;
    let model = build_dependence_model(&spec).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let samples = model.sample(100_000, &mut rng);
    let rank = |j: usize| {
        let mut idx: Vec<usize> = (0..samples.len()).collect();
        idx.sort_by(|&a, &b| samples[a][j].total_cmp(&samples[b][j]));
        let mut r = vec![0.0; samples.len()];
        for (k, &i) in idx.iter().enumerate() {
            r[i] = k as f64;
        }
        r
    };
    let (rx, ry) = (rank(0), rank(1));
    let n = rx.len() as f64;
    let m = (n - 1.0) / 2.0;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - m) * (b - m)).sum();
    let var: f64 = rx.iter().map(|a| (a - m).powi(2)).sum();
    let rho = cov / var;
    let msg = format!("empirical Spearman {rho:.4} over 1e5 samples");
    ensure((rho - 0.7).abs() <= 0.02, msg.clone())?;
    Ok(msg)
}

fn c9_bufferbox() -> Outcome {
    let params = BufferParams::baseline();
    let scenario = Scenario::default();
    let half = Scenario { dt: scenario.dt / 2.0, ..scenario.clone() };
    let a = run(&params, &scenario).map_err(|e| e.to_string())?;
    let b = run(&params, &half).map_err(|e| e.to_string())?;
    let mean_change = (a.mean_concentration() - b.mean_concentration()).abs() / b.mean_concentration().abs();

    let names: Vec<String> = PARAMETER_NAMES.iter().map(|s| s.to_string()).collect();
    let x: Vec<f64> = names.iter().map(|n| params.get(n).unwrap()).collect();
    let sites = BufferboxModel::sites(&scenario);
    let observations = synthetic_reference(&scenario, 0.25, 0.6, 7).map_err(|e| e.to_string())?;
    let reference = ReferenceSet::align(&sites, &observations).map_err(|e| e.to_string())?;
    let eps = |sc: &Scenario| -> cmorris::Result<f64> {
        BufferboxModel::new(names.clone(), sc.clone(), BufferboxObjective::Epsilon(reference.clone()))?.evaluate(&x)
    };
    let (ea, eb) = (eps(&scenario).map_err(|e| e.to_string())?, eps(&half).map_err(|e| e.to_string())?);
    let eps_change = (ea - eb).abs() / eb.abs();
    let drift = a.max_step_drift.max(b.max_step_drift);
    let msg = format!("max step drift {drift:.1e}, dt-halving change: mean {mean_change:.1e}, epsilon {eps_change:.1e}");
    ensure(drift <= 1e-9 && mean_change <= 1e-3 && eps_change <= 1e-3, msg.clone())?;
    Ok(msg)
}

fn demo(dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_cmorris"))
        .args(["demo", "--out"])
        .arg(dir)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(
        out.status.success(),
        format!("demo failed: {}", String::from_utf8_lossy(&out.stderr)),
    )
}

fn records_without_timing(path: &Path) -> Result<Vec<String>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    text.lines()
        .map(|line| {
            let mut v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
            v.as_object_mut().ok_or("record is not an object")?.remove("wall_time_ms");
            Ok(v.to_string())
        })
        .collect()
}

fn c10_determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    demo(a.path())?;
    demo(b.path())?;
    for file in ["plan.json", "report.csv", "report.json", "plot.svg"] {
        let x = std::fs::read(a.path().join(file)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.path().join(file)).map_err(|e| e.to_string())?;
        ensure(x == y, format!("{file} differs between runs"))?;
    }
    let ra = records_without_timing(&a.path().join("records.jsonl"))?;
    let rb = records_without_timing(&b.path().join("records.jsonl"))?;
    ensure(ra == rb, "records differ between runs")?;
    Ok(format!("two demo runs agree on plan, {} records and report", ra.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("corner probabilities", c1_corner_probabilities),
        ("campaign budget", c2_campaign_budget),
        ("path-count oracle", c3_path_count),
        ("classic Morris degeneration", c4_degeneration),
        ("linear-model property", c5_linear_model),
        ("LHSD stratification", c6_lhsd_stratification),
        ("comonotone-group consistency", c7_comonotone_reflection),
        ("copula sampling fidelity", c8_copula_fidelity),
        ("bufferbox conservation", c9_bufferbox),
        ("end-to-end determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
