//! Measures over the full path population, checked against a direct
//! computation from the grid points.

use cmorris::effects::{elementary_effects, measures};
use cmorris::grid::{all_paths, GridConfig};
use cmorris::sampler::SamplingPlan;

fn model(u: &[f64]) -> f64 {
    3.0 * u[0] + u[1] * u[1] + 2.0 * u[0] * u[1]
}

struct Oracle {
    mu: f64,
    mu_star: f64,
    sigma: f64,
}

fn oracle(cfg: &GridConfig, plan: &SamplingPlan, factor: usize) -> Oracle {
    let top = (cfg.levels() - 1) as f64;
    let mut ee = Vec::new();
    for path in &plan.paths {
        for w in path.points.windows(2) {
            let (a, b) = (&w[0].levels, &w[1].levels);
            let axis = (0..a.len()).find(|&j| a[j] != b[j]).unwrap();
            if axis != factor {
                continue;
            }
            let ua: Vec<f64> = a.iter().map(|&l| l as f64 / top).collect();
            let ub: Vec<f64> = b.iter().map(|&l| l as f64 / top).collect();
            ee.push((model(&ub) - model(&ua)) / (ub[axis] - ua[axis]));
        }
    }
    let r = ee.len() as f64;
    let mu = ee.iter().sum::<f64>() / r;
    let mu_star = ee.iter().map(|e| e.abs()).sum::<f64>() / r;
    let sigma = (ee.iter().map(|e| (e - mu).powi(2)).sum::<f64>() / (r - 1.0)).sqrt();
    Oracle { mu, mu_star, sigma }
}

#[test]
fn full_population_measures_match_direct_computation() {
    for s in 1..=3 {
        let cfg = GridConfig::new(2, 4, s).unwrap();
        let plan = SamplingPlan::from_paths(cfg, 0, all_paths(&cfg).unwrap()).unwrap();
        let outputs: Vec<f64> = plan.points().map(|p| model(&p.to_unit(&cfg))).collect();
        let report = measures(&elementary_effects(&plan, &outputs).unwrap(), &["x1".into(), "x2".into()]).unwrap();
        for j in 0..2 {
            let o = oracle(&cfg, &plan, j);
            let f = &report.factors[j];
            assert_eq!(f.effects, plan.paths.len());
            assert!((f.mu - o.mu).abs() <= 1e-12 * o.mu.abs().max(1.0), "s={s} j={j}");
            assert!((f.mu_star - o.mu_star).abs() <= 1e-12 * o.mu_star.max(1.0), "s={s} j={j}");
            assert!((f.sigma.unwrap() - o.sigma).abs() <= 1e-12 * o.sigma.max(1.0), "s={s} j={j}");
        }
    }
}

#[test]
fn full_population_mean_effect_of_x1() {
    // dM/dx1 = 3 + 2 x2 is linear in x2, and every path visits x2 levels
    // symmetrically, so the mean effect is 3 + 2 * 0.5 = 4 regardless of s
    for s in 1..=3 {
        let cfg = GridConfig::new(2, 4, s).unwrap();
        let plan = SamplingPlan::from_paths(cfg, 0, all_paths(&cfg).unwrap()).unwrap();
        let outputs: Vec<f64> = plan.points().map(|p| model(&p.to_unit(&cfg))).collect();
        let report = measures(&elementary_effects(&plan, &outputs).unwrap(), &["x1".into(), "x2".into()]).unwrap();
        assert!((report.factors[0].mu - 4.0).abs() < 1e-12, "s={s}: {}", report.factors[0].mu);
    }
}
