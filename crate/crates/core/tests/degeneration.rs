//! Under the independence copula the sampler reduces to classic Morris:
//! cells, start corners and traversal orders are all uniform.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use cmorris::copula::DependenceModel;
use cmorris::grid::GridConfig;
use cmorris::sampler::{build_plan, PlanOptions};

const PLANS: u64 = 10_000;
const ALPHA: f64 = 0.01;

fn chi_square_p(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

#[test]
fn cells_corners_and_orders_are_uniform() {
    let cfg = GridConfig::new(2, 4, 1).unwrap();
    let model = DependenceModel::independent(2);
    let l = cfg.block_positions() as usize;
    let mut cells = vec![0u64; l * l];
    let mut corners = [0u64; 4];
    let mut orders = [0u64; 2];
    for seed in 0..PLANS {
        let plan = build_plan(&model, &cfg, 1, seed, &PlanOptions::default()).unwrap();
        let path = &plan.paths[0];
        cells[path.origin.levels[0] as usize * l + path.origin.levels[1] as usize] += 1;
        corners[path.start.index()] += 1;
        orders[path.order[0]] += 1;
    }
    for (what, counts) in [("cells", &cells[..]), ("corners", &corners[..]), ("orders", &orders[..])] {
        let p = chi_square_p(counts);
        assert!(p > ALPHA, "{what}: p = {p}, counts {counts:?}");
    }
}

#[test]
fn chi_square_rejects_a_skewed_sample() {
    assert!(chi_square_p(&[3000, 2000, 2500, 2500]) < ALPHA);
}
