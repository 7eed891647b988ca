//! Posterior-predictive pipeline checks against synthetic sample stores with
//! known parameter values.

use std::collections::BTreeMap;

use sae_core::data::{PredictionGrid, StandardizationStats};
use sae_core::linalg::{mean, sample_variance};
use sae_core::mcmc::SampleStore;
use sae_core::predict::{
    aggregate, predict_area_posteriors, predict_biomass, predict_occurrence, summarize,
    FitContext, ZDraws,
};
use sae_core::stats::batch_means_mcse;

fn grid_no_covariates(cells: usize, areas: usize) -> PredictionGrid {
    let area_ids: Vec<String> = (0..cells).map(|c| format!("A{}", c % areas)).collect();
    let mut cpa = BTreeMap::new();
    for a in &area_ids {
        *cpa.entry(a.clone()).or_insert(0usize) += 1;
    }
    PredictionGrid {
        coords: (0..cells).map(|c| (c as f64 * 2.0, 0.5)).collect(),
        area_ids,
        covariate_names: vec![],
        covariates: vec![],
        cells_per_area: cpa,
    }
}

fn ctx_no_factors(n_species: usize) -> FitContext {
    FitContext {
        species: (0..n_species).map(|j| format!("s{j}")).collect(),
        obs_coords: vec![(0.0, 0.0), (10.0, 0.0)],
        stage1_terms: vec![],
        stage2_terms: vec![],
        stats: StandardizationStats { names: vec![], mean: vec![], sd: vec![] },
        q: 0,
        m: 2,
        pseudo_zero_var: 1e-4,
    }
}

/// Stage-1 store with constant intercepts (logit scale), q = 0.
fn stage1_store(n_draws: usize, intercepts: &[f64]) -> SampleStore {
    let j = intercepts.len();
    let mut store = SampleStore::new("stage1", 1, n_draws);
    let mut beta = Vec::with_capacity(n_draws * j);
    for _ in 0..n_draws {
        beta.extend_from_slice(intercepts);
    }
    store.insert("beta", vec![j, 1], beta).unwrap();
    store.insert("mu_beta", vec![1], vec![0.0; n_draws]).unwrap();
    store.insert("tau2_beta", vec![1], vec![1.0; n_draws]).unwrap();
    store.insert("lambda", vec![j, 0], vec![]).unwrap();
    store.insert("w", vec![0, 2], vec![]).unwrap();
    store.insert("phi", vec![0], vec![]).unwrap();
    store
}

/// Stage-2 store with constant log-scale means and residual variances, q = 0.
fn stage2_store(n_draws: usize, mus: &[f64], tau2: &[f64]) -> SampleStore {
    let j = mus.len();
    let mut store = SampleStore::new("stage2", 1, n_draws);
    let mut alpha = Vec::with_capacity(n_draws * j);
    let mut t2 = Vec::with_capacity(n_draws * j);
    for _ in 0..n_draws {
        alpha.extend_from_slice(mus);
        t2.extend_from_slice(tau2);
    }
    store.insert("alpha", vec![j, 1], alpha).unwrap();
    store.insert("tau2", vec![j], t2).unwrap();
    store.insert("lambda", vec![j, 0], vec![]).unwrap();
    store.insert("w", vec![0, 2], vec![]).unwrap();
    store.insert("phi", vec![0], vec![]).unwrap();
    store
}

#[test]
fn occurrence_frequency_matches_probability() {
    let n_draws = 6_000;
    let psi = 0.3f64;
    let b0 = (psi / (1.0 - psi)).ln();
    let store = stage1_store(n_draws, &[b0]);
    let grid = grid_no_covariates(5, 1);
    let ctx = ctx_no_factors(1);
    let z = predict_occurrence(&store, &grid, &ctx, 11).unwrap();
    let mcse = (psi * (1.0 - psi) / n_draws as f64).sqrt();
    for cell in 0..5 {
        let freq = (0..n_draws).map(|l| z.at(l, 0, cell) as usize).sum::<usize>() as f64
            / n_draws as f64;
        assert!((freq - psi).abs() < 3.0 * mcse, "cell {cell}: freq {freq}");
    }
}

#[test]
fn degenerate_probability_forces_presence() {
    let store = stage1_store(500, &[40.0]); // logit 40: psi = 1 up to clamping
    let grid = grid_no_covariates(3, 1);
    let ctx = ctx_no_factors(1);
    let z = predict_occurrence(&store, &grid, &ctx, 5).unwrap();
    for l in 0..500 {
        for cell in 0..3 {
            assert_eq!(z.at(l, 0, cell), 1);
        }
    }
}

#[test]
fn pseudo_zero_channel_is_tiny_and_nonnegative() {
    let n_draws = 4_000;
    let store = stage2_store(n_draws, &[0.0], &[1.0]);
    let grid = grid_no_covariates(4, 1);
    let ctx = ctx_no_factors(1);
    let z = ZDraws { n_draws, n_species: 1, n_cells: 4, z: vec![0u8; n_draws * 4] };
    let y = predict_biomass(&store, &grid, &ctx, &z, 7).unwrap();
    for cell in 0..4 {
        let vals: Vec<f64> = (0..n_draws).map(|l| y.at(l, 0, cell)).collect();
        assert!(vals.iter().all(|&v| v >= 0.0));
        let m = mean(&vals);
        assert!(m.abs() < 0.01, "cell {cell}: mean {m}");
    }
}

#[test]
fn present_channel_is_lognormal() {
    let n_draws = 6_000;
    let store = stage2_store(n_draws, &[0.0], &[1.0]);
    let grid = grid_no_covariates(2, 1);
    let ctx = ctx_no_factors(1);
    let z = ZDraws { n_draws, n_species: 1, n_cells: 2, z: vec![1u8; n_draws * 2] };
    let y = predict_biomass(&store, &grid, &ctx, &z, 8).unwrap();
    for cell in 0..2 {
        let logs: Vec<f64> = (0..n_draws).map(|l| y.at(l, 0, cell).ln()).collect();
        assert!((0..n_draws).all(|l| y.at(l, 0, cell) > 0.0));
        let m = mean(&logs);
        let mcse = batch_means_mcse(&logs);
        assert!(m.abs() < 3.0 * mcse.max(0.013), "cell {cell}: log-mean {m}");
        let v = sample_variance(&logs);
        assert!((v - 1.0).abs() < 0.08, "cell {cell}: log-var {v}");
    }
}

#[test]
fn draw_count_mismatch_is_an_error() {
    let store = stage2_store(10, &[0.0], &[1.0]);
    let grid = grid_no_covariates(2, 1);
    let ctx = ctx_no_factors(1);
    let z = ZDraws { n_draws: 9, n_species: 1, n_cells: 2, z: vec![0u8; 18] };
    assert!(predict_biomass(&store, &grid, &ctx, &z, 1).is_err());
}

/// Composing occurrence uncertainty inflates predictive variance relative to
/// plugging in the modal presence state.
#[test]
fn occurrence_uncertainty_widens_biomass_spread() {
    let n_draws = 6_000;
    let psi = 0.55f64;
    let b0 = (psi / (1.0 - psi)).ln();
    let s1 = stage1_store(n_draws, &[b0]);
    let s2 = stage2_store(n_draws, &[1.0], &[0.25]);
    let grid = grid_no_covariates(3, 1);
    let ctx = ctx_no_factors(1);
    let z = predict_occurrence(&s1, &grid, &ctx, 21).unwrap();
    let y_mixed = predict_biomass(&s2, &grid, &ctx, &z, 22).unwrap();
    // Modal z is presence everywhere (psi > 0.5).
    let z_mode = ZDraws { n_draws, n_species: 1, n_cells: 3, z: vec![1u8; n_draws * 3] };
    let y_fixed = predict_biomass(&s2, &grid, &ctx, &z_mode, 22).unwrap();
    for cell in 0..3 {
        let v_mixed = sample_variance(&(0..n_draws).map(|l| y_mixed.at(l, 0, cell)).collect::<Vec<_>>());
        let v_fixed = sample_variance(&(0..n_draws).map(|l| y_fixed.at(l, 0, cell)).collect::<Vec<_>>());
        assert!(v_mixed > v_fixed, "cell {cell}: {v_mixed} vs {v_fixed}");
    }
}

#[test]
fn streaming_path_is_deterministic_and_consistent() {
    let n_draws = 3_000;
    let psi = 0.6f64;
    let b0 = (psi / (1.0 - psi)).ln();
    let s1 = stage1_store(n_draws, &[b0, 0.1]);
    let s2 = stage2_store(n_draws, &[1.2, 0.4], &[0.6, 0.9]);
    let grid = grid_no_covariates(24, 3);
    let ctx = ctx_no_factors(2);

    let a = predict_area_posteriors(&s1, &s2, &grid, &ctx, 99, 7).unwrap();
    let b = predict_area_posteriors(&s1, &s2, &grid, &ctx, 99, 7).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b.iter()) {
        assert_eq!(x.draws, y.draws, "{}/{}", x.species, x.area);
    }
    // Per-cell RNG streams are tile-independent; a different tile size can
    // only reassociate the area sums (last-ulp rounding).
    let c = predict_area_posteriors(&s1, &s2, &grid, &ctx, 99, 1000).unwrap();
    for (x, y) in a.iter().zip(c.iter()) {
        for (u, v) in x.draws.iter().zip(y.draws.iter()) {
            assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
        }
    }

    // Statistical consistency with the materializing two-step path.
    let z = predict_occurrence(&s1, &grid, &ctx, 31).unwrap();
    let y = predict_biomass(&s2, &grid, &ctx, &z, 32).unwrap();
    let posts = aggregate(&y, &grid, &ctx.species).unwrap();
    for (stream, two_step) in a.iter().zip(posts.iter()) {
        assert_eq!(stream.species, two_step.species);
        assert_eq!(stream.area, two_step.area);
        let es = summarize(stream);
        let et = summarize(two_step);
        // Same posterior target, independent RNG streams.
        let tol = 4.0 * (es.sd + et.sd) / (n_draws as f64).sqrt() + 0.02;
        assert!(
            (es.mean - et.mean).abs() < tol,
            "{}/{}: {} vs {}",
            es.species,
            es.area,
            es.mean,
            et.mean
        );
    }
}

/// Halving the grid spacing leaves area summaries essentially unchanged for
/// a smooth field (grid-refinement stability).
#[test]
fn grid_refinement_stability() {
    let n_draws = 3_000;
    let s1 = stage1_store(n_draws, &[1.2]);
    let s2 = stage2_store(n_draws, &[1.0], &[0.4]);
    let ctx = ctx_no_factors(1);

    // Two areas over [0, 40) x [0, 8): coarse 5x2 cells per area, fine 10x4.
    let make_grid = |step: f64| {
        let mut coords = Vec::new();
        let mut area_ids = Vec::new();
        let mut x = step / 2.0;
        while x < 40.0 {
            let mut y = step / 2.0;
            while y < 8.0 {
                coords.push((x, y));
                area_ids.push(if x < 20.0 { "L".to_string() } else { "R".to_string() });
                y += step;
            }
            x += step;
        }
        let mut cpa = BTreeMap::new();
        for a in &area_ids {
            *cpa.entry(a.clone()).or_insert(0usize) += 1;
        }
        PredictionGrid {
            coords,
            area_ids,
            covariate_names: vec![],
            covariates: vec![],
            cells_per_area: cpa,
        }
    };
    let coarse = make_grid(4.0);
    let fine = make_grid(2.0);
    assert_eq!(fine.n_cells(), 4 * coarse.n_cells());

    let pc = predict_area_posteriors(&s1, &s2, &coarse, &ctx, 77, 64).unwrap();
    let pf = predict_area_posteriors(&s1, &s2, &fine, &ctx, 78, 64).unwrap();
    for (a, b) in pc.iter().zip(pf.iter()) {
        let ea = summarize(a);
        let eb = summarize(b);
        let rel = (ea.median - eb.median).abs() / ea.median;
        assert!(rel < 0.05, "{}: {} vs {} (rel {rel})", ea.area, ea.median, eb.median);
    }
}
