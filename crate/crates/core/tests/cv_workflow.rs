//! Area-blocked cross-validation workflow: no plot from a held-out area may
//! enter training, and the fold reports score held-out model estimates
//! against held-out direct estimates.

use sae_core::mcmc::McmcConfig;
use sae_core::model::PriorConfig;
use sae_core::sim::{run_area_cv, simulate_population, split_by_areas, SimConfig};

#[test]
fn holdout_plots_never_train() {
    let cfg = SimConfig {
        nx: 16,
        ny: 10,
        n_areas: 8,
        n_species: 3,
        q: 1,
        factor_range_fracs: vec![0.4],
        sample_size: 40,
        ..SimConfig::default()
    };
    let (pop, _) = simulate_population(&cfg).unwrap();
    let holdout: Vec<String> = vec!["A001".into(), "A004".into()];
    let (train, test) = split_by_areas(&pop, &holdout);
    assert_eq!(train.n_plots() + test.n_plots(), pop.n_plots());
    assert!(train.area_ids.iter().all(|a| !holdout.contains(a)));
    assert!(test.area_ids.iter().all(|a| holdout.contains(a)));
    let train_ids: std::collections::HashSet<_> = train.plot_ids.iter().collect();
    assert!(test.plot_ids.iter().all(|p| !train_ids.contains(p)));
}

#[test]
fn cv_reports_cover_held_out_areas() {
    let cfg = SimConfig {
        nx: 18,
        ny: 16,
        spacing_km: 30.0,
        n_areas: 6,
        n_species: 3,
        q: 1,
        factor_range_fracs: vec![0.4],
        sample_size: 100,
        seed: 99,
        ..SimConfig::default()
    };
    let (pop, _) = simulate_population(&cfg).unwrap();
    let mcmc = McmcConfig {
        n_chains: 1,
        n_iters: 500,
        n_burn: 250,
        n_thin: 5,
        seed: 0,
        target_accept: 0.44,
        block_order: None,
    };
    let reports =
        run_area_cv(&pop, 2, &PriorConfig::default(), 1, 10, &mcmc, &mcmc, 7).unwrap();
    assert_eq!(reports.len(), 2);
    let mut areas_seen = std::collections::BTreeSet::new();
    for rep in &reports {
        assert_eq!(rep.per_species.len(), 3);
        for s in &rep.per_species {
            assert!(s.n_areas >= 1);
            assert!(s.rmse.is_finite());
        }
        for (_, area, _) in &rep.re_cells {
            areas_seen.insert(area.clone());
        }
    }
    // Folds are disjoint, so each area's RE cells appear in exactly one fold.
    assert!(areas_seen.len() <= 6);
}
