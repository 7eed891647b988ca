//! Subcommand implementations. Every command is deterministic given its
//! configuration and seed, never mutates its inputs, and stamps each output
//! file with the configuration hash and seed.

use std::io::Write;
use std::path::{Path, PathBuf};

use sae_core::data::{attach_grid, load_plot_table, standardize_covariates};
use sae_core::diag::rhat_table;
use sae_core::direct::direct_table;
use sae_core::error::Error;
use sae_core::mcmc::{stage1::run_stage1, stage2::run_stage2, FitOptions, SampleStore};
use sae_core::model::HurdleData;
use sae_core::predict::{
    area_total, load_area_posteriors, predict_area_posteriors, save_area_posteriors,
    summarize_level, AreaEstimate, FitContext,
};
use sae_core::rng::mix_seed;
use sae_core::sim::{
    run_simulation_study, score, simulate_population, study_mcmc_defaults, ScoreEntry, ScoreMode,
    SimConfig,
};
use sae_core::Result;

use crate::config::{fnv1a, RunConfig};

const MODULE: &str = "cli";

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x}"))
}

fn create_out(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

fn require(path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.clone()
        .ok_or_else(|| Error::missing(MODULE, format!("no {what} given (config or flag)")))
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

pub fn cmd_fit(config: &RunConfig) -> Result<()> {
    let plots = require(&config.plots, "plots CSV")?;
    if config.species.is_empty() {
        return Err(Error::config(MODULE, "config lists no species"));
    }
    let mut table = load_plot_table(&plots, &config.species)?;
    let stats = standardize_covariates(&mut table, None)?;
    let data = HurdleData::new(&table, &config.stage1_terms, &config.stage2_terms, config.m)?;

    let ctx = FitContext {
        species: data.species.clone(),
        obs_coords: data.coords.clone(),
        stage1_terms: config.stage1_terms.clone(),
        stage2_terms: config.stage2_terms.clone(),
        stats,
        q: config.q,
        m: config.m,
        pseudo_zero_var: config.priors.pseudo_zero_var,
    };
    let meta = |stage: &str, mcmc: &sae_core::mcmc::McmcConfig| {
        serde_json::json!({
            "context": ctx,
            "stage": stage,
            "mcmc": mcmc,
            "config_hash": config.hash(),
            "seed": config.seed,
        })
    };

    let opts = FitOptions::default();
    let mcmc1 = sae_core::mcmc::McmcConfig {
        seed: mix_seed(config.seed, &[1]),
        ..config.stage1_mcmc.clone()
    };
    eprintln!(
        "fit: stage 1 ({} chains x {} iters, burn {}, thin {})",
        mcmc1.n_chains, mcmc1.n_iters, mcmc1.n_burn, mcmc1.n_thin
    );
    let mut store1 = run_stage1(&data, &config.priors, config.q, &mcmc1, &opts)?;
    store1.meta = meta("stage1", &mcmc1);
    let s1_dir = config.out_dir.join("samples/stage1");
    store1.save(&s1_dir)?;

    let mcmc2 = sae_core::mcmc::McmcConfig {
        seed: mix_seed(config.seed, &[2]),
        ..config.stage2_mcmc.clone()
    };
    eprintln!(
        "fit: stage 2 ({} chains x {} iters, burn {}, thin {})",
        mcmc2.n_chains, mcmc2.n_iters, mcmc2.n_burn, mcmc2.n_thin
    );
    let mut store2 = run_stage2(&data, &config.priors, config.q, &mcmc2, &opts)?;
    store2.meta = meta("stage2", &mcmc2);
    let s2_dir = config.out_dir.join("samples/stage2");
    store2.save(&s2_dir)?;

    write_rhat_csv(
        config,
        &[("stage1", &store1), ("stage2", &store2)],
        &config.out_dir.join("diagnostics/rhat.csv"),
    )?;
    write_trace_csv(config, "stage1", &store1, &config.out_dir.join("diagnostics/trace_stage1.csv"))?;
    write_trace_csv(config, "stage2", &store2, &config.out_dir.join("diagnostics/trace_stage2.csv"))?;

    eprintln!(
        "fit: wrote {} and {} ({} draws per stage)",
        s1_dir.display(),
        s2_dir.display(),
        store1.total_draws()
    );
    Ok(())
}

fn write_rhat_csv(config: &RunConfig, stores: &[(&str, &SampleStore)], path: &Path) -> Result<()> {
    let mut f = create_out(path)?;
    writeln!(f, "{}", config.manifest_line())?;
    writeln!(f, "stage,block,index,rhat_split,rhat_rank")?;
    for (stage, store) in stores {
        if store.n_chains < 2 {
            writeln!(f, "# {stage}: single chain, potential scale reduction undefined")?;
            continue;
        }
        let blocks: Vec<String> = store.blocks.keys().cloned().collect();
        for b in blocks {
            for row in rhat_table(store, &b)? {
                writeln!(
                    f,
                    "{stage},{},{},{},{}",
                    row.block, row.index, row.rhat_split, row.rhat_rank
                )?;
            }
        }
    }
    Ok(())
}

fn write_trace_csv(config: &RunConfig, stage: &str, store: &SampleStore, path: &Path) -> Result<()> {
    let mut f = create_out(path)?;
    writeln!(f, "{}", config.manifest_line())?;
    writeln!(f, "stage,block,index,chain,draw,value")?;
    for name in &config.trace_blocks {
        let Ok(block) = store.block(name) else {
            continue; // block not present in this stage
        };
        let len = block.len_per_draw();
        for idx in 0..len {
            for chain in 0..store.n_chains {
                let series = store.scalar_series(name, idx, chain)?;
                for (draw, v) in series.iter().enumerate() {
                    writeln!(f, "{stage},{name},{idx},{chain},{draw},{v}")?;
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// predict / aggregate
// ---------------------------------------------------------------------------

pub fn cmd_predict(
    config: &RunConfig,
    samples_dir: &Path,
    grid_path: &Path,
    block_size: usize,
    out_dir: &Path,
) -> Result<()> {
    let store1 = SampleStore::load(&samples_dir.join("stage1"))?;
    let store2 = SampleStore::load(&samples_dir.join("stage2"))?;
    let ctx = FitContext::from_store(&store1)?;
    let grid = attach_grid(grid_path, &ctx.stats)?;
    eprintln!(
        "predict: {} cells, {} areas, {} draws",
        grid.n_cells(),
        grid.cells_per_area.len(),
        store1.total_draws()
    );
    let posts = predict_area_posteriors(
        &store1,
        &store2,
        &grid,
        &ctx,
        mix_seed(config.seed, &[3]),
        block_size,
    )?;
    let meta = serde_json::json!({
        "config_hash": config.hash(),
        "seed": config.seed,
        "n_cells": grid.n_cells(),
        "block_size": block_size,
    });
    save_area_posteriors(&posts, &ctx.species, meta, out_dir)?;
    eprintln!("predict: wrote {}", out_dir.display());
    Ok(())
}

fn estimate_csv_row(e: &AreaEstimate) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        e.species,
        e.area,
        e.n_cells,
        e.median,
        e.mean,
        e.sd,
        e.lo,
        e.hi,
        e.level,
        fmt_opt(e.cv)
    )
}

pub fn cmd_aggregate(
    posterior_dir: &Path,
    out: &Path,
    level: f64,
    area_ha: Option<&Path>,
    totals_out: Option<&Path>,
    geojson_out: Option<&Path>,
) -> Result<()> {
    let (posts, meta) = load_area_posteriors(posterior_dir)?;
    let manifest = format!(
        "# config_hash={} seed={}",
        meta.get("config_hash").and_then(|v| v.as_str()).unwrap_or("unknown"),
        meta.get("seed").and_then(|v| v.as_u64()).unwrap_or(0)
    );
    let estimates: Vec<AreaEstimate> = posts.iter().map(|p| summarize_level(p, level)).collect();

    let mut f = create_out(out)?;
    writeln!(f, "{manifest}")?;
    writeln!(f, "species,area,n_cells,median,mean,sd,lo,hi,level,cv")?;
    for e in &estimates {
        writeln!(f, "{}", estimate_csv_row(e))?;
    }
    drop(f);

    if let Some(ha_path) = area_ha {
        let hectares = read_area_ha(ha_path)?;
        let totals_path = totals_out
            .map(Path::to_path_buf)
            .unwrap_or_else(|| out.with_extension("totals.csv"));
        let mut f = create_out(&totals_path)?;
        writeln!(f, "{manifest}")?;
        writeln!(f, "species,area,n_cells,median,mean,sd,lo,hi,level,cv")?;
        for p in &posts {
            match hectares.iter().find(|(a, _)| a == &p.area) {
                Some((_, ha)) => {
                    let scaled = area_total(p, *ha)?;
                    // area_total summarizes at 95%; re-summarize at the
                    // requested level on the scaled draws for consistency.
                    let e = if (level - 0.95).abs() < 1e-12 {
                        scaled
                    } else {
                        let scaled_post = sae_core::predict::AreaPosterior {
                            species: p.species.clone(),
                            area: p.area.clone(),
                            n_cells: p.n_cells,
                            draws: p.draws.iter().map(|v| v * ha).collect(),
                        };
                        summarize_level(&scaled_post, level)
                    };
                    writeln!(f, "{}", estimate_csv_row(&e))?;
                }
                None => {
                    eprintln!("aggregate: no area extent for '{}', skipped in totals", p.area);
                }
            }
        }
    }

    if let Some(geo) = geojson_out {
        // Property join keyed by area id, for merging into external geometry.
        let mut areas: std::collections::BTreeMap<String, serde_json::Map<String, serde_json::Value>> =
            std::collections::BTreeMap::new();
        for e in &estimates {
            let entry = areas.entry(e.area.clone()).or_default();
            entry.insert(
                e.species.clone(),
                serde_json::json!({
                    "median": e.median,
                    "mean": e.mean,
                    "sd": e.sd,
                    "lo": e.lo,
                    "hi": e.hi,
                    "cv": e.cv,
                }),
            );
        }
        let doc = serde_json::json!({
            "join_key": "area_id",
            "level": level,
            "manifest": manifest,
            "areas": areas,
        });
        let mut f = create_out(geo)?;
        serde_json::to_writer_pretty(&mut f, &doc)?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

fn read_area_ha(path: &Path) -> Result<Vec<(String, f64)>> {
    if !path.exists() {
        return Err(Error::missing(MODULE, format!("area file not found: {}", path.display())));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let ai = headers
        .iter()
        .position(|h| h == "area_id")
        .ok_or_else(|| Error::schema(MODULE, "area file needs an 'area_id' column"))?;
    let hi = headers
        .iter()
        .position(|h| h == "hectares")
        .ok_or_else(|| Error::schema(MODULE, "area file needs a 'hectares' column"))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let ha: f64 = rec
            .get(hi)
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::validation(MODULE, "bad hectares value"))?;
        out.push((rec.get(ai).unwrap_or("").to_string(), ha));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// direct
// ---------------------------------------------------------------------------

pub fn cmd_direct(config: &RunConfig, plots_override: Option<&Path>, out: &Path) -> Result<()> {
    let plots = match plots_override {
        Some(p) => p.to_path_buf(),
        None => require(&config.plots, "plots CSV")?,
    };
    if config.species.is_empty() {
        return Err(Error::config(MODULE, "config lists no species"));
    }
    let table = load_plot_table(&plots, &config.species)?;
    let estimates = direct_table(&table);
    let mut f = create_out(out)?;
    writeln!(f, "{}", config.manifest_line())?;
    writeln!(f, "species,area,n_plots,mean,variance,se,cv,zero_se")?;
    for e in &estimates {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{}",
            e.species,
            e.area,
            e.n_plots,
            e.mean,
            fmt_opt(e.variance),
            fmt_opt(e.se),
            fmt_opt(e.cv),
            e.zero_se
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate / evaluate
// ---------------------------------------------------------------------------

pub fn load_sim_config(path: Option<&Path>) -> Result<SimConfig> {
    match path {
        None => Ok(SimConfig::default()),
        Some(p) => {
            if !p.exists() {
                return Err(Error::missing(
                    MODULE,
                    format!("simulation config not found: {}", p.display()),
                ));
            }
            let cfg: SimConfig = serde_json::from_reader(std::fs::File::open(p)?)
                .map_err(|e| Error::config(MODULE, format!("{}: {e}", p.display())))?;
            cfg.validate()?;
            Ok(cfg)
        }
    }
}

fn sim_manifest_line(cfg: &SimConfig) -> String {
    let encoded = serde_json::to_string(cfg).expect("sim config serializes");
    format!("# config_hash={:016x} seed={}", fnv1a(encoded.as_bytes()), cfg.seed)
}

pub fn cmd_simulate(sim_config: Option<&Path>, out_dir: &Path) -> Result<()> {
    let cfg = load_sim_config(sim_config)?;
    let (population, truth) = simulate_population(&cfg)?;
    std::fs::create_dir_all(out_dir)?;
    let manifest = sim_manifest_line(&cfg);

    sae_core::data::write_plot_table_with_comment(
        &population,
        &out_dir.join("population.csv"),
        Some(&manifest),
    )?;
    let mut f = create_out(&out_dir.join("truth.csv"))?;
    writeln!(f, "{manifest}")?;
    writeln!(f, "species,area,true_mean")?;
    for ((sp, area), v) in &truth {
        writeln!(f, "{sp},{area},{v}")?;
    }
    let mut f = create_out(&out_dir.join("sim_config.json"))?;
    serde_json::to_writer_pretty(&mut f, &cfg)?;
    f.write_all(b"\n")?;
    eprintln!(
        "simulate: {} units, {} species, {} areas -> {}",
        population.n_plots(),
        population.n_species(),
        population.area_list().len(),
        out_dir.display()
    );
    Ok(())
}

pub fn cmd_evaluate_study(sim_config: Option<&Path>, out_dir: &Path) -> Result<()> {
    let cfg = load_sim_config(sim_config)?;
    let (m1, m2) = study_mcmc_defaults(cfg.seed);
    eprintln!(
        "evaluate: study with {} replicates of n = {} ({} units, {} species)",
        cfg.n_replicates,
        cfg.sample_size,
        cfg.n_units(),
        cfg.n_species
    );
    let report = run_simulation_study(&cfg, &m1, &m2)?;
    std::fs::create_dir_all(out_dir)?;
    let manifest = sim_manifest_line(&cfg);

    let mut f = create_out(&out_dir.join("study_species.csv"))?;
    writeln!(f, "{manifest}")?;
    writeln!(
        f,
        "species,bias_model,bias_direct,rmse_model,rmse_direct,truth_sd,rho_model,re_gt1_share,coverage95"
    )?;
    for r in &report.per_species {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{}",
            r.species,
            r.bias_model,
            r.bias_direct,
            r.rmse_model,
            r.rmse_direct,
            r.truth_sd,
            r.rho_model,
            r.re_gt1_share,
            r.coverage95
        )?;
    }
    drop(f);
    let mut f = create_out(&out_dir.join("study_summary.json"))?;
    serde_json::to_writer_pretty(&mut f, &serde_json::json!({
        "manifest": manifest,
        "n_replicates": report.n_replicates,
        "coverage95_overall": report.coverage95_overall,
        "re_gt1_share_overall": report.re_gt1_share_overall,
        "n_species_model_rmse_lower": report
            .per_species
            .iter()
            .filter(|r| r.rmse_model < r.rmse_direct)
            .count(),
        "n_species": report.per_species.len(),
    }))?;
    f.write_all(b"\n")?;
    eprintln!(
        "evaluate: coverage {:.3}, RE>1 share {:.3}",
        report.coverage95_overall, report.re_gt1_share_overall
    );
    Ok(())
}

fn read_estimates_csv(path: &Path, value_col: &str) -> Result<Vec<ScoreEntry>> {
    if !path.exists() {
        return Err(Error::missing(MODULE, format!("estimates not found: {}", path.display())));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::schema(MODULE, format!("{}: missing column '{name}'", path.display())))
    };
    let (si, ai, vi, ci) = (col("species")?, col("area")?, col(value_col)?, col("cv")?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let value: f64 = rec
            .get(vi)
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::validation(MODULE, format!("bad {value_col} value")))?;
        let cv = match rec.get(ci).unwrap_or("NA") {
            "NA" | "" => None,
            s => Some(s.parse::<f64>().map_err(|_| {
                Error::validation(MODULE, "bad cv value")
            })?),
        };
        out.push(ScoreEntry {
            species: rec.get(si).unwrap_or("").to_string(),
            area: rec.get(ai).unwrap_or("").to_string(),
            value,
            cv,
        });
    }
    Ok(out)
}

pub fn cmd_evaluate_compare(model_csv: &Path, direct_csv: &Path, out_dir: &Path) -> Result<()> {
    let model = read_estimates_csv(model_csv, "median")?;
    let direct = read_estimates_csv(direct_csv, "mean")?;
    let report = score(&model, &direct, ScoreMode::AgainstDirect)?;
    std::fs::create_dir_all(out_dir)?;
    let manifest = format!(
        "# inputs={},{}",
        model_csv.file_name().and_then(|s| s.to_str()).unwrap_or("model"),
        direct_csv.file_name().and_then(|s| s.to_str()).unwrap_or("direct")
    );

    let mut f = create_out(&out_dir.join("eval_species.csv"))?;
    writeln!(f, "{manifest}")?;
    writeln!(f, "species,bias,rmse,rho,re_gt1_share,n_areas")?;
    for s in &report.per_species {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            s.species,
            s.bias,
            s.rmse,
            fmt_opt(s.rho),
            fmt_opt(s.re_gt1_share),
            s.n_areas
        )?;
    }
    drop(f);

    let mut f = create_out(&out_dir.join("eval_re_cells.csv"))?;
    writeln!(f, "{manifest}")?;
    writeln!(f, "species,area,relative_efficiency")?;
    for (sp, area, re) in &report.re_cells {
        writeln!(f, "{sp},{area},{re}")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

pub fn cmd_diagnose(samples_dir: &Path, out: &Path) -> Result<()> {
    let mut stores = Vec::new();
    for stage in ["stage1", "stage2"] {
        let dir = samples_dir.join(stage);
        if dir.join("manifest.json").exists() {
            stores.push((stage, SampleStore::load(&dir)?));
        }
    }
    if stores.is_empty() {
        return Err(Error::missing(
            MODULE,
            format!("no sample stores under {}", samples_dir.display()),
        ));
    }
    let mut f = create_out(out)?;
    let hash = stores[0]
        .1
        .meta
        .get("config_hash")
        .and_then(|v| v.as_str())
        .unwrap_or("unknown")
        .to_string();
    let seed = stores[0].1.meta.get("seed").and_then(|v| v.as_u64()).unwrap_or(0);
    writeln!(f, "# config_hash={hash} seed={seed}")?;
    writeln!(f, "stage,block,index,rhat_split,rhat_rank")?;
    for (stage, store) in &stores {
        if store.n_chains < 2 {
            writeln!(f, "# {stage}: single chain, potential scale reduction undefined")?;
            continue;
        }
        let blocks: Vec<String> = store.blocks.keys().cloned().collect();
        for b in blocks {
            for row in rhat_table(store, &b)? {
                writeln!(
                    f,
                    "{stage},{},{},{},{}",
                    row.block, row.index, row.rhat_split, row.rhat_rank
                )?;
            }
        }
    }
    Ok(())
}
