//! `sae`: fit a two-stage multivariate spatial hurdle model to plot-level
//! inventory data, predict species-level densities over a grid, aggregate
//! them into small area estimates, and compare against the design-based
//! direct estimator.
//!
//! Exit codes: 0 ok, 2 input error, 3 missing prerequisite, 4 numerical
//! failure.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::RunConfig;
use sae_core::Error;

#[derive(Parser)]
#[command(name = "sae", version, about = "Model-based small area estimation for species-level inventory data")]
struct Cli {
    /// Cap the worker-thread pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit both hurdle stages and persist posterior samples plus diagnostics.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Predict over a grid and persist per-area posterior draws.
    Predict {
        #[arg(long)]
        config: PathBuf,
        /// Samples directory from `fit` (defaults to <out_dir>/samples).
        #[arg(long)]
        samples_dir: Option<PathBuf>,
        /// Grid CSV (defaults to the configured grid path).
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Grid cells per worker tile.
        #[arg(long, default_value_t = 4096)]
        block_size: usize,
        /// Output posterior directory (defaults to <out_dir>/posterior).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize persisted area posteriors into estimate tables.
    Aggregate {
        #[arg(long)]
        posterior_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Central credible level.
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Optional CSV (area_id,hectares) to also emit totals.
        #[arg(long)]
        area_ha: Option<PathBuf>,
        #[arg(long)]
        totals_out: Option<PathBuf>,
        /// Optional JSON property-join output keyed by area_id.
        #[arg(long)]
        geojson_out: Option<PathBuf>,
    },
    /// Design-based direct estimates per species and area.
    Direct {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured plots CSV.
        #[arg(long)]
        plots: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic population and its true area means.
    Simulate {
        /// Generator configuration JSON (defaults to the desk-scale study).
        #[arg(long)]
        sim_config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Score estimates: either a full simulation study (--study) or a join of
    /// model and direct estimate tables.
    Evaluate {
        #[arg(long)]
        study: bool,
        #[arg(long)]
        sim_config: Option<PathBuf>,
        #[arg(long)]
        model_csv: Option<PathBuf>,
        #[arg(long)]
        direct_csv: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Convergence diagnostics from persisted samples.
    Diagnose {
        #[arg(long)]
        samples_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::MissingArtifact(_, _) => 3,
        Error::Numerical(_, _) => 4,
        _ => 2,
    }
}

fn run(cli: Cli) -> sae_core::Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
            .map_err(|e| Error::config("cli", format!("thread pool: {e}")))?;
    }
    match cli.cmd {
        Cmd::Fit { config, out_dir } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(dir) = out_dir {
                cfg.out_dir = dir;
            }
            commands::cmd_fit(&cfg)
        }
        Cmd::Predict { config, samples_dir, grid, block_size, out } => {
            let cfg = RunConfig::load(&config)?;
            let samples = samples_dir.unwrap_or_else(|| cfg.out_dir.join("samples"));
            let grid_path = match grid {
                Some(g) => g,
                None => cfg.grid.clone().ok_or_else(|| {
                    Error::missing("cli", "no grid CSV given (config or flag)")
                })?,
            };
            let out = out.unwrap_or_else(|| cfg.out_dir.join("posterior"));
            commands::cmd_predict(&cfg, &samples, &grid_path, block_size, &out)
        }
        Cmd::Aggregate { posterior_dir, out, level, area_ha, totals_out, geojson_out } => {
            if !(level > 0.0 && level < 1.0) {
                return Err(Error::config("cli", "level must lie in (0,1)"));
            }
            commands::cmd_aggregate(
                &posterior_dir,
                &out,
                level,
                area_ha.as_deref(),
                totals_out.as_deref(),
                geojson_out.as_deref(),
            )
        }
        Cmd::Direct { config, plots, out } => {
            let cfg = RunConfig::load(&config)?;
            commands::cmd_direct(&cfg, plots.as_deref(), &out)
        }
        Cmd::Simulate { sim_config, out_dir } => {
            commands::cmd_simulate(sim_config.as_deref(), &out_dir)
        }
        Cmd::Evaluate { study, sim_config, model_csv, direct_csv, out_dir } => {
            if study {
                commands::cmd_evaluate_study(sim_config.as_deref(), &out_dir)
            } else {
                let model = model_csv.ok_or_else(|| {
                    Error::missing("cli", "--model-csv required unless --study")
                })?;
                let direct = direct_csv.ok_or_else(|| {
                    Error::missing("cli", "--direct-csv required unless --study")
                })?;
                commands::cmd_evaluate_compare(&model, &direct, &out_dir)
            }
        }
        Cmd::Diagnose { samples_dir, out } => commands::cmd_diagnose(&samples_dir, &out),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}
