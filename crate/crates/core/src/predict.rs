//! Posterior-predictive composition over a grid and aggregation to areas.
//!
//! For every stored draw l and grid cell s0, Stage-1 factors are re-drawn
//! conditionally on the fitted sites (never plugged in at posterior means),
//! presence is simulated from the implied occurrence probability, and biomass
//! comes from the conditional log-normal where present or the pseudo-zero
//! channel where absent. Cell draws are averaged within areas, so the whole
//! pipeline only ever materializes per-area running sums per draw — never the
//! cell x draw x species tensor.
//!
//! Per-cell RNG streams are derived from (seed, cell index), so results are
//! independent of tiling and thread count.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{PredictionGrid, StandardizationStats};
use crate::error::Error;
use crate::linalg::{ksum, mean, quantile_of, sample_variance, Mat};
use crate::mcmc::SampleStore;
use crate::model::{build_design, inv_logit, TermSpec};
use crate::nngp::{predict_moments, SiteIndex};
use crate::rng::{chacha, mix_seed};
use crate::Result;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

const MODULE: &str = "prediction-sae";

/// Everything prediction needs from the fit besides the draws themselves.
/// Serialized into the sample-store manifest at fit time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitContext {
    pub species: Vec<String>,
    /// Fitted-site coordinates in the sampler's ordered indexing.
    pub obs_coords: Vec<(f64, f64)>,
    pub stage1_terms: Vec<TermSpec>,
    pub stage2_terms: Vec<TermSpec>,
    pub stats: StandardizationStats,
    pub q: usize,
    pub m: usize,
    pub pseudo_zero_var: f64,
}

impl FitContext {
    pub fn from_store(store: &SampleStore) -> Result<Self> {
        let ctx = store.meta.get("context").ok_or_else(|| {
            Error::missing(MODULE, "sample store carries no fit context")
        })?;
        Ok(serde_json::from_value(ctx.clone())?)
    }
}

/// Per-draw presence fields: bit per (draw, species, cell).
pub struct ZDraws {
    pub n_draws: usize,
    pub n_species: usize,
    pub n_cells: usize,
    pub z: Vec<u8>,
}

impl ZDraws {
    #[inline]
    pub fn at(&self, draw: usize, species: usize, cell: usize) -> u8 {
        self.z[(draw * self.n_species + species) * self.n_cells + cell]
    }
}

/// Per-draw biomass fields.
pub struct YDraws {
    pub n_draws: usize,
    pub n_species: usize,
    pub n_cells: usize,
    pub y: Vec<f64>,
}

impl YDraws {
    #[inline]
    pub fn at(&self, draw: usize, species: usize, cell: usize) -> f64 {
        self.y[(draw * self.n_species + species) * self.n_cells + cell]
    }
}

/// Posterior of one area-level mean density (Mg/ha): one value per draw.
#[derive(Clone, Debug)]
pub struct AreaPosterior {
    pub species: String,
    pub area: String,
    pub n_cells: usize,
    pub draws: Vec<f64>,
}

/// Posterior summary for one (species, area).
#[derive(Clone, Debug)]
pub struct AreaEstimate {
    pub species: String,
    pub area: String,
    pub n_cells: usize,
    /// Point estimate: posterior median.
    pub median: f64,
    pub mean: f64,
    pub sd: f64,
    /// Central credible interval bounds.
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    /// sd / median; undefined when the median is zero.
    pub cv: Option<f64>,
}

fn check_grid_schema(grid: &PredictionGrid, ctx: &FitContext) -> Result<()> {
    for t in ctx.stage1_terms.iter().chain(ctx.stage2_terms.iter()) {
        if !grid.covariate_names.contains(&t.name) {
            return Err(Error::schema(
                MODULE,
                format!("grid lacks covariate '{}' required by the fitted model", t.name),
            ));
        }
    }
    Ok(())
}

struct DrawView<'s> {
    store: &'s SampleStore,
    coef_block: &'static str,
}

impl<'s> DrawView<'s> {
    fn coefs(&self, l: usize) -> Result<&'s [f64]> {
        self.store.draw_global(self.coef_block, l)
    }
    fn lambda(&self, l: usize) -> Result<&'s [f64]> {
        self.store.draw_global("lambda", l)
    }
    fn w(&self, l: usize) -> Result<&'s [f64]> {
        self.store.draw_global("w", l)
    }
    fn phi(&self, l: usize) -> Result<&'s [f64]> {
        self.store.draw_global("phi", l)
    }
}

/// Draw latent factors at one cell for one stored draw, then return them.
#[allow(clippy::too_many_arguments)]
fn draw_cell_factors<R: Rng>(
    ctx: &FitContext,
    nbrs: &[u32],
    query: (f64, f64),
    w_flat: &[f64],
    phi: &[f64],
    n_obs: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; ctx.q];
    for r in 0..ctx.q {
        let field = &w_flat[r * n_obs..(r + 1) * n_obs];
        let (m, v) = predict_moments(&ctx.obs_coords, field, nbrs, query, phi[r])?;
        out[r] = m + v.sqrt() * rng.sample::<f64, _>(StandardNormal);
    }
    Ok(out)
}

/// Predict per-draw presence fields over a grid from the Stage-1 store.
pub fn predict_occurrence(
    store1: &SampleStore,
    grid: &PredictionGrid,
    ctx: &FitContext,
    seed: u64,
) -> Result<ZDraws> {
    check_grid_schema(grid, ctx)?;
    let n_cells = grid.n_cells();
    let n_species = ctx.species.len();
    let l_total = store1.total_draws();
    let x1 = build_design(&grid.covariate_names, &grid.covariates, n_cells, &ctx.stage1_terms)?;
    let view = DrawView { store: store1, coef_block: "beta" };
    let index = SiteIndex::new(&ctx.obs_coords);
    let n_obs = ctx.obs_coords.len();
    let p1 = x1.cols();

    let mut z = vec![0u8; l_total * n_species * n_cells];
    for cell in 0..n_cells {
        let mut rng = chacha(mix_seed(seed, &[0x0CC, cell as u64]));
        let nbrs = index.m_nearest(grid.coords[cell], ctx.m);
        for l in 0..l_total {
            let beta = view.coefs(l)?;
            let lambda = view.lambda(l)?;
            let w = view.w(l)?;
            let phi = view.phi(l)?;
            let wf = draw_cell_factors(ctx, &nbrs, grid.coords[cell], w, phi, n_obs, &mut rng)?;
            for j in 0..n_species {
                let mut lp = 0.0;
                for t in 0..p1 {
                    lp += x1.at(cell, t) * beta[j * p1 + t];
                }
                for r in 0..ctx.q {
                    lp += lambda[j * ctx.q + r] * wf[r];
                }
                let psi = inv_logit(lp);
                if rng.gen::<f64>() < psi {
                    z[(l * n_species + j) * n_cells + cell] = 1;
                }
            }
        }
    }
    Ok(ZDraws { n_draws: l_total, n_species, n_cells, z })
}

/// Predict per-draw biomass fields conditional on aligned presence draws.
pub fn predict_biomass(
    store2: &SampleStore,
    grid: &PredictionGrid,
    ctx: &FitContext,
    z: &ZDraws,
    seed: u64,
) -> Result<YDraws> {
    check_grid_schema(grid, ctx)?;
    let n_cells = grid.n_cells();
    let n_species = ctx.species.len();
    let l_total = store2.total_draws();
    if z.n_draws != l_total {
        return Err(Error::validation(
            MODULE,
            format!(
                "draw-count mismatch: {} presence draws vs {} Stage-2 draws",
                z.n_draws, l_total
            ),
        ));
    }
    let x2 = build_design(&grid.covariate_names, &grid.covariates, n_cells, &ctx.stage2_terms)?;
    let view = DrawView { store: store2, coef_block: "alpha" };
    let index = SiteIndex::new(&ctx.obs_coords);
    let n_obs = ctx.obs_coords.len();
    let p2 = x2.cols();
    let pseudo_sd = ctx.pseudo_zero_var.sqrt();

    let mut y = vec![0.0f64; l_total * n_species * n_cells];
    for cell in 0..n_cells {
        let mut rng = chacha(mix_seed(seed, &[0xB10, cell as u64]));
        let nbrs = index.m_nearest(grid.coords[cell], ctx.m);
        for l in 0..l_total {
            let alpha = view.coefs(l)?;
            let tau2 = store2.draw_global("tau2", l)?;
            let lambda = view.lambda(l)?;
            let w = view.w(l)?;
            let phi = view.phi(l)?;
            let wf = draw_cell_factors(ctx, &nbrs, grid.coords[cell], w, phi, n_obs, &mut rng)?;
            for j in 0..n_species {
                let val = if z.at(l, j, cell) == 1 {
                    let mut mu = 0.0;
                    for t in 0..p2 {
                        mu += x2.at(cell, t) * alpha[j * p2 + t];
                    }
                    for r in 0..ctx.q {
                        mu += lambda[j * ctx.q + r] * wf[r];
                    }
                    (mu + tau2[j].sqrt() * rng.sample::<f64, _>(StandardNormal)).exp()
                } else {
                    // Pseudo-zero channel; tiny negatives clamp to zero.
                    (pseudo_sd * rng.sample::<f64, _>(StandardNormal)).max(0.0)
                };
                y[(l * n_species + j) * n_cells + cell] = val;
            }
        }
    }
    Ok(YDraws { n_draws: l_total, n_species, n_cells, y })
}

/// Average per-draw cell values within areas: one AreaPosterior per
/// (species, area), species-major, areas sorted.
pub fn aggregate(y: &YDraws, grid: &PredictionGrid, species: &[String]) -> Result<Vec<AreaPosterior>> {
    if grid.n_cells() != y.n_cells {
        return Err(Error::validation(MODULE, "grid/cell-count mismatch"));
    }
    let mut area_cells: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (c, a) in grid.area_ids.iter().enumerate() {
        area_cells.entry(a.as_str()).or_default().push(c);
    }
    let mut out = Vec::with_capacity(species.len() * area_cells.len());
    for (j, sp) in species.iter().enumerate() {
        for (area, cells) in &area_cells {
            let mut draws = Vec::with_capacity(y.n_draws);
            for l in 0..y.n_draws {
                let s = ksum(cells.iter().map(|&c| y.at(l, j, c)));
                draws.push(s / cells.len() as f64);
            }
            out.push(AreaPosterior {
                species: sp.clone(),
                area: (*area).to_string(),
                n_cells: cells.len(),
                draws,
            });
        }
    }
    Ok(out)
}

/// Summarize an area posterior at a central credible level (default 0.95
/// via [`summarize`]).
pub fn summarize_level(post: &AreaPosterior, level: f64) -> AreaEstimate {
    assert!(post.draws.len() >= 2, "need at least two draws to summarize");
    assert!(level > 0.0 && level < 1.0);
    let med = quantile_of(&post.draws, 0.5);
    let mn = mean(&post.draws);
    let sd = sample_variance(&post.draws).sqrt();
    let tail = (1.0 - level) / 2.0;
    let lo = quantile_of(&post.draws, tail);
    let hi = quantile_of(&post.draws, 1.0 - tail);
    let cv = if med > 0.0 { Some(sd / med) } else { None };
    AreaEstimate {
        species: post.species.clone(),
        area: post.area.clone(),
        n_cells: post.n_cells,
        median: med,
        mean: mn,
        sd,
        lo,
        hi,
        level,
        cv,
    }
}

pub fn summarize(post: &AreaPosterior) -> AreaEstimate {
    summarize_level(post, 0.95)
}

/// Scale every draw by the area extent (hectares) and summarize: totals in Mg.
pub fn area_total(post: &AreaPosterior, area_ha: f64) -> Result<AreaEstimate> {
    if !(area_ha > 0.0) {
        return Err(Error::validation(MODULE, format!("non-positive area {area_ha} ha")));
    }
    let scaled = AreaPosterior {
        species: post.species.clone(),
        area: post.area.clone(),
        n_cells: post.n_cells,
        draws: post.draws.iter().map(|v| v * area_ha).collect(),
    };
    Ok(summarize(&scaled))
}

/// Streaming production path: per-area running sums per draw over grid tiles,
/// both stages composed cell by cell. Deterministic for a fixed seed
/// regardless of tiling or thread count.
pub fn predict_area_posteriors(
    store1: &SampleStore,
    store2: &SampleStore,
    grid: &PredictionGrid,
    ctx: &FitContext,
    seed: u64,
    tile_cells: usize,
) -> Result<Vec<AreaPosterior>> {
    check_grid_schema(grid, ctx)?;
    let l1 = store1.total_draws();
    let l2 = store2.total_draws();
    if l1 != l2 {
        return Err(Error::validation(
            MODULE,
            format!("draw-count mismatch between stages: {l1} vs {l2}"),
        ));
    }
    let l_total = l1;
    let n_cells = grid.n_cells();
    let n_species = ctx.species.len();

    let areas: Vec<String> = grid.cells_per_area.keys().cloned().collect();
    let area_idx: BTreeMap<&str, usize> =
        areas.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let cell_area: Vec<usize> = grid
        .area_ids
        .iter()
        .map(|a| *area_idx.get(a.as_str()).expect("area from same grid"))
        .collect();
    let n_areas = areas.len();

    let x1 = build_design(&grid.covariate_names, &grid.covariates, n_cells, &ctx.stage1_terms)?;
    let x2 = build_design(&grid.covariate_names, &grid.covariates, n_cells, &ctx.stage2_terms)?;
    let p1 = x1.cols();
    let p2 = x2.cols();
    let index = SiteIndex::new(&ctx.obs_coords);
    let n_obs = ctx.obs_coords.len();
    let pseudo_sd = ctx.pseudo_zero_var.sqrt();
    let view1 = DrawView { store: store1, coef_block: "beta" };
    let view2 = DrawView { store: store2, coef_block: "alpha" };

    let tile_cells = tile_cells.max(1);
    let tiles: Vec<(usize, usize)> = (0..n_cells)
        .step_by(tile_cells)
        .map(|start| (start, (start + tile_cells).min(n_cells)))
        .collect();

    // sums[(j * n_areas + a) * l_total + l]
    let mut sums = vec![0.0f64; n_species * n_areas * l_total];
    let batch = rayon::current_num_threads().max(1) * 2;
    for tile_batch in tiles.chunks(batch) {
        let partials: Vec<Result<Vec<f64>>> = tile_batch
            .par_iter()
            .map(|&(start, end)| {
                let mut acc = vec![0.0f64; n_species * n_areas * l_total];
                for cell in start..end {
                    let a = cell_area[cell];
                    let query = grid.coords[cell];
                    let nbrs = index.m_nearest(query, ctx.m);
                    let mut rng = chacha(mix_seed(seed, &[0xA66, cell as u64]));
                    for l in 0..l_total {
                        let beta = view1.coefs(l)?;
                        let lam1 = view1.lambda(l)?;
                        let w1 = view1.w(l)?;
                        let phi1 = view1.phi(l)?;
                        let wf1 =
                            draw_cell_factors(ctx, &nbrs, query, w1, phi1, n_obs, &mut rng)?;
                        let alpha = view2.coefs(l)?;
                        let tau2 = store2.draw_global("tau2", l)?;
                        let lam2 = view2.lambda(l)?;
                        let w2 = view2.w(l)?;
                        let phi2 = view2.phi(l)?;
                        let wf2 =
                            draw_cell_factors(ctx, &nbrs, query, w2, phi2, n_obs, &mut rng)?;
                        for j in 0..n_species {
                            let mut lp = 0.0;
                            for t in 0..p1 {
                                lp += x1.at(cell, t) * beta[j * p1 + t];
                            }
                            for r in 0..ctx.q {
                                lp += lam1[j * ctx.q + r] * wf1[r];
                            }
                            let present = rng.gen::<f64>() < inv_logit(lp);
                            let val = if present {
                                let mut mu = 0.0;
                                for t in 0..p2 {
                                    mu += x2.at(cell, t) * alpha[j * p2 + t];
                                }
                                for r in 0..ctx.q {
                                    mu += lam2[j * ctx.q + r] * wf2[r];
                                }
                                (mu + tau2[j].sqrt() * rng.sample::<f64, _>(StandardNormal))
                                    .exp()
                            } else {
                                (pseudo_sd * rng.sample::<f64, _>(StandardNormal)).max(0.0)
                            };
                            acc[(j * n_areas + a) * l_total + l] += val;
                        }
                    }
                }
                Ok(acc)
            })
            .collect();
        for p in partials {
            let p = p?;
            for (s, v) in sums.iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
    }

    let mut out = Vec::with_capacity(n_species * n_areas);
    for (j, sp) in ctx.species.iter().enumerate() {
        for (a, area) in areas.iter().enumerate() {
            let n_in_area = grid.cells_per_area[area];
            let draws: Vec<f64> = (0..l_total)
                .map(|l| sums[(j * n_areas + a) * l_total + l] / n_in_area as f64)
                .collect();
            out.push(AreaPosterior {
                species: sp.clone(),
                area: area.clone(),
                n_cells: n_in_area,
                draws,
            });
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct PosteriorManifest {
    species: Vec<String>,
    areas: Vec<(String, usize)>,
    n_draws: usize,
    meta: serde_json::Value,
}

/// Persist area posteriors (species-major, area-sorted) for later
/// aggregation: draws.bin plus a JSON manifest.
pub fn save_area_posteriors(
    posts: &[AreaPosterior],
    species: &[String],
    meta: serde_json::Value,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let n_species = species.len();
    if n_species == 0 || posts.len() % n_species != 0 {
        return Err(Error::validation(MODULE, "posterior set not species-major"));
    }
    let n_areas = posts.len() / n_species;
    let areas: Vec<(String, usize)> = posts[..n_areas]
        .iter()
        .map(|p| (p.area.clone(), p.n_cells))
        .collect();
    let n_draws = posts[0].draws.len();
    let manifest = PosteriorManifest {
        species: species.to_vec(),
        areas,
        n_draws,
        meta,
    };
    let mut mf = std::fs::File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut mf, &manifest)?;
    mf.write_all(b"\n")?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("draws.bin"))?);
    for p in posts {
        for v in &p.draws {
            f.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_area_posteriors(dir: &Path) -> Result<(Vec<AreaPosterior>, serde_json::Value)> {
    let mpath = dir.join("manifest.json");
    if !mpath.exists() {
        return Err(Error::missing(
            MODULE,
            format!("no manifest.json under {}", dir.display()),
        ));
    }
    let manifest: PosteriorManifest = serde_json::from_reader(std::fs::File::open(mpath)?)?;
    let mut buf = Vec::new();
    std::fs::File::open(dir.join("draws.bin"))?.read_to_end(&mut buf)?;
    let vals: Vec<f64> = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let expect = manifest.species.len() * manifest.areas.len() * manifest.n_draws;
    if vals.len() != expect {
        return Err(Error::numerical(MODULE, "draws.bin length mismatch"));
    }
    let mut posts = Vec::with_capacity(manifest.species.len() * manifest.areas.len());
    let mut off = 0;
    for sp in &manifest.species {
        for (area, n_cells) in &manifest.areas {
            posts.push(AreaPosterior {
                species: sp.clone(),
                area: area.clone(),
                n_cells: *n_cells,
                draws: vals[off..off + manifest.n_draws].to_vec(),
            });
            off += manifest.n_draws;
        }
    }
    Ok((posts, manifest.meta))
}

/// A `Mat` alias used by tests building synthetic stores.
pub type DesignMat = Mat;
