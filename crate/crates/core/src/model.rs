//! Two-stage hurdle-model parameter containers, priors, linear predictors,
//! and likelihoods.
//!
//! Stage 1 models species presence with a Bernoulli-logit regression on
//! climate terms plus a loaded spatial factor term; Stage 2 models log
//! biomass where the species is present, with an independent set of
//! coefficients, loadings, and factors. Factor loadings are identified by a
//! unit diagonal and zero upper triangle.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{derive_presence, jitter_duplicate_coords, PlotTable};
use crate::error::Error;
use crate::linalg::Mat;
use crate::nngp::{build_neighbor_graph, factorize, NeighborGraph, LN_20};
use crate::Result;

const MODULE: &str = "hurdle-model";

/// One design term: a standardized covariate, optionally with its square.
/// Quadratic columns are built from the standardized linear column.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TermSpec {
    pub name: String,
    #[serde(default)]
    pub quadratic: bool,
}

impl TermSpec {
    pub fn linear(name: &str) -> Self {
        TermSpec { name: name.into(), quadratic: false }
    }
    pub fn quad(name: &str) -> Self {
        TermSpec { name: name.into(), quadratic: true }
    }
}

/// Default occurrence design: intercept, TMIN, TMIN^2, TMAX, TMAX^2, PPT, PPT^2.
pub fn default_stage1_terms() -> Vec<TermSpec> {
    vec![TermSpec::quad("TMIN"), TermSpec::quad("TMAX"), TermSpec::quad("PPT")]
}

/// Default abundance design: intercept, TCC, VPD, PPT, ELEV, ELEV^2.
pub fn default_stage2_terms() -> Vec<TermSpec> {
    vec![
        TermSpec::linear("TCC"),
        TermSpec::linear("VPD"),
        TermSpec::linear("PPT"),
        TermSpec::quad("ELEV"),
    ]
}

pub fn design_width(terms: &[TermSpec]) -> usize {
    1 + terms.iter().map(|t| if t.quadratic { 2 } else { 1 }).sum::<usize>()
}

/// Assemble an n x p design matrix: leading intercept column, then each term's
/// standardized linear column immediately followed by its square if requested.
pub fn build_design(
    covariate_names: &[String],
    covariates: &[Vec<f64>],
    n: usize,
    terms: &[TermSpec],
) -> Result<Mat> {
    let p = design_width(terms);
    let mut x = Mat::zeros(n, p);
    for i in 0..n {
        *x.at_mut(i, 0) = 1.0;
    }
    let mut col = 1;
    for t in terms {
        let c = covariate_names
            .iter()
            .position(|nm| nm == &t.name)
            .ok_or_else(|| {
                Error::schema(MODULE, format!("design term '{}' not among covariates", t.name))
            })?;
        for i in 0..n {
            let v = covariates[c][i];
            *x.at_mut(i, col) = v;
            if t.quadratic {
                *x.at_mut(i, col + 1) = v * v;
            }
        }
        col += if t.quadratic { 2 } else { 1 };
    }
    Ok(x)
}

/// Prior hyperparameters. Defaults follow the production configuration:
/// Normal(0, 2.72) community means, inverse-gamma(0.1, 0.1) community
/// variances, Normal(0, 10) Stage-2 coefficients, inverse-gamma(2, 1)
/// residual variances, uniform decay bounded by a 50-2000 km effective
/// range, standard-normal free loadings, and a 1e-4 pseudo-variance for
/// absent species.
///
/// Inverse-gamma(a, b) here means density proportional to
/// x^(-a-1) exp(-b / x) with shape a and scale b.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct PriorConfig {
    pub beta_mean_var: f64,
    pub tau2_beta_shape: f64,
    pub tau2_beta_scale: f64,
    pub stage2_coef_var: f64,
    pub stage2_tau2_shape: f64,
    pub stage2_tau2_scale: f64,
    pub effective_range_min_km: f64,
    pub effective_range_max_km: f64,
    pub loadings_var: f64,
    pub pseudo_zero_var: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            beta_mean_var: 2.72,
            tau2_beta_shape: 0.1,
            tau2_beta_scale: 0.1,
            stage2_coef_var: 10.0,
            stage2_tau2_shape: 2.0,
            stage2_tau2_scale: 1.0,
            effective_range_min_km: 50.0,
            effective_range_max_km: 2000.0,
            loadings_var: 1.0,
            pseudo_zero_var: 1e-4,
        }
    }
}

impl PriorConfig {
    /// Decay bounds (1/km) from the effective-range bounds: the exponential
    /// kernel reaches correlation 0.05 at distance ln(20)/phi.
    pub fn phi_bounds(&self) -> (f64, f64) {
        (LN_20 / self.effective_range_max_km, LN_20 / self.effective_range_min_km)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("beta_mean_var", self.beta_mean_var),
            ("tau2_beta_shape", self.tau2_beta_shape),
            ("tau2_beta_scale", self.tau2_beta_scale),
            ("stage2_coef_var", self.stage2_coef_var),
            ("stage2_tau2_shape", self.stage2_tau2_shape),
            ("stage2_tau2_scale", self.stage2_tau2_scale),
            ("loadings_var", self.loadings_var),
            ("pseudo_zero_var", self.pseudo_zero_var),
        ];
        for (name, v) in pos {
            if !(v > 0.0) {
                return Err(Error::config(MODULE, format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.effective_range_min_km > 0.0
            && self.effective_range_max_km > self.effective_range_min_km)
        {
            return Err(Error::config(
                MODULE,
                "effective range bounds must satisfy 0 < min < max",
            ));
        }
        Ok(())
    }
}

/// Latent factor realizations, one row per factor (q x n).
pub type FactorField = Mat;

/// Stage 1 (occurrence) parameter block at one sampler iteration.
#[derive(Clone, Debug)]
pub struct Stage1Params {
    /// J x p coefficient matrix, rows are species.
    pub beta: Mat,
    /// Community means per coefficient.
    pub mu_beta: Vec<f64>,
    /// Community variances per coefficient.
    pub tau2_beta: Vec<f64>,
    /// J x q loadings with unit diagonal and zero upper triangle.
    pub loadings: Mat,
    /// q x n factor fields in graph ordering.
    pub factors: FactorField,
    /// Decay per factor (1/km).
    pub phi: Vec<f64>,
}

/// Stage 2 (conditional log-abundance) parameter block.
#[derive(Clone, Debug)]
pub struct Stage2Params {
    pub alpha: Mat,
    /// Species-specific residual variances.
    pub tau2: Vec<f64>,
    pub loadings: Mat,
    pub factors: FactorField,
    pub phi: Vec<f64>,
}

/// Free (sampled) loading slots for species row j: strictly-lower-triangle
/// columns, i.e. 0..min(j, q).
#[inline]
pub fn loading_free_cols(j: usize, q: usize) -> std::ops::Range<usize> {
    0..j.min(q)
}

/// Re-assert the identifiability pattern: diagonal 1, upper triangle 0.
pub fn apply_loading_constraints(lambda: &mut Mat) {
    let (j_n, q) = (lambda.rows(), lambda.cols());
    for j in 0..j_n {
        for r in 0..q {
            if r == j {
                *lambda.at_mut(j, r) = 1.0;
            } else if r > j {
                *lambda.at_mut(j, r) = 0.0;
            }
        }
    }
}

pub fn loading_pattern_ok(lambda: &Mat) -> bool {
    let (j_n, q) = (lambda.rows(), lambda.cols());
    for j in 0..j_n {
        for r in 0..q {
            if r == j && lambda.at(j, r) != 1.0 {
                return false;
            }
            if r > j && lambda.at(j, r) != 0.0 {
                return false;
            }
        }
    }
    true
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Logit-scale occurrence predictor: beta_j . x + lambda_j . w(s).
#[inline]
pub fn stage1_linpred(x: &[f64], beta_j: &[f64], lambda_j: &[f64], w_site: &[f64]) -> f64 {
    assert_eq!(x.len(), beta_j.len(), "design/coefficient shape mismatch");
    assert_eq!(lambda_j.len(), w_site.len(), "loading/factor shape mismatch");
    dot(x, beta_j) + dot(lambda_j, w_site)
}

/// Log-scale abundance predictor: alpha_j . x + lambda_j . w(s).
#[inline]
pub fn stage2_linpred(x: &[f64], alpha_j: &[f64], lambda_j: &[f64], w_site: &[f64]) -> f64 {
    assert_eq!(x.len(), alpha_j.len(), "design/coefficient shape mismatch");
    assert_eq!(lambda_j.len(), w_site.len(), "loading/factor shape mismatch");
    dot(x, alpha_j) + dot(lambda_j, w_site)
}

/// Inverse logit clamped away from exactly 0 and 1.
#[inline]
pub fn inv_logit(v: f64) -> f64 {
    let p = if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    };
    p.clamp(1e-12, 1.0 - 1e-12)
}

/// Bernoulli log-likelihood of a presence row given occurrence probabilities.
/// A probability of exactly 0 or 1 contradicting the observation yields -inf.
pub fn stage1_loglik(z: &[u8], psi: &[f64]) -> f64 {
    assert_eq!(z.len(), psi.len(), "shape mismatch");
    let mut ll = 0.0;
    for (&zi, &p) in z.iter().zip(psi.iter()) {
        if zi == 1 {
            if p <= 0.0 {
                return f64::NEG_INFINITY;
            }
            ll += p.ln();
        } else {
            if p >= 1.0 {
                return f64::NEG_INFINITY;
            }
            ll += (1.0 - p).ln();
        }
    }
    ll
}

const LN_2PI: f64 = 1.8378770664093453;

/// Log-normal log density of y > 0 with log-scale mean/variance, Jacobian included.
#[inline]
pub fn lognormal_logpdf(y: f64, mu: f64, tau2: f64) -> f64 {
    let ly = y.ln();
    -0.5 * (LN_2PI + tau2.ln()) - (ly - mu) * (ly - mu) / (2.0 * tau2) - ly
}

#[inline]
pub fn normal_logpdf(y: f64, mu: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln()) - (y - mu) * (y - mu) / (2.0 * var)
}

/// Hurdle Stage-2 log-likelihood of one species row: log-normal where present,
/// the degenerate-zero pseudo-density Normal(0, pseudo_var) where absent.
pub fn stage2_loglik(
    y: &[f64],
    z: &[u8],
    mu: &[f64],
    tau2_j: f64,
    pseudo_var: f64,
) -> Result<f64> {
    assert_eq!(y.len(), z.len(), "shape mismatch");
    assert_eq!(y.len(), mu.len(), "shape mismatch");
    let mut ll = 0.0;
    for i in 0..y.len() {
        if z[i] == 1 {
            if !(y[i] > 0.0) {
                return Err(Error::validation(
                    MODULE,
                    format!("plot {i}: y = {} inconsistent with presence", y[i]),
                ));
            }
            ll += lognormal_logpdf(y[i], mu[i], tau2_j);
        } else {
            ll += normal_logpdf(y[i], 0.0, pseudo_var);
        }
    }
    Ok(ll)
}

/// Problem dimensions for initialization.
#[derive(Clone, Copy, Debug)]
pub struct Dims {
    pub n_species: usize,
    pub n_sites: usize,
    pub p1: usize,
    pub p2: usize,
    pub q: usize,
}

fn draw_trunc_inv_gamma<R: Rng>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    // 1/X ~ Gamma(shape, rate = scale); truncate to (1e-4, 1e4) for stable starts.
    let g = Gamma::new(shape, 1.0 / scale).expect("valid gamma");
    for _ in 0..1000 {
        let v = 1.0 / g.sample(rng);
        if (1e-4..=1e4).contains(&v) {
            return v;
        }
    }
    1.0
}

/// Draw an initial state for both stages from their priors (variances
/// truncated to (1e-4, 1e4), factors from the NNGP prior).
pub fn init_state<R: Rng>(
    priors: &PriorConfig,
    dims: Dims,
    graph: &Arc<NeighborGraph>,
    rng: &mut R,
) -> Result<(Stage1Params, Stage2Params)> {
    priors.validate()?;
    let (phi_lo, phi_hi) = priors.phi_bounds();
    let Dims { n_species: j_n, n_sites: n, p1, p2, q } = dims;
    assert_eq!(n, graph.n(), "graph does not match site count");

    let sd_mu = priors.beta_mean_var.sqrt();
    let mut mu_beta = vec![0.0; p1];
    let mut tau2_beta = vec![0.0; p1];
    for t in 0..p1 {
        mu_beta[t] = sd_mu * rng.sample::<f64, _>(StandardNormal);
        tau2_beta[t] = draw_trunc_inv_gamma(priors.tau2_beta_shape, priors.tau2_beta_scale, rng);
    }
    let mut beta = Mat::zeros(j_n, p1);
    for j in 0..j_n {
        for t in 0..p1 {
            *beta.at_mut(j, t) =
                mu_beta[t] + tau2_beta[t].sqrt() * rng.sample::<f64, _>(StandardNormal);
        }
    }

    let draw_loadings = |rng: &mut R| {
        let mut lambda = Mat::zeros(j_n, q);
        for j in 0..j_n {
            for r in loading_free_cols(j, q) {
                *lambda.at_mut(j, r) = rng.sample::<f64, _>(StandardNormal);
            }
        }
        apply_loading_constraints(&mut lambda);
        lambda
    };
    let lambda1 = draw_loadings(rng);

    let mut phi1 = vec![0.0; q];
    let mut factors1 = Mat::zeros(q, n);
    for r in 0..q {
        phi1[r] = phi_lo + (phi_hi - phi_lo) * rng.gen::<f64>();
        let sys = factorize(graph, phi1[r])?;
        let w = sys.sample_prior(rng);
        factors1.row_mut(r).copy_from_slice(&w);
    }

    let sd_alpha = priors.stage2_coef_var.sqrt();
    let mut alpha = Mat::zeros(j_n, p2);
    for j in 0..j_n {
        for t in 0..p2 {
            *alpha.at_mut(j, t) = sd_alpha * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let mut tau2 = vec![0.0; j_n];
    for j in 0..j_n {
        tau2[j] = draw_trunc_inv_gamma(priors.stage2_tau2_shape, priors.stage2_tau2_scale, rng);
    }
    let lambda2 = draw_loadings(rng);
    let mut phi2 = vec![0.0; q];
    let mut factors2 = Mat::zeros(q, n);
    for r in 0..q {
        phi2[r] = phi_lo + (phi_hi - phi_lo) * rng.gen::<f64>();
        let sys = factorize(graph, phi2[r])?;
        let w = sys.sample_prior(rng);
        factors2.row_mut(r).copy_from_slice(&w);
    }

    Ok((
        Stage1Params {
            beta,
            mu_beta,
            tau2_beta,
            loadings: lambda1,
            factors: factors1,
            phi: phi1,
        },
        Stage2Params {
            alpha,
            tau2,
            loadings: lambda2,
            factors: factors2,
            phi: phi2,
        },
    ))
}

/// Fitting-ready data: standardized designs, presence/log-response matrices,
/// and the neighbor graph, all in graph (ordered) site indexing.
#[derive(Clone, Debug)]
pub struct HurdleData {
    pub species: Vec<String>,
    /// Ordered-site coordinates (km).
    pub coords: Vec<(f64, f64)>,
    pub graph: Arc<NeighborGraph>,
    /// n x p1 occurrence design.
    pub x1: Mat,
    /// n x p2 abundance design.
    pub x2: Mat,
    /// J x n presence indicators.
    pub z: Vec<u8>,
    /// J x n log responses; only meaningful where z = 1.
    pub log_y: Vec<f64>,
    /// Ordered-site area ids.
    pub area_ids: Vec<String>,
    /// Ordered-site plot ids.
    pub plot_ids: Vec<String>,
}

impl HurdleData {
    /// Validate and assemble fitting data from a standardized plot table.
    ///
    /// Duplicate coordinates are deterministically jittered, sites are
    /// reordered to the NNGP ordering, and species observed present on fewer
    /// than two plots are rejected.
    pub fn new(
        table: &PlotTable,
        stage1_terms: &[TermSpec],
        stage2_terms: &[TermSpec],
        m: usize,
    ) -> Result<Self> {
        let n = table.n_plots();
        let j_n = table.n_species();
        if n == 0 {
            return Err(Error::validation(MODULE, "empty plot table"));
        }
        let presence = derive_presence(table);
        for j in 0..j_n {
            let k = presence.presences(j);
            if k < 2 {
                return Err(Error::validation(
                    MODULE,
                    format!(
                        "species '{}' present on {k} plot(s); at least 2 required to fit",
                        table.species[j]
                    ),
                ));
            }
        }

        let mut coords = table.coords.clone();
        jitter_duplicate_coords(&mut coords);
        let graph = Arc::new(build_neighbor_graph(&coords, m)?);

        let x1_raw = build_design(&table.covariate_names, &table.covariates, n, stage1_terms)?;
        let x2_raw = build_design(&table.covariate_names, &table.covariates, n, stage2_terms)?;

        // Reorder all plot-indexed structures into graph ordering.
        let mut x1 = Mat::zeros(n, x1_raw.cols());
        let mut x2 = Mat::zeros(n, x2_raw.cols());
        let mut z = vec![0u8; j_n * n];
        let mut log_y = vec![0.0; j_n * n];
        let mut area_ids = Vec::with_capacity(n);
        let mut plot_ids = Vec::with_capacity(n);
        for (pos, &orig) in graph.order.iter().enumerate() {
            x1.row_mut(pos).copy_from_slice(x1_raw.row(orig));
            x2.row_mut(pos).copy_from_slice(x2_raw.row(orig));
            for j in 0..j_n {
                let y = table.response.at(j, orig);
                if y > 0.0 {
                    z[j * n + pos] = 1;
                    log_y[j * n + pos] = y.ln();
                }
            }
            area_ids.push(table.area_ids[orig].clone());
            plot_ids.push(table.plot_ids[orig].clone());
        }

        Ok(HurdleData {
            species: table.species.clone(),
            coords: graph.coords.clone(),
            graph,
            x1,
            x2,
            z,
            log_y,
            area_ids,
            plot_ids,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.coords.len()
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    #[inline]
    pub fn z_at(&self, j: usize, i: usize) -> u8 {
        self.z[j * self.n_sites() + i]
    }

    #[inline]
    pub fn log_y_at(&self, j: usize, i: usize) -> f64 {
        self.log_y[j * self.n_sites() + i]
    }
}
