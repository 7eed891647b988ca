//! Stage-2 (conditional log-abundance) Gibbs sweep.
//!
//! Fitting conditions on the observed presence pattern: each species'
//! Gaussian likelihood runs over its presence plots only, while the
//! degenerate-zero pseudo-density at absent plots involves no parameters and
//! drops out of every conditional. Default sweep: coefficients, variance,
//! loadings, factors, phi.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::Error;
use crate::linalg::{draw_mvn_from_precision, Mat};
use crate::mcmc::{BoundedWalker, FitOptions, McmcConfig, StageSampler};
use crate::model::{
    apply_loading_constraints, init_state, loading_free_cols, Dims, HurdleData, PriorConfig,
    Stage2Params,
};
use crate::nngp::{factorize, NngpSystem};
use crate::Result;

const MODULE: &str = "mcmc-engine";

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stage2Block {
    Coefficients,
    Variance,
    Loadings,
    Factors,
    Phi,
}

pub fn parse_stage2_order(names: Option<&Vec<String>>) -> Result<Vec<Stage2Block>> {
    let default = vec![
        Stage2Block::Coefficients,
        Stage2Block::Variance,
        Stage2Block::Loadings,
        Stage2Block::Factors,
        Stage2Block::Phi,
    ];
    match names {
        None => Ok(default),
        Some(list) => list
            .iter()
            .map(|s| match s.as_str() {
                "coefficients" => Ok(Stage2Block::Coefficients),
                "variance" => Ok(Stage2Block::Variance),
                "loadings" => Ok(Stage2Block::Loadings),
                "factors" => Ok(Stage2Block::Factors),
                "phi" => Ok(Stage2Block::Phi),
                other => Err(Error::config(
                    MODULE,
                    format!("unknown stage-2 block '{other}'"),
                )),
            })
            .collect(),
    }
}

pub struct Stage2Sampler<'d> {
    data: &'d HurdleData,
    priors: PriorConfig,
    opts: FitOptions,
    order: Vec<Stage2Block>,
    q: usize,
    pub state: Stage2Params,
    /// Presence-site indices per species.
    present: Vec<Vec<u32>>,
    /// Cached linear predictors eta_{j,i}, J x n.
    eta: Vec<f64>,
    systems: Vec<NngpSystem>,
    co_nbrs: Vec<Vec<(u32, u16)>>,
    walkers: Vec<BoundedWalker>,
}

impl<'d> Stage2Sampler<'d> {
    pub fn new(
        data: &'d HurdleData,
        priors: &PriorConfig,
        q: usize,
        config: &McmcConfig,
        opts: &FitOptions,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let n = data.n_sites();
        let j_n = data.n_species();
        let p2 = data.x2.cols();
        let dims = Dims { n_species: j_n, n_sites: n, p1: data.x1.cols(), p2, q };
        let (_, mut state) = init_state(priors, dims, &data.graph, rng)?;
        if let Some(v) = &opts.fix_tau2 {
            state.tau2.clone_from(v);
        }
        let present: Vec<Vec<u32>> = (0..j_n)
            .map(|j| {
                (0..n)
                    .filter(|&i| data.z_at(j, i) == 1)
                    .map(|i| i as u32)
                    .collect()
            })
            .collect();
        let systems: Vec<NngpSystem> = state
            .phi
            .iter()
            .map(|&phi| factorize(&data.graph, phi))
            .collect::<Result<_>>()?;
        let (lo, hi) = priors.phi_bounds();
        let walkers = vec![BoundedWalker::new(lo, hi, config.target_accept); q];
        let mut s = Stage2Sampler {
            data,
            priors: priors.clone(),
            opts: opts.clone(),
            order: parse_stage2_order(config.block_order.as_ref())?,
            q,
            state,
            present,
            eta: vec![0.0; j_n * n],
            systems,
            co_nbrs: data.graph.co_neighbors(),
            walkers,
        };
        s.refresh_eta_all();
        Ok(s)
    }

    fn n(&self) -> usize {
        self.data.n_sites()
    }

    fn refresh_eta_row(&mut self, j: usize) {
        let n = self.n();
        let alpha_j = self.state.alpha.row(j).to_vec();
        let lambda_j = self.state.loadings.row(j).to_vec();
        for i in 0..n {
            let mut v = 0.0;
            for (t, &a) in alpha_j.iter().enumerate() {
                v += self.data.x2.at(i, t) * a;
            }
            for (r, &l) in lambda_j.iter().enumerate() {
                v += l * self.state.factors.at(r, i);
            }
            self.eta[j * n + i] = v;
        }
    }

    fn refresh_eta_all(&mut self) {
        for j in 0..self.data.n_species() {
            self.refresh_eta_row(j);
        }
    }

    fn update_coefficients(&mut self, rng: &mut ChaCha8Rng) -> Result<()> {
        let n = self.n();
        let p = self.data.x2.cols();
        let prior_prec = 1.0 / self.priors.stage2_coef_var;
        for j in 0..self.data.n_species() {
            let new_alpha = if self.opts.prior_only {
                let sd = self.priors.stage2_coef_var.sqrt();
                (0..p)
                    .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                    .collect::<Vec<f64>>()
            } else {
                let tau2 = self.state.tau2[j];
                let mut prec = Mat::zeros(p, p);
                let mut lin = vec![0.0; p];
                for t in 0..p {
                    *prec.at_mut(t, t) = prior_prec;
                }
                let alpha_j = self.state.alpha.row(j).to_vec();
                for &iu in &self.present[j] {
                    let i = iu as usize;
                    let x = self.data.x2.row(i);
                    let xa: f64 = x.iter().zip(alpha_j.iter()).map(|(a, b)| a * b).sum();
                    let spatial = self.eta[j * n + i] - xa;
                    let resid = self.data.log_y_at(j, i) - spatial;
                    for t in 0..p {
                        lin[t] += x[t] * resid / tau2;
                        for u in t..p {
                            *prec.at_mut(t, u) += x[t] * x[u] / tau2;
                        }
                    }
                }
                for t in 0..p {
                    for u in (t + 1)..p {
                        *prec.at_mut(u, t) = prec.at(t, u);
                    }
                }
                draw_mvn_from_precision(&mut prec, &lin, rng)
                    .map_err(|e| Error::numerical(MODULE, format!("alpha, species {j}: {e}")))?
            };
            self.state.alpha.row_mut(j).copy_from_slice(&new_alpha);
            self.refresh_eta_row(j);
        }
        Ok(())
    }

    fn update_variance(&mut self, rng: &mut ChaCha8Rng) {
        if self.opts.fix_tau2.is_some() {
            return;
        }
        let n = self.n();
        for j in 0..self.data.n_species() {
            let (n_j, rss) = if self.opts.prior_only {
                (0.0, 0.0)
            } else {
                let mut rss = 0.0;
                for &iu in &self.present[j] {
                    let i = iu as usize;
                    let d = self.data.log_y_at(j, i) - self.eta[j * n + i];
                    rss += d * d;
                }
                (self.present[j].len() as f64, rss)
            };
            let shape = self.priors.stage2_tau2_shape + n_j / 2.0;
            let scale = self.priors.stage2_tau2_scale + 0.5 * rss;
            let g = Gamma::new(shape, 1.0 / scale).expect("valid gamma");
            self.state.tau2[j] = 1.0 / g.sample(rng);
        }
    }

    fn update_loadings(&mut self, rng: &mut ChaCha8Rng) -> Result<()> {
        let n = self.n();
        for j in 0..self.data.n_species() {
            let free = loading_free_cols(j, self.q);
            let k = free.len();
            if k == 0 {
                continue;
            }
            let cols: Vec<usize> = free.collect();
            let new_free = if self.opts.prior_only {
                let sd = self.priors.loadings_var.sqrt();
                (0..k)
                    .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                    .collect::<Vec<f64>>()
            } else {
                let tau2 = self.state.tau2[j];
                let mut prec = Mat::zeros(k, k);
                let mut lin = vec![0.0; k];
                for a in 0..k {
                    *prec.at_mut(a, a) = 1.0 / self.priors.loadings_var;
                }
                let lambda_j = self.state.loadings.row(j).to_vec();
                let mut wt = vec![0.0; k];
                for &iu in &self.present[j] {
                    let i = iu as usize;
                    for (a, &r) in cols.iter().enumerate() {
                        wt[a] = self.state.factors.at(r, i);
                    }
                    let free_part: f64 =
                        cols.iter().enumerate().map(|(a, &r)| lambda_j[r] * wt[a]).sum();
                    let fixed = self.eta[j * n + i] - free_part;
                    let resid = self.data.log_y_at(j, i) - fixed;
                    for a in 0..k {
                        lin[a] += wt[a] * resid / tau2;
                        for b in a..k {
                            *prec.at_mut(a, b) += wt[a] * wt[b] / tau2;
                        }
                    }
                }
                for a in 0..k {
                    for b in (a + 1)..k {
                        *prec.at_mut(b, a) = prec.at(a, b);
                    }
                }
                draw_mvn_from_precision(&mut prec, &lin, rng)
                    .map_err(|e| Error::numerical(MODULE, format!("loadings, species {j}: {e}")))?
            };
            for (a, &r) in cols.iter().enumerate() {
                *self.state.loadings.at_mut(j, r) = new_free[a];
            }
            self.refresh_eta_row(j);
        }
        apply_loading_constraints(&mut self.state.loadings);
        Ok(())
    }

    fn update_factors(&mut self, rng: &mut ChaCha8Rng) {
        let n = self.n();
        let j_n = self.data.n_species();
        for r in 0..self.q {
            let sys = &self.systems[r];
            for i in 0..n {
                let (_, f_i) = sys.coeffs(i);
                let mut prec = 1.0 / f_i;
                let mut lin = sys.cond_mean(i, self.state.factors.row(r)) / f_i;
                for &(v, slot) in &self.co_nbrs[i] {
                    let v = v as usize;
                    let (b_v, f_v) = sys.coeffs(v);
                    let nbrs_v = self.data.graph.neighbors(v);
                    let mut pred_minus = 0.0;
                    for (kk, &u) in nbrs_v.iter().enumerate() {
                        if kk != slot as usize {
                            pred_minus += b_v[kk] * self.state.factors.at(r, u as usize);
                        }
                    }
                    let b_slot = b_v[slot as usize];
                    prec += b_slot * b_slot / f_v;
                    lin += b_slot * (self.state.factors.at(r, v) - pred_minus) / f_v;
                }
                if !self.opts.prior_only {
                    for j in 0..j_n {
                        if self.data.z_at(j, i) != 1 {
                            continue;
                        }
                        let lam = self.state.loadings.at(j, r);
                        if lam == 0.0 {
                            continue;
                        }
                        let tau2 = self.state.tau2[j];
                        let other = self.eta[j * n + i] - lam * self.state.factors.at(r, i);
                        let resid = self.data.log_y_at(j, i) - other;
                        prec += lam * lam / tau2;
                        lin += lam * resid / tau2;
                    }
                }
                let var = 1.0 / prec;
                let new_w = lin * var + var.sqrt() * rng.sample::<f64, _>(StandardNormal);
                let delta = new_w - self.state.factors.at(r, i);
                *self.state.factors.at_mut(r, i) = new_w;
                if delta != 0.0 {
                    for j in 0..j_n {
                        let lam = self.state.loadings.at(j, r);
                        if lam != 0.0 {
                            self.eta[j * n + i] += lam * delta;
                        }
                    }
                }
            }
        }
    }

    fn update_phi(&mut self, rng: &mut ChaCha8Rng, adapting: bool) -> Result<()> {
        for r in 0..self.q {
            let w_row = self.state.factors.row(r);
            let ld_current = self.systems[r].log_density(w_row);
            let mut candidate: Option<NngpSystem> = None;
            let graph = &self.data.graph;
            let (new_phi, accepted) = self.walkers[r].update(
                self.state.phi[r],
                ld_current,
                |phi| {
                    let sys = factorize(graph, phi)?;
                    let ld = sys.log_density(w_row);
                    candidate = Some(sys);
                    Ok(ld)
                },
                adapting,
                rng,
            )?;
            if accepted {
                self.systems[r] = candidate.take().expect("accepted proposal was evaluated");
                self.state.phi[r] = new_phi;
            }
        }
        Ok(())
    }
}

impl StageSampler for Stage2Sampler<'_> {
    fn step(&mut self, rng: &mut ChaCha8Rng, adapting: bool) -> Result<()> {
        for block in self.order.clone() {
            match block {
                Stage2Block::Coefficients => self.update_coefficients(rng)?,
                Stage2Block::Variance => self.update_variance(rng),
                Stage2Block::Loadings => {
                    if !self.opts.skip_loadings {
                        self.update_loadings(rng)?;
                    }
                }
                Stage2Block::Factors => {
                    if !self.opts.skip_factors {
                        self.update_factors(rng);
                    }
                }
                Stage2Block::Phi => {
                    if !self.opts.skip_phi {
                        self.update_phi(rng, adapting)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn block_dims(&self) -> Vec<(String, Vec<usize>)> {
        let j_n = self.data.n_species();
        let p = self.data.x2.cols();
        vec![
            ("alpha".into(), vec![j_n, p]),
            ("tau2".into(), vec![j_n]),
            ("lambda".into(), vec![j_n, self.q]),
            ("w".into(), vec![self.q, self.n()]),
            ("phi".into(), vec![self.q]),
        ]
    }

    fn record(&self, out: &mut Vec<Vec<f64>>) {
        out[0].extend_from_slice(self.state.alpha.data());
        out[1].extend_from_slice(&self.state.tau2);
        out[2].extend_from_slice(self.state.loadings.data());
        out[3].extend_from_slice(self.state.factors.data());
        out[4].extend_from_slice(&self.state.phi);
    }
}

/// Fit Stage 2 conditionally on the observed presence pattern.
pub fn run_stage2(
    data: &HurdleData,
    priors: &PriorConfig,
    q: usize,
    config: &McmcConfig,
    opts: &FitOptions,
) -> Result<crate::mcmc::SampleStore> {
    crate::mcmc::run_chains(config, "stage2", |_chain, rng| {
        Stage2Sampler::new(data, priors, q, config, opts, rng)
    })
}
