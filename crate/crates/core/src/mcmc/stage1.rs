//! Stage-1 (occurrence) Gibbs sweep.
//!
//! The Bernoulli-logit likelihood is augmented with Pólya-Gamma latents,
//! which makes every coefficient, loading, and factor conditional Gaussian;
//! community means and variances get conjugate Normal / inverse-gamma
//! updates, and the decay parameters move by bounded adaptive Metropolis.
//! Default sweep: augmentation, coefficients, hyper, loadings, factors, phi.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::Error;
use crate::linalg::{draw_mvn_from_precision, Mat};
use crate::mcmc::{BoundedWalker, FitOptions, McmcConfig, StageSampler};
use crate::model::{
    apply_loading_constraints, init_state, loading_free_cols, Dims, HurdleData, PriorConfig,
    Stage1Params,
};
use crate::nngp::{factorize, NngpSystem};
use crate::pg::sample_polya_gamma;
use crate::Result;

const MODULE: &str = "mcmc-engine";

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stage1Block {
    Augmentation,
    Coefficients,
    Hyper,
    Loadings,
    Factors,
    Phi,
}

pub fn parse_stage1_order(names: Option<&Vec<String>>) -> Result<Vec<Stage1Block>> {
    let default = vec![
        Stage1Block::Augmentation,
        Stage1Block::Coefficients,
        Stage1Block::Hyper,
        Stage1Block::Loadings,
        Stage1Block::Factors,
        Stage1Block::Phi,
    ];
    match names {
        None => Ok(default),
        Some(list) => list
            .iter()
            .map(|s| match s.as_str() {
                "augmentation" => Ok(Stage1Block::Augmentation),
                "coefficients" => Ok(Stage1Block::Coefficients),
                "hyper" => Ok(Stage1Block::Hyper),
                "loadings" => Ok(Stage1Block::Loadings),
                "factors" => Ok(Stage1Block::Factors),
                "phi" => Ok(Stage1Block::Phi),
                other => Err(Error::config(
                    MODULE,
                    format!("unknown stage-1 block '{other}'"),
                )),
            })
            .collect(),
    }
}

pub struct Stage1Sampler<'d> {
    data: &'d HurdleData,
    priors: PriorConfig,
    opts: FitOptions,
    order: Vec<Stage1Block>,
    q: usize,
    pub state: Stage1Params,
    /// Pólya-Gamma latents, J x n.
    omega: Vec<f64>,
    /// Cached linear predictors zeta_{j,i}, J x n.
    zeta: Vec<f64>,
    systems: Vec<NngpSystem>,
    co_nbrs: Vec<Vec<(u32, u16)>>,
    walkers: Vec<BoundedWalker>,
}

impl<'d> Stage1Sampler<'d> {
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
        let p1 = data.x1.cols();
        let dims = Dims { n_species: j_n, n_sites: n, p1, p2: data.x2.cols(), q };
        let (mut state, _) = init_state(priors, dims, &data.graph, rng)?;
        if let Some(v) = &opts.fix_mu_beta {
            state.mu_beta.clone_from(v);
        }
        if let Some(v) = &opts.fix_tau2_beta {
            state.tau2_beta.clone_from(v);
        }
        let systems: Vec<NngpSystem> = state
            .phi
            .iter()
            .map(|&phi| factorize(&data.graph, phi))
            .collect::<Result<_>>()?;
        let (lo, hi) = priors.phi_bounds();
        let walkers = vec![BoundedWalker::new(lo, hi, config.target_accept); q];
        let mut s = Stage1Sampler {
            data,
            priors: priors.clone(),
            opts: opts.clone(),
            order: parse_stage1_order(config.block_order.as_ref())?,
            q,
            state,
            omega: vec![0.0; j_n * n],
            zeta: vec![0.0; j_n * n],
            systems,
            co_nbrs: data.graph.co_neighbors(),
            walkers,
        };
        s.refresh_zeta_all();
        if !s.opts.prior_only {
            s.update_augmentation(rng);
        }
        Ok(s)
    }

    fn n(&self) -> usize {
        self.data.n_sites()
    }

    fn refresh_zeta_row(&mut self, j: usize) {
        let n = self.n();
        let beta_j = self.state.beta.row(j).to_vec();
        let lambda_j = self.state.loadings.row(j).to_vec();
        for i in 0..n {
            let mut v = 0.0;
            for (t, &b) in beta_j.iter().enumerate() {
                v += self.data.x1.at(i, t) * b;
            }
            for (r, &l) in lambda_j.iter().enumerate() {
                v += l * self.state.factors.at(r, i);
            }
            self.zeta[j * n + i] = v;
        }
    }

    fn refresh_zeta_all(&mut self) {
        for j in 0..self.data.n_species() {
            self.refresh_zeta_row(j);
        }
    }

    fn update_augmentation(&mut self, rng: &mut ChaCha8Rng) {
        for v in 0..self.omega.len() {
            self.omega[v] = sample_polya_gamma(1, self.zeta[v], rng);
        }
    }

    fn update_coefficients(&mut self, rng: &mut ChaCha8Rng) -> Result<()> {
        let n = self.n();
        let p = self.data.x1.cols();
        for j in 0..self.data.n_species() {
            let new_beta = if self.opts.prior_only {
                (0..p)
                    .map(|t| {
                        self.state.mu_beta[t]
                            + self.state.tau2_beta[t].sqrt() * rng.sample::<f64, _>(StandardNormal)
                    })
                    .collect::<Vec<f64>>()
            } else {
                let mut prec = Mat::zeros(p, p);
                let mut lin = vec![0.0; p];
                for t in 0..p {
                    *prec.at_mut(t, t) = 1.0 / self.state.tau2_beta[t];
                    lin[t] = self.state.mu_beta[t] / self.state.tau2_beta[t];
                }
                let beta_j = self.state.beta.row(j).to_vec();
                for i in 0..n {
                    let x = self.data.x1.row(i);
                    let om = self.omega[j * n + i];
                    let xb: f64 = x.iter().zip(beta_j.iter()).map(|(a, b)| a * b).sum();
                    let spatial = self.zeta[j * n + i] - xb;
                    let kappa = self.data.z_at(j, i) as f64 - 0.5;
                    let resid = kappa - om * spatial;
                    for t in 0..p {
                        lin[t] += x[t] * resid;
                        for u in t..p {
                            *prec.at_mut(t, u) += om * x[t] * x[u];
                        }
                    }
                }
                for t in 0..p {
                    for u in (t + 1)..p {
                        *prec.at_mut(u, t) = prec.at(t, u);
                    }
                }
                draw_mvn_from_precision(&mut prec, &lin, rng)
                    .map_err(|e| Error::numerical(MODULE, format!("beta, species {j}: {e}")))?
            };
            self.state.beta.row_mut(j).copy_from_slice(&new_beta);
            self.refresh_zeta_row(j);
        }
        Ok(())
    }

    fn update_hyper(&mut self, rng: &mut ChaCha8Rng) {
        let j_n = self.data.n_species() as f64;
        let p = self.data.x1.cols();
        for t in 0..p {
            if self.opts.fix_mu_beta.is_none() {
                let prec = j_n / self.state.tau2_beta[t] + 1.0 / self.priors.beta_mean_var;
                let sum_b: f64 = (0..self.data.n_species())
                    .map(|j| self.state.beta.at(j, t))
                    .sum();
                let mean = sum_b / self.state.tau2_beta[t] / prec;
                self.state.mu_beta[t] =
                    mean + (1.0 / prec).sqrt() * rng.sample::<f64, _>(StandardNormal);
            }
            if self.opts.fix_tau2_beta.is_none() {
                let shape = self.priors.tau2_beta_shape + j_n / 2.0;
                let mut rss = 0.0;
                for j in 0..self.data.n_species() {
                    let d = self.state.beta.at(j, t) - self.state.mu_beta[t];
                    rss += d * d;
                }
                let scale = self.priors.tau2_beta_scale + 0.5 * rss;
                let g = Gamma::new(shape, 1.0 / scale).expect("valid gamma");
                self.state.tau2_beta[t] = 1.0 / g.sample(rng);
            }
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
                let mut prec = Mat::zeros(k, k);
                let mut lin = vec![0.0; k];
                for a in 0..k {
                    *prec.at_mut(a, a) = 1.0 / self.priors.loadings_var;
                }
                let lambda_j = self.state.loadings.row(j).to_vec();
                let mut wt = vec![0.0; k];
                for i in 0..n {
                    for (a, &r) in cols.iter().enumerate() {
                        wt[a] = self.state.factors.at(r, i);
                    }
                    let free_part: f64 =
                        cols.iter().enumerate().map(|(a, &r)| lambda_j[r] * wt[a]).sum();
                    let fixed = self.zeta[j * n + i] - free_part;
                    let om = self.omega[j * n + i];
                    let kappa = self.data.z_at(j, i) as f64 - 0.5;
                    let resid = kappa - om * fixed;
                    for a in 0..k {
                        lin[a] += wt[a] * resid;
                        for b in a..k {
                            *prec.at_mut(a, b) += om * wt[a] * wt[b];
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
            self.refresh_zeta_row(j);
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
                        let lam = self.state.loadings.at(j, r);
                        if lam == 0.0 {
                            continue;
                        }
                        let om = self.omega[j * n + i];
                        let kappa = self.data.z_at(j, i) as f64 - 0.5;
                        let other = self.zeta[j * n + i] - lam * self.state.factors.at(r, i);
                        prec += om * lam * lam;
                        lin += lam * (kappa - om * other);
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
                            self.zeta[j * n + i] += lam * delta;
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

impl StageSampler for Stage1Sampler<'_> {
    fn step(&mut self, rng: &mut ChaCha8Rng, adapting: bool) -> Result<()> {
        for block in self.order.clone() {
            match block {
                Stage1Block::Augmentation => {
                    if !self.opts.prior_only {
                        self.update_augmentation(rng);
                    }
                }
                Stage1Block::Coefficients => self.update_coefficients(rng)?,
                Stage1Block::Hyper => self.update_hyper(rng),
                Stage1Block::Loadings => {
                    if !self.opts.skip_loadings {
                        self.update_loadings(rng)?;
                    }
                }
                Stage1Block::Factors => {
                    if !self.opts.skip_factors {
                        self.update_factors(rng);
                    }
                }
                Stage1Block::Phi => {
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
        let p = self.data.x1.cols();
        vec![
            ("beta".into(), vec![j_n, p]),
            ("mu_beta".into(), vec![p]),
            ("tau2_beta".into(), vec![p]),
            ("lambda".into(), vec![j_n, self.q]),
            ("w".into(), vec![self.q, self.n()]),
            ("phi".into(), vec![self.q]),
        ]
    }

    fn record(&self, out: &mut Vec<Vec<f64>>) {
        out[0].extend_from_slice(self.state.beta.data());
        out[1].extend_from_slice(&self.state.mu_beta);
        out[2].extend_from_slice(&self.state.tau2_beta);
        out[3].extend_from_slice(self.state.loadings.data());
        out[4].extend_from_slice(self.state.factors.data());
        out[5].extend_from_slice(&self.state.phi);
    }
}

/// Fit Stage 1: independent chains, burn-in discarded, thinned draws stored.
pub fn run_stage1(
    data: &HurdleData,
    priors: &PriorConfig,
    q: usize,
    config: &McmcConfig,
    opts: &FitOptions,
) -> Result<crate::mcmc::SampleStore> {
    crate::mcmc::run_chains(config, "stage1", |_chain, rng| {
        Stage1Sampler::new(data, priors, q, config, opts, rng)
    })
}
