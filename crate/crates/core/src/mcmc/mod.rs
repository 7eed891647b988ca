//! Gibbs-within-Metropolis samplers for both hurdle stages, chain
//! management, and posterior sample storage.
//!
//! Chains run in parallel with independently derived seeds; within a chain,
//! parameter blocks update sequentially in a configurable sweep. Metropolis
//! step sizes adapt toward a target acceptance rate during burn-in and are
//! frozen afterwards so stored draws come from a fixed kernel.

pub mod stage1;
pub mod stage2;
pub mod store;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::rng::{chacha, mix_seed};
use crate::Result;

pub use store::{Block, SampleStore};

const MODULE: &str = "mcmc-engine";

/// Chain-management configuration.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct McmcConfig {
    pub n_chains: usize,
    pub n_iters: usize,
    pub n_burn: usize,
    pub n_thin: usize,
    pub seed: u64,
    /// Adaptive-Metropolis target acceptance rate.
    #[serde(default = "default_target_accept")]
    pub target_accept: f64,
    /// Optional block sweep override; `None` keeps the stage's default order.
    #[serde(default)]
    pub block_order: Option<Vec<String>>,
}

fn default_target_accept() -> f64 {
    0.44
}

impl McmcConfig {
    /// Production Stage-1 run lengths: 3 chains x 200,000 iterations,
    /// 140,000 burn-in, thin 30 (6,000 retained draws).
    pub fn stage1_default(seed: u64) -> Self {
        McmcConfig {
            n_chains: 3,
            n_iters: 200_000,
            n_burn: 140_000,
            n_thin: 30,
            seed,
            target_accept: 0.44,
            block_order: None,
        }
    }

    /// Production Stage-2 run lengths: 3 chains x 100,000 iterations,
    /// 40,000 burn-in, thin 30 (6,000 retained draws).
    pub fn stage2_default(seed: u64) -> Self {
        McmcConfig {
            n_chains: 3,
            n_iters: 100_000,
            n_burn: 40_000,
            n_thin: 30,
            seed,
            target_accept: 0.44,
            block_order: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::config(MODULE, "n_chains must be >= 1"));
        }
        if self.n_thin == 0 {
            return Err(Error::config(MODULE, "n_thin must be >= 1"));
        }
        if self.n_burn >= self.n_iters {
            return Err(Error::config(
                MODULE,
                format!("n_burn ({}) must be < n_iters ({})", self.n_burn, self.n_iters),
            ));
        }
        if (self.n_iters - self.n_burn) % self.n_thin != 0 {
            return Err(Error::config(
                MODULE,
                format!(
                    "(n_iters - n_burn) = {} not divisible by n_thin = {}",
                    self.n_iters - self.n_burn,
                    self.n_thin
                ),
            ));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::config(MODULE, "target_accept must lie in (0,1)"));
        }
        Ok(())
    }

    pub fn draws_per_chain(&self) -> usize {
        (self.n_iters - self.n_burn) / self.n_thin
    }

    pub fn total_draws(&self) -> usize {
        self.n_chains * self.draws_per_chain()
    }
}

/// Test- and diagnostics-oriented switches for the samplers. Defaults run the
/// full model; prior-only runs and frozen blocks support prior-reproduction
/// and conjugate-oracle checks.
#[derive(Clone, Debug, Default)]
pub struct FitOptions {
    /// Drop every likelihood contribution so the Gibbs sweep targets the
    /// joint prior.
    pub prior_only: bool,
    /// Freeze the Stage-1 community means at the given values.
    pub fix_mu_beta: Option<Vec<f64>>,
    /// Freeze the Stage-1 community variances at the given values.
    pub fix_tau2_beta: Option<Vec<f64>>,
    /// Freeze the Stage-2 residual variances at the given values.
    pub fix_tau2: Option<Vec<f64>>,
    /// Skip loading updates (loadings stay at their initial values).
    pub skip_loadings: bool,
    /// Skip factor-field updates.
    pub skip_factors: bool,
    /// Skip decay updates.
    pub skip_phi: bool,
}

/// One stage-specific sampler driven by the shared chain loop.
pub trait StageSampler {
    /// Advance the state one full sweep.
    fn step(&mut self, rng: &mut ChaCha8Rng, adapting: bool) -> Result<()>;
    /// Block names and per-draw dimensions, in storage order.
    fn block_dims(&self) -> Vec<(String, Vec<usize>)>;
    /// Append the current values of every block to `out` (same order as
    /// `block_dims`).
    fn record(&self, out: &mut Vec<Vec<f64>>);
}

/// Run independent chains and collect thinned post-burn draws.
///
/// `build` receives the chain index and a chain-specific RNG and must return
/// a freshly initialized sampler; chains execute in parallel and are merged
/// in chain order, so results do not depend on thread scheduling.
pub fn run_chains<S, F>(config: &McmcConfig, stage: &str, build: F) -> Result<SampleStore>
where
    S: StageSampler,
    F: Fn(usize, &mut ChaCha8Rng) -> Result<S> + Sync,
{
    config.validate()?;
    let draws = config.draws_per_chain();

    let chain_results: Vec<Result<Vec<Vec<f64>>>> = (0..config.n_chains)
        .into_par_iter()
        .map(|chain| {
            let mut rng = chacha(mix_seed(config.seed, &[0xC0FFEE, chain as u64]));
            let mut sampler = build(chain, &mut rng)?;
            let n_blocks = sampler.block_dims().len();
            let mut recorded: Vec<Vec<f64>> = vec![Vec::new(); n_blocks];
            for iter in 0..config.n_iters {
                let adapting = iter < config.n_burn;
                sampler.step(&mut rng, adapting).map_err(|e| {
                    Error::numerical(
                        MODULE,
                        format!("chain {chain} iteration {iter}: {e}"),
                    )
                })?;
                if iter >= config.n_burn && (iter - config.n_burn + 1) % config.n_thin == 0 {
                    sampler.record(&mut recorded);
                }
            }
            Ok(recorded)
        })
        .collect();

    let mut per_chain = Vec::with_capacity(config.n_chains);
    for r in chain_results {
        per_chain.push(r?);
    }

    // Block dims from a throwaway build (cheap relative to the run).
    let mut probe_rng = chacha(mix_seed(config.seed, &[0xC0FFEE, 0]));
    let probe = build(0, &mut probe_rng)?;
    let dims = probe.block_dims();

    let mut store = SampleStore::new(stage, config.n_chains, draws);
    for (b, (name, shape)) in dims.iter().enumerate() {
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(config.n_chains * draws * len);
        for chain_blocks in &per_chain {
            assert_eq!(chain_blocks[b].len(), draws * len, "short chain record");
            data.extend_from_slice(&chain_blocks[b]);
        }
        store.insert(name, shape.clone(), data)?;
    }
    Ok(store)
}

/// Bounded-support random-walk Metropolis on a logit transform, with
/// batched step-size adaptation toward the target acceptance rate.
#[derive(Clone, Debug)]
pub struct BoundedWalker {
    pub lo: f64,
    pub hi: f64,
    log_step: f64,
    target: f64,
    batch_hits: u32,
    batch_size: u32,
    batch_count: u32,
    batches_done: u32,
}

impl BoundedWalker {
    pub fn new(lo: f64, hi: f64, target: f64) -> Self {
        BoundedWalker {
            lo,
            hi,
            log_step: 0.0,
            target,
            batch_hits: 0,
            batch_size: 25,
            batch_count: 0,
            batches_done: 0,
        }
    }

    fn to_unbounded(&self, x: f64) -> f64 {
        ((x - self.lo) / (self.hi - x)).ln()
    }

    fn to_bounded(&self, t: f64) -> f64 {
        self.lo + (self.hi - self.lo) / (1.0 + (-t).exp())
    }

    /// log |dx/dt| at the bounded value x.
    fn log_jacobian(&self, x: f64) -> f64 {
        ((x - self.lo) * (self.hi - x) / (self.hi - self.lo)).ln()
    }

    /// One Metropolis update of `current`. `ld_current` is the log target at
    /// the current value and `ld_proposal` evaluates it at the proposal; both
    /// exclude the transform Jacobian, which the walker adds itself.
    /// Returns (value, accepted).
    pub fn update<R: rand::Rng, F: FnMut(f64) -> Result<f64>>(
        &mut self,
        current: f64,
        ld_current: f64,
        mut ld_proposal: F,
        adapting: bool,
        rng: &mut R,
    ) -> Result<(f64, bool)> {
        use rand_distr::StandardNormal;
        let step = self.log_step.exp();
        let t_cur = self.to_unbounded(current);
        let t_prop = t_cur + step * rng.sample::<f64, _>(StandardNormal);
        let x_prop = self.to_bounded(t_prop);
        // Guard against saturation at the bounds in floating point.
        let accepted = if x_prop > self.lo && x_prop < self.hi {
            let ld_cur = ld_current + self.log_jacobian(current);
            let ld_prop = ld_proposal(x_prop)? + self.log_jacobian(x_prop);
            (ld_prop - ld_cur) >= rng.gen::<f64>().ln()
        } else {
            false
        };
        if adapting {
            self.batch_count += 1;
            if accepted {
                self.batch_hits += 1;
            }
            if self.batch_count == self.batch_size {
                self.batches_done += 1;
                let rate = self.batch_hits as f64 / self.batch_size as f64;
                let delta = (1.0 / (self.batches_done as f64).sqrt()).min(0.05);
                if rate > self.target {
                    self.log_step += delta;
                } else {
                    self.log_step -= delta;
                }
                self.batch_count = 0;
                self.batch_hits = 0;
            }
        }
        Ok(if accepted { (x_prop, true) } else { (current, false) })
    }
}
