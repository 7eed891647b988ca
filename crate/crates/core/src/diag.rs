//! Convergence diagnostics: split potential scale reduction factors.
//!
//! `split_rhat` is the classic between/within variance ratio computed on
//! half-chains of the raw draws; `split_rhat_rank_normalized` applies a
//! pooled rank-to-normal transform first, which is robust to heavy tails but
//! saturates for small chain counts. Both are reported; constant chains are
//! 1.0 by convention.

use crate::error::Error;
use crate::linalg::{mean, sample_variance};
use crate::mcmc::SampleStore;
use crate::stats::norm_quantile;
use crate::Result;

const MODULE: &str = "mcmc-engine";

fn split_in_half(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut halves = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        let n = c.len();
        let h = n / 2;
        // Middle draw of an odd-length chain is dropped.
        halves.push(c[..h].to_vec());
        halves.push(c[n - h..].to_vec());
    }
    halves
}

fn psrf(groups: &[Vec<f64>]) -> f64 {
    let n = groups.iter().map(|g| g.len()).min().unwrap_or(0);
    if n < 2 {
        return f64::NAN;
    }
    let trimmed: Vec<&[f64]> = groups.iter().map(|g| &g[..n]).collect();
    let means: Vec<f64> = trimmed.iter().map(|g| mean(g)).collect();
    let vars: Vec<f64> = trimmed.iter().map(|g| sample_variance(g)).collect();
    let w = mean(&vars);
    let b_over_n = sample_variance(&means);
    if w == 0.0 && b_over_n == 0.0 {
        return 1.0; // constant chains
    }
    if w == 0.0 {
        return f64::INFINITY;
    }
    let nf = n as f64;
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    (var_plus / w).sqrt()
}

fn check_chains(chains: &[Vec<f64>]) -> Result<()> {
    if chains.len() < 2 {
        return Err(Error::config(
            MODULE,
            "potential scale reduction needs at least 2 chains",
        ));
    }
    if chains.iter().any(|c| c.len() < 4) {
        return Err(Error::config(
            MODULE,
            "potential scale reduction needs at least 4 draws per chain",
        ));
    }
    Ok(())
}

/// Classic split potential scale reduction factor.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    check_chains(chains)?;
    Ok(psrf(&split_in_half(chains)))
}

/// Rank-normalized split potential scale reduction factor: pooled ranks
/// (ties averaged) mapped through the normal quantile, then the classic
/// split statistic.
pub fn split_rhat_rank_normalized(chains: &[Vec<f64>]) -> Result<f64> {
    check_chains(chains)?;
    let total: usize = chains.iter().map(|c| c.len()).sum();
    let mut indexed: Vec<(f64, usize)> = Vec::with_capacity(total);
    let mut flat_idx = 0usize;
    for c in chains {
        for &v in c {
            indexed.push((v, flat_idx));
            flat_idx += 1;
        }
    }
    if indexed.iter().all(|&(v, _)| v == indexed[0].0) {
        return Ok(1.0);
    }
    indexed.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("NaN draw"));
    let mut ranks = vec![0.0f64; total];
    let mut i = 0;
    while i < total {
        let mut j = i;
        while j + 1 < total && indexed[j + 1].0 == indexed[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for item in &indexed[i..=j] {
            ranks[item.1] = avg_rank;
        }
        i = j + 1;
    }
    let s = total as f64;
    let mut z_chains = Vec::with_capacity(chains.len());
    let mut flat_idx = 0usize;
    for c in chains {
        let mut z = Vec::with_capacity(c.len());
        for _ in c {
            let p = (ranks[flat_idx] - 0.375) / (s + 0.25);
            z.push(norm_quantile(p));
            flat_idx += 1;
        }
        z_chains.push(z);
    }
    Ok(psrf(&split_in_half(&z_chains)))
}

/// Per-scalar diagnostics of one parameter block.
#[derive(Clone, Debug)]
pub struct RhatRow {
    pub block: String,
    pub index: usize,
    pub rhat_split: f64,
    pub rhat_rank: f64,
}

/// Split R-hat (both flavors) for every scalar in a block.
pub fn rhat_table(store: &SampleStore, block: &str) -> Result<Vec<RhatRow>> {
    if store.n_chains < 2 {
        return Err(Error::config(
            MODULE,
            "potential scale reduction needs at least 2 chains",
        ));
    }
    let b = store.block(block)?;
    let len = b.len_per_draw();
    let mut rows = Vec::with_capacity(len);
    for idx in 0..len {
        let chains: Vec<Vec<f64>> = (0..store.n_chains)
            .map(|c| store.scalar_series(block, idx, c))
            .collect::<Result<_>>()?;
        rows.push(RhatRow {
            block: block.to_string(),
            index: idx,
            rhat_split: split_rhat(&chains)?,
            rhat_rank: split_rhat_rank_normalized(&chains)?,
        });
    }
    Ok(rows)
}
