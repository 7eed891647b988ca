//! Exponential-kernel nearest-neighbor Gaussian process machinery.
//!
//! A latent unit-variance field w over n sites is approximated by ordering the
//! sites and conditioning each on at most m nearest preceding neighbors:
//!
//! ```text
//! w_i | w_{N(i)} ~ Normal(b_i^T w_{N(i)}, f_i)
//! b_i = C(N(i), N(i))^{-1} C(N(i), i),   f_i = 1 - C(i, N(i)) b_i
//! ```
//!
//! under the exponential correlation C(d) = exp(-phi d). With m = n-1 the
//! factorization reproduces the dense Gaussian process exactly; with small m
//! the joint density evaluates in O(n m^3) instead of O(n^3).
//!
//! Sites are ordered ascending by the first planar coordinate (ties by the
//! second); neighbor-distance ties break toward the smaller ordered index.
//! All fields indexed by site below use the ordered indexing.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::Error;
use crate::linalg::{cholesky_in_place, forward_solve, backward_solve, Mat};
use crate::Result;

const MODULE: &str = "covariance-nngp";

/// ln 20; the effective range of the exponential kernel (correlation 0.05)
/// is ln(20)/phi.
pub const LN_20: f64 = 2.995732273553991;

/// exp(-phi d) for d >= 0, phi > 0.
pub fn exp_correlation(d: f64, phi: f64) -> Result<f64> {
    if !(phi > 0.0) {
        return Err(Error::config(MODULE, format!("decay must be positive, got {phi}")));
    }
    if !(d >= 0.0) {
        return Err(Error::config(MODULE, format!("distance must be nonnegative, got {d}")));
    }
    Ok((-phi * d).exp())
}

#[inline]
fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    (dx * dx + dy * dy).sqrt()
}

/// Site ordering plus per-site nearest-preceding-neighbor sets.
#[derive(Clone, Debug)]
pub struct NeighborGraph {
    /// Ordered position -> index into the caller's original site list.
    pub order: Vec<usize>,
    /// Coordinates in ordered indexing.
    pub coords: Vec<(f64, f64)>,
    /// Neighbor budget.
    pub m: usize,
    nbr: Vec<u32>,
    nbr_len: Vec<u16>,
}

impl NeighborGraph {
    pub fn n(&self) -> usize {
        self.coords.len()
    }

    /// Neighbor set of ordered site i (ordered indices, all < i).
    #[inline]
    pub fn neighbors(&self, i: usize) -> &[u32] {
        let len = self.nbr_len[i] as usize;
        &self.nbr[i * self.m..i * self.m + len]
    }

    /// For each site i, the list of (v, slot) pairs such that i is the
    /// slot-th neighbor of site v. Needed by sitewise Gibbs updates.
    pub fn co_neighbors(&self) -> Vec<Vec<(u32, u16)>> {
        let mut out = vec![Vec::new(); self.n()];
        for v in 0..self.n() {
            for (slot, &u) in self.neighbors(v).iter().enumerate() {
                out[u as usize].push((v as u32, slot as u16));
            }
        }
        out
    }
}

/// Keep the m lexicographically-smallest (distance^2, index) pairs.
#[derive(Clone)]
struct BestM {
    m: usize,
    items: Vec<(f64, u32)>,
}

impl BestM {
    fn new(m: usize) -> Self {
        BestM { m, items: Vec::with_capacity(m + 1) }
    }

    #[inline]
    fn worst(&self) -> Option<(f64, u32)> {
        if self.items.len() == self.m {
            self.items.last().copied()
        } else {
            None
        }
    }

    #[inline]
    fn push(&mut self, d2: f64, idx: u32) {
        let key = (d2, idx);
        let pos = self
            .items
            .partition_point(|&(pd, pi)| (pd, pi) < key);
        self.items.insert(pos, key);
        if self.items.len() > self.m {
            self.items.pop();
        }
    }
}

/// Build the neighbor graph: order sites ascending by (x, y), then collect
/// for each site the m nearest preceding sites (ties to the smaller index).
pub fn build_neighbor_graph(coords: &[(f64, f64)], m: usize) -> Result<NeighborGraph> {
    if coords.is_empty() {
        return Err(Error::validation(MODULE, "no coordinates supplied"));
    }
    if m == 0 {
        return Err(Error::config(MODULE, "neighbor budget m must be >= 1"));
    }
    for (i, &(x, y)) in coords.iter().enumerate() {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::validation(MODULE, format!("non-finite coordinate at site {i}")));
        }
    }
    let n = coords.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        coords[a]
            .partial_cmp(&coords[b])
            .expect("finite coords compare")
            .then(a.cmp(&b))
    });
    let ordered: Vec<(f64, f64)> = order.iter().map(|&i| coords[i]).collect();
    for w in ordered.windows(2) {
        if w[0] == w[1] {
            return Err(Error::validation(
                MODULE,
                "duplicate coordinates; separate them (jitter) before building the graph",
            ));
        }
    }

    let mut nbr = vec![0u32; n * m];
    let mut nbr_len = vec![0u16; n];
    // Preceding sites are a prefix sorted by x, so a backward sweep can stop
    // once the x-gap alone exceeds the current worst retained distance.
    for i in 1..n {
        let mut best = BestM::new(m.min(i));
        let (xi, yi) = ordered[i];
        for j in (0..i).rev() {
            let (xj, yj) = ordered[j];
            let dx2 = (xi - xj) * (xi - xj);
            if let Some((wd2, _)) = best.worst() {
                if dx2 > wd2 {
                    break;
                }
            }
            let d2 = dx2 + (yi - yj) * (yi - yj);
            match best.worst() {
                Some((wd2, wi)) if (d2, j as u32) >= (wd2, wi) => {}
                _ => best.push(d2, j as u32),
            }
        }
        nbr_len[i] = best.items.len() as u16;
        for (k, &(_, idx)) in best.items.iter().enumerate() {
            nbr[i * m + k] = idx;
        }
        // Store sorted by ordered index for reproducible coefficient layout.
        nbr[i * m..i * m + best.items.len()].sort_unstable();
    }

    Ok(NeighborGraph { order, coords: ordered, m, nbr, nbr_len })
}

/// Sparse conditional factorization of the NNGP prior at a given decay.
#[derive(Clone, Debug)]
pub struct NngpSystem {
    pub graph: Arc<NeighborGraph>,
    pub phi: f64,
    /// Conditional regression weights, n x m flat (slot order matches
    /// `graph.neighbors(i)`).
    b: Vec<f64>,
    /// Conditional variances, all in (0, 1].
    f: Vec<f64>,
}

impl NngpSystem {
    #[inline]
    pub fn coeffs(&self, i: usize) -> (&[f64], f64) {
        let len = self.graph.nbr_len[i] as usize;
        (&self.b[i * self.graph.m..i * self.graph.m + len], self.f[i])
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    /// Conditional mean of site i given current field values.
    #[inline]
    pub fn cond_mean(&self, i: usize, w: &[f64]) -> f64 {
        let (b, _) = self.coeffs(i);
        let nb = self.graph.neighbors(i);
        let mut s = 0.0;
        for (k, &u) in nb.iter().enumerate() {
            s += b[k] * w[u as usize];
        }
        s
    }

    /// Joint log-density of a field under the factorized prior.
    pub fn log_density(&self, w: &[f64]) -> f64 {
        assert_eq!(w.len(), self.n(), "field length mismatch");
        let mut ld = 0.0;
        for i in 0..self.n() {
            let (_, f) = self.coeffs(i);
            let r = w[i] - self.cond_mean(i, w);
            ld += -0.5 * ((2.0 * std::f64::consts::PI * f).ln() + r * r / f);
        }
        ld
    }

    /// Exact ancestral draw from the factorized prior.
    pub fn sample_prior<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.n();
        let mut w = vec![0.0; n];
        for i in 0..n {
            let (_, f) = self.coeffs(i);
            let z: f64 = rng.sample(StandardNormal);
            w[i] = self.cond_mean(i, &w) + f.sqrt() * z;
        }
        w
    }
}

/// Conditional weights b and variance f for a target site given an explicit
/// neighbor set (correlations under the exponential kernel at `phi`).
pub fn conditional_coeffs(
    target: (f64, f64),
    neighbor_coords: &[(f64, f64)],
    phi: f64,
) -> Result<(Vec<f64>, f64)> {
    let k = neighbor_coords.len();
    if k == 0 {
        return Ok((Vec::new(), 1.0));
    }
    let mut cov = Mat::zeros(k, k);
    for a in 0..k {
        *cov.at_mut(a, a) = 1.0;
        for b in (a + 1)..k {
            let c = (-phi * dist(neighbor_coords[a], neighbor_coords[b])).exp();
            *cov.at_mut(a, b) = c;
            *cov.at_mut(b, a) = c;
        }
    }
    let cvec: Vec<f64> = neighbor_coords
        .iter()
        .map(|&p| (-phi * dist(target, p)).exp())
        .collect();
    cholesky_in_place(&mut cov)?;
    let mut b = cvec.clone();
    forward_solve(&cov, &mut b);
    backward_solve(&cov, &mut b);
    let explained: f64 = b.iter().zip(cvec.iter()).map(|(x, y)| x * y).sum();
    let f = (1.0 - explained).min(1.0);
    if !f.is_finite() {
        return Err(Error::numerical(
            MODULE,
            "conditional variance not finite; degenerate neighbor set?".to_string(),
        ));
    }
    // A target coincident with a neighbor drives f to 0 (exact interpolation);
    // keep it positive so downstream draws stay well-defined.
    Ok((b, f.max(1e-12)))
}

/// Compute the per-site conditional coefficients for a graph at decay `phi`.
pub fn factorize(graph: &Arc<NeighborGraph>, phi: f64) -> Result<NngpSystem> {
    if !(phi > 0.0) {
        return Err(Error::config(MODULE, format!("decay must be positive, got {phi}")));
    }
    let n = graph.n();
    let m = graph.m;
    let mut b = vec![0.0; n * m];
    let mut f = vec![1.0; n];
    let results: Vec<Result<(Vec<f64>, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let nbrs = graph.neighbors(i);
            let ncoords: Vec<(f64, f64)> =
                nbrs.iter().map(|&u| graph.coords[u as usize]).collect();
            conditional_coeffs(graph.coords[i], &ncoords, phi)
                .map_err(|e| Error::numerical(MODULE, format!("site {i}: {e}")))
        })
        .collect();
    for (i, r) in results.into_iter().enumerate() {
        let (bi, fi) = r?;
        b[i * m..i * m + bi.len()].copy_from_slice(&bi);
        f[i] = fi;
    }
    Ok(NngpSystem { graph: Arc::clone(graph), phi, b, f })
}

/// m-nearest-site queries against a fixed set of observed sites.
///
/// Observed coordinates must be sorted ascending by (x, y) — the NNGP ordering
/// already satisfies this — so queries can expand outward from a binary-search
/// position and prune on the x-gap.
pub struct SiteIndex<'a> {
    coords: &'a [(f64, f64)],
}

impl<'a> SiteIndex<'a> {
    pub fn new(sorted_coords: &'a [(f64, f64)]) -> Self {
        debug_assert!(sorted_coords.windows(2).all(|w| w[0] <= w[1]));
        SiteIndex { coords: sorted_coords }
    }

    /// Indices of the m nearest observed sites to `query` (ties to the
    /// smaller index), sorted ascending.
    pub fn m_nearest(&self, query: (f64, f64), m: usize) -> Vec<u32> {
        let n = self.coords.len();
        let m = m.min(n);
        let mut best = BestM::new(m);
        let start = self.coords.partition_point(|&(x, _)| x < query.0);
        let mut lo = start as isize - 1;
        let mut hi = start;
        loop {
            let lo_gap = if lo >= 0 {
                let dx = query.0 - self.coords[lo as usize].0;
                Some(dx * dx)
            } else {
                None
            };
            let hi_gap = if hi < n {
                let dx = self.coords[hi].0 - query.0;
                Some(dx * dx)
            } else {
                None
            };
            let take_lo = match (lo_gap, hi_gap) {
                (None, None) => break,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (Some(a), Some(b)) => a <= b,
            };
            let (j, gap) = if take_lo {
                let j = lo as usize;
                lo -= 1;
                (j, lo_gap.unwrap())
            } else {
                let j = hi;
                hi += 1;
                (j, hi_gap.unwrap())
            };
            if let Some((wd2, _)) = best.worst() {
                if gap > wd2 {
                    // This side is exhausted; if the other side is too, stop.
                    if take_lo {
                        lo = -1;
                    } else {
                        hi = n;
                    }
                    continue;
                }
            }
            let p = self.coords[j];
            let d2 = (p.0 - query.0) * (p.0 - query.0) + (p.1 - query.1) * (p.1 - query.1);
            match best.worst() {
                Some((wd2, wi)) if (d2, j as u32) >= (wd2, wi) => {}
                _ => best.push(d2, j as u32),
            }
        }
        let mut out: Vec<u32> = best.items.iter().map(|&(_, i)| i).collect();
        out.sort_unstable();
        out
    }
}

/// Kriging-style predictive moments for a field at a new site, conditioning
/// on its m nearest observed sites.
pub fn predict_moments(
    obs_coords: &[(f64, f64)],
    obs_values: &[f64],
    neighbor_idx: &[u32],
    query: (f64, f64),
    phi: f64,
) -> Result<(f64, f64)> {
    if neighbor_idx.is_empty() {
        return Err(Error::validation(MODULE, "empty observed set for prediction"));
    }
    let ncoords: Vec<(f64, f64)> = neighbor_idx
        .iter()
        .map(|&u| obs_coords[u as usize])
        .collect();
    let (b, f) = conditional_coeffs(query, &ncoords, phi)?;
    let mean: f64 = b
        .iter()
        .zip(neighbor_idx.iter())
        .map(|(w, &u)| w * obs_values[u as usize])
        .sum();
    Ok((mean, f))
}

/// Draw factor values at new sites given observed factor fields, one value
/// per (factor, new site); independent across factors given the decay vector.
pub fn predict_factors<R: Rng>(
    obs_coords: &[(f64, f64)],
    obs_fields: &[Vec<f64>],
    phis: &[f64],
    new_coords: &[(f64, f64)],
    m: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if obs_coords.is_empty() {
        return Err(Error::validation(MODULE, "empty observed set for prediction"));
    }
    assert_eq!(obs_fields.len(), phis.len(), "one decay per factor");
    let index = SiteIndex::new(obs_coords);
    let mut out = vec![vec![0.0; new_coords.len()]; obs_fields.len()];
    for (c, &query) in new_coords.iter().enumerate() {
        let nbrs = index.m_nearest(query, m);
        for (r, field) in obs_fields.iter().enumerate() {
            let (mean, var) = predict_moments(obs_coords, field, &nbrs, query, phis[r])?;
            let z: f64 = rng.sample(StandardNormal);
            out[r][c] = mean + var.sqrt() * z;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn correlation_basics() {
        assert_abs_diff_eq!(exp_correlation(0.0, 0.3).unwrap(), 1.0);
        assert!(exp_correlation(1e6, 0.01).unwrap() < 1e-300);
        // Effective-range identity: at d = ln(20)/phi the correlation is 0.05.
        let phi = LN_20 / 500.0;
        assert_abs_diff_eq!(exp_correlation(500.0, phi).unwrap(), 0.05, epsilon = 1e-12);
        assert!(exp_correlation(1.0, 0.0).is_err());
        assert!(exp_correlation(1.0, -0.5).is_err());
    }

    #[test]
    fn correlation_monotone_in_distance_and_decay() {
        let mut last = 1.0;
        for k in 1..50 {
            let c = exp_correlation(k as f64 * 3.0, 0.02).unwrap();
            assert!(c < last);
            last = c;
        }
        let mut last = 1.0;
        for k in 1..50 {
            let c = exp_correlation(10.0, 0.001 * k as f64).unwrap();
            assert!(c < last);
            last = c;
        }
    }

    #[test]
    fn single_site_graph() {
        let g = build_neighbor_graph(&[(3.0, 4.0)], 5).unwrap();
        assert_eq!(g.n(), 1);
        assert!(g.neighbors(0).is_empty());
        let sys = factorize(&Arc::new(g), 0.1).unwrap();
        let (b, f) = sys.coeffs(0);
        assert!(b.is_empty());
        assert_eq!(f, 1.0);
        // Standard normal at zero.
        assert_abs_diff_eq!(
            sys.log_density(&[0.0]),
            -0.5 * (2.0 * std::f64::consts::PI).ln(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn collinear_sites_forced_neighbors() {
        let coords = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)];
        let g = build_neighbor_graph(&coords, 2).unwrap();
        assert_eq!(g.neighbors(0), &[] as &[u32]);
        assert_eq!(g.neighbors(1), &[0]);
        assert_eq!(g.neighbors(2), &[0, 1]);
        assert_eq!(g.neighbors(3), &[1, 2]);
    }

    #[test]
    fn graph_rejects_duplicates() {
        let coords = [(0.0, 0.0), (1.0, 1.0), (0.0, 0.0)];
        assert!(build_neighbor_graph(&coords, 2).is_err());
    }

    #[test]
    fn neighbor_sets_match_bruteforce() {
        let mut rng = crate::rng::chacha(42);
        let n = 200;
        let coords: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.gen::<f64>() * 100.0, rng.gen::<f64>() * 100.0))
            .collect();
        let m = 10;
        let g = build_neighbor_graph(&coords, m).unwrap();
        for i in 0..n {
            let mut cand: Vec<(f64, u32)> = (0..i)
                .map(|j| {
                    let d = dist(g.coords[i], g.coords[j]);
                    (d * d, j as u32)
                })
                .collect();
            cand.sort_by(|a, b| a.partial_cmp(b).unwrap());
            cand.truncate(m);
            let mut expect: Vec<u32> = cand.into_iter().map(|(_, j)| j).collect();
            expect.sort_unstable();
            assert_eq!(g.neighbors(i), expect.as_slice(), "site {i}");
            assert_eq!(g.neighbors(i).len(), m.min(i));
        }
    }

    #[test]
    fn huge_decay_gives_independence() {
        let mut rng = crate::rng::chacha(7);
        let coords: Vec<(f64, f64)> = (0..30)
            .map(|_| (rng.gen::<f64>() * 10.0, rng.gen::<f64>() * 10.0))
            .collect();
        let g = Arc::new(build_neighbor_graph(&coords, 5).unwrap());
        let sys = factorize(&g, 1e6).unwrap();
        for i in 0..30 {
            let (b, f) = sys.coeffs(i);
            assert!(b.iter().all(|&x| x.abs() < 1e-10));
            assert_abs_diff_eq!(f, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn f_vars_bounded_and_one_only_for_root() {
        let mut rng = crate::rng::chacha(17);
        let coords: Vec<(f64, f64)> = (0..80)
            .map(|_| (rng.gen::<f64>() * 50.0, rng.gen::<f64>() * 50.0))
            .collect();
        let g = Arc::new(build_neighbor_graph(&coords, 8).unwrap());
        let sys = factorize(&g, 0.05).unwrap();
        for i in 0..80 {
            let (_, f) = sys.coeffs(i);
            assert!(f > 0.0 && f <= 1.0);
            if i > 0 {
                assert!(f < 1.0, "site {i} has nonempty neighbors");
            }
        }
    }

    #[test]
    fn zero_field_log_density_is_normalizer_only() {
        let coords = [(0.0, 0.0), (1.0, 0.5), (2.0, 0.2), (3.5, 1.0)];
        let g = Arc::new(build_neighbor_graph(&coords, 2).unwrap());
        let sys = factorize(&g, 0.4).unwrap();
        let expect: f64 = (0..4)
            .map(|i| {
                let (_, f) = sys.coeffs(i);
                -0.5 * (2.0 * std::f64::consts::PI * f).ln()
            })
            .sum();
        assert_abs_diff_eq!(sys.log_density(&[0.0; 4]), expect, epsilon = 1e-13);
    }

    #[test]
    fn m_nearest_matches_bruteforce() {
        let mut rng = crate::rng::chacha(5);
        let coords: Vec<(f64, f64)> = (0..150)
            .map(|_| (rng.gen::<f64>() * 40.0, rng.gen::<f64>() * 40.0))
            .collect();
        let g = build_neighbor_graph(&coords, 1).unwrap();
        let index = SiteIndex::new(&g.coords);
        for _ in 0..50 {
            let q = (rng.gen::<f64>() * 40.0, rng.gen::<f64>() * 40.0);
            let got = index.m_nearest(q, 7);
            let mut cand: Vec<(f64, u32)> = g
                .coords
                .iter()
                .enumerate()
                .map(|(j, &p)| {
                    let d = dist(q, p);
                    (d * d, j as u32)
                })
                .collect();
            cand.sort_by(|a, b| a.partial_cmp(b).unwrap());
            cand.truncate(7);
            let mut expect: Vec<u32> = cand.into_iter().map(|(_, j)| j).collect();
            expect.sort_unstable();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn prediction_interpolates_at_coincident_site() {
        let mut rng = crate::rng::chacha(23);
        let coords: Vec<(f64, f64)> = (0..40)
            .map(|_| (rng.gen::<f64>() * 100.0, rng.gen::<f64>() * 100.0))
            .collect();
        let g = Arc::new(build_neighbor_graph(&coords, 10).unwrap());
        let phi = LN_20 / 200.0;
        let sys = factorize(&g, phi).unwrap();
        let w = sys.sample_prior(&mut rng);
        let index = SiteIndex::new(&g.coords);
        let target = 12usize;
        let query = (g.coords[target].0 + 1e-9, g.coords[target].1);
        let nbrs = index.m_nearest(query, 10);
        let (mean, var) = predict_moments(&g.coords, &w, &nbrs, query, phi).unwrap();
        assert!((mean - w[target]).abs() < 1e-6);
        assert!(var.sqrt() < 1e-3);
    }

    #[test]
    fn prediction_reverts_to_prior_far_away() {
        let coords: Vec<(f64, f64)> = (0..25).map(|i| (i as f64, 0.0)).collect();
        let g = Arc::new(build_neighbor_graph(&coords, 5).unwrap());
        let phi = 0.1;
        let sys = factorize(&g, phi).unwrap();
        let mut rng = crate::rng::chacha(2);
        let w = sys.sample_prior(&mut rng);
        let index = SiteIndex::new(&g.coords);
        let query = (1.0e4, 1.0e4); // far beyond 3/phi of everything
        let nbrs = index.m_nearest(query, 5);
        let (mean, var) = predict_moments(&g.coords, &w, &nbrs, query, phi).unwrap();
        assert!(mean.abs() < 1e-8);
        assert_abs_diff_eq!(var, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn kriging_variance_shrinks_as_site_approaches() {
        let coords: Vec<(f64, f64)> = vec![(0.0, 0.0), (4.0, 0.0), (8.0, 0.0)];
        let g = Arc::new(build_neighbor_graph(&coords, 3).unwrap());
        let phi = 0.2;
        let _ = factorize(&g, phi).unwrap();
        let index = SiteIndex::new(&g.coords);
        let w = vec![0.5, -0.2, 0.9];
        let mut last_var = 1.0;
        for &d in &[3.0, 1.5, 0.5, 0.05] {
            let q = (-d, 0.0); // approach site 0 from outside the transect
            let nbrs = index.m_nearest(q, 3);
            let (_, var) = predict_moments(&g.coords, &w, &nbrs, q, phi).unwrap();
            assert!(var <= 1.0);
            assert!(var < last_var);
            last_var = var;
        }
    }

    #[test]
    fn predict_factors_empty_observed_errors() {
        let mut rng = crate::rng::chacha(1);
        let res = predict_factors(&[], &[vec![]], &[0.1], &[(0.0, 0.0)], 5, &mut rng);
        assert!(res.is_err());
    }
}
