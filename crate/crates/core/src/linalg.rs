//! Small dense linear algebra for conditional updates.
//!
//! Every dense system in the sampler is tiny (neighbor sets of size m <= ~25,
//! coefficient blocks of size p <= ~10), so explicit-loop Cholesky routines on
//! a row-major buffer are all that is needed.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Error;
use crate::Result;

/// Row-major dense matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "shape mismatch");
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// In-place Cholesky factorization A = L L^T of a symmetric positive-definite
/// matrix; the lower triangle of `a` is overwritten with L (upper left as-is).
pub fn cholesky_in_place(a: &mut Mat) -> Result<()> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "cholesky needs a square matrix");
    for j in 0..n {
        let mut d = a.at(j, j);
        for k in 0..j {
            d -= a.at(j, k) * a.at(j, k);
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::numerical(
                "linalg",
                format!("matrix not positive definite at pivot {j} (d = {d})"),
            ));
        }
        let l_jj = d.sqrt();
        *a.at_mut(j, j) = l_jj;
        for i in (j + 1)..n {
            let mut s = a.at(i, j);
            for k in 0..j {
                s -= a.at(i, k) * a.at(j, k);
            }
            *a.at_mut(i, j) = s / l_jj;
        }
    }
    Ok(())
}

/// Solve L y = b in place (forward substitution on the lower factor).
pub fn forward_solve(l: &Mat, b: &mut [f64]) {
    let n = l.rows();
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l.at(i, k) * b[k];
        }
        b[i] = s / l.at(i, i);
    }
}

/// Solve L^T x = y in place (backward substitution on the lower factor).
pub fn backward_solve(l: &Mat, b: &mut [f64]) {
    let n = l.rows();
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l.at(k, i) * b[k];
        }
        b[i] = s / l.at(i, i);
    }
}

/// Solve (L L^T) x = b in place given the lower Cholesky factor.
pub fn chol_solve(l: &Mat, b: &mut [f64]) {
    forward_solve(l, b);
    backward_solve(l, b);
}

/// log det(A) = 2 sum_i log L_ii for A = L L^T.
pub fn chol_logdet(l: &Mat) -> f64 {
    (0..l.rows()).map(|i| l.at(i, i).ln()).sum::<f64>() * 2.0
}

/// Draw from N(P^{-1} h, P^{-1}) given precision P and linear term h.
///
/// `prec` is consumed (factored in place). Standard conjugate-update shape:
/// mean solves P m = h, noise solves L^T u = z with z standard normal.
pub fn draw_mvn_from_precision<R: Rng>(
    prec: &mut Mat,
    lin: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = prec.rows();
    cholesky_in_place(prec)?;
    let mut mean = lin.to_vec();
    chol_solve(prec, &mut mean);
    let mut noise: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    backward_solve(prec, &mut noise);
    for i in 0..n {
        mean[i] += noise[i];
    }
    Ok(mean)
}

/// Neumaier compensated summation.
pub fn ksum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    ksum(values.iter().copied()) / values.len() as f64
}

/// Unbiased sample variance (n - 1 denominator); 0.0 for fewer than two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    ksum(values.iter().map(|v| (v - m) * (v - m))) / (n - 1) as f64
}

/// Type-7 quantile (linear interpolation of order statistics) on sorted data.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&p), "p out of [0,1]");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Sort a copy and take the type-7 quantile.
pub fn quantile_of(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in quantile input"));
    quantile_type7(&v, p)
}
