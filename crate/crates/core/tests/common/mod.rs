//! Test-side oracles, independent of the library's linear algebra and NNGP
//! code paths: textbook dense Cholesky, dense Gaussian log densities, and
//! dense conditional (kriging) moments under the exponential kernel.
#![allow(dead_code)] // not every test binary uses every oracle

pub fn exp_cov_matrix(coords: &[(f64, f64)], phi: f64) -> Vec<Vec<f64>> {
    let n = coords.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let dx = coords[i].0 - coords[j].0;
            let dy = coords[i].1 - coords[j].1;
            c[i][j] = (-phi * (dx * dx + dy * dy).sqrt()).exp();
        }
    }
    c
}

/// Plain textbook Cholesky; returns the lower factor.
pub fn dense_chol(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                assert!(s > 0.0, "oracle matrix not SPD at {i}");
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    l
}

fn forward(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    y
}

fn backward(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let l = dense_chol(a);
    backward(&l, &forward(&l, b))
}

/// Zero-mean multivariate normal log density with covariance `cov`.
pub fn dense_mvn_logpdf(cov: &[Vec<f64>], x: &[f64]) -> f64 {
    let n = cov.len();
    let l = dense_chol(cov);
    let y = forward(&l, x);
    let quad: f64 = y.iter().map(|v| v * v).sum();
    let logdet: f64 = (0..n).map(|i| l[i][i].ln()).sum::<f64>() * 2.0;
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad)
}

/// Dense conditional (kriging) mean and variance of a unit-variance field at
/// `query`, given observed values at `coords`.
pub fn dense_kriging(
    coords: &[(f64, f64)],
    values: &[f64],
    query: (f64, f64),
    phi: f64,
) -> (f64, f64) {
    let cov = exp_cov_matrix(coords, phi);
    let c0: Vec<f64> = coords
        .iter()
        .map(|&(x, y)| {
            let dx = x - query.0;
            let dy = y - query.1;
            (-phi * (dx * dx + dy * dy).sqrt()).exp()
        })
        .collect();
    let w = dense_solve(&cov, &c0);
    let mean: f64 = w.iter().zip(values.iter()).map(|(a, b)| a * b).sum();
    let var = 1.0 - w.iter().zip(c0.iter()).map(|(a, b)| a * b).sum::<f64>();
    (mean, var)
}
