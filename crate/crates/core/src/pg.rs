//! Exact Pólya-Gamma sampling via Devroye's alternating-series method.
//!
//! PG(b, c) for integer b is drawn as a sum of b independent PG(1, c) draws;
//! each PG(1, c) draw is J*(1, c/2)/4 where J* is the tilted Jacobi variable
//! sampled by a mixture proposal (truncated inverse-Gaussian body, exponential
//! tail) with the series accept/reject step. No approximation beyond floating
//! point: moments are exact in distribution.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::stats::norm_cdf;

const TRUNC: f64 = 0.64;
const PI: f64 = std::f64::consts::PI;

/// Alternating-series coefficients a_n(x) for the Jacobi density, piecewise
/// around the truncation point.
#[inline]
fn a_coef(n: i32, x: f64) -> f64 {
    let nf = n as f64 + 0.5;
    if x > TRUNC {
        PI * nf * (-nf * nf * PI * PI * x / 2.0).exp()
    } else {
        PI * nf * (2.0 / (PI * x)).powf(1.5) * (-2.0 * nf * nf / x).exp()
    }
}

/// Probability mass assigned to the exponential tail of the proposal.
fn mass_texpon(z: f64) -> f64 {
    let t = TRUNC;
    let fz = PI * PI / 8.0 + z * z / 2.0;
    let b = (1.0 / t).sqrt() * (t * z - 1.0);
    let a = -(1.0 / t).sqrt() * (t * z + 1.0);
    let x0 = fz.ln() + fz * t;
    let xb = x0 - z + norm_cdf(b).ln();
    let xa = x0 + z + norm_cdf(a).ln();
    let qdivp = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + qdivp)
}

/// Inverse-Gaussian(mean 1/z, shape 1) truncated to (0, TRUNC).
fn rtigauss<R: Rng>(z: f64, rng: &mut R) -> f64 {
    let z = z.abs();
    let t = TRUNC;
    if z < 1.0 / t {
        // Mean exceeds the truncation point: sample the one-sided stable
        // body on (0, t) and thin by the Gaussian tilt.
        loop {
            let mut e1: f64;
            let mut e2: f64;
            loop {
                e1 = Exp1.sample(rng);
                e2 = Exp1.sample(rng);
                if e1 * e1 <= 2.0 * e2 / t {
                    break;
                }
            }
            let x = t / ((1.0 + t * e1) * (1.0 + t * e1));
            let alpha = (-0.5 * z * z * x).exp();
            if rng.gen::<f64>() <= alpha {
                return x;
            }
        }
    } else {
        // Plain inverse-Gaussian rejection until the draw lands in (0, t).
        let mu = 1.0 / z;
        loop {
            let y: f64 = rng.sample::<f64, _>(StandardNormal);
            let y = y * y;
            let mu_y = mu * y;
            let mut x = mu + 0.5 * mu * mu_y - 0.5 * mu * (4.0 * mu_y + mu_y * mu_y).sqrt();
            if rng.gen::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x <= t {
                return x;
            }
        }
    }
}

/// One J*(1, z) draw by Devroye's method.
fn draw_jacobi<R: Rng>(z: f64, rng: &mut R) -> f64 {
    let z = z.abs();
    let fz = PI * PI / 8.0 + z * z / 2.0;
    let p_tail = mass_texpon(z);
    loop {
        let x = if rng.gen::<f64>() < p_tail {
            let e: f64 = Exp1.sample(rng);
            TRUNC + e / fz
        } else {
            rtigauss(z, rng)
        };
        let mut s = a_coef(0, x);
        let y = rng.gen::<f64>() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= a_coef(n, x);
                if y <= s {
                    return x;
                }
            } else {
                s += a_coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// Draw from PG(b, c) for integer shape b >= 1.
pub fn sample_polya_gamma<R: Rng>(b: u32, c: f64, rng: &mut R) -> f64 {
    assert!(b >= 1, "Polya-Gamma shape must be >= 1");
    let half = c.abs() / 2.0;
    let mut total = 0.0;
    for _ in 0..b {
        total += 0.25 * draw_jacobi(half, rng);
    }
    total
}

/// E[PG(b, c)] = b tanh(c/2) / (2c), continuously b/4 at c = 0.
pub fn pg_mean(b: f64, c: f64) -> f64 {
    if c.abs() < 1e-8 {
        b / 4.0
    } else {
        b * (c / 2.0).tanh() / (2.0 * c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::chacha;

    fn pg_var(b: f64, c: f64) -> f64 {
        if c.abs() < 1e-8 {
            b / 24.0
        } else {
            b / (4.0 * c * c * c) * (c.sinh() - c) / (c / 2.0).cosh().powi(2)
        }
    }

    #[test]
    fn moments_at_zero_tilt() {
        let mut rng = chacha(100);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_polya_gamma(1, 0.0, &mut rng)).collect();
        assert!(draws.iter().all(|&x| x > 0.0));
        let m = crate::linalg::mean(&draws);
        let mcse = (pg_var(1.0, 0.0) / n as f64).sqrt();
        assert!((m - 0.25).abs() < 3.0 * mcse, "mean {m}, mcse {mcse}");
        let v = crate::linalg::sample_variance(&draws);
        assert!((v - 1.0 / 24.0).abs() / (1.0 / 24.0) < 0.05, "var {v}");
    }

    #[test]
    fn moments_with_tilt() {
        let mut rng = chacha(101);
        let n = 100_000;
        let c = 2.0;
        let draws: Vec<f64> = (0..n).map(|_| sample_polya_gamma(1, c, &mut rng)).collect();
        let m = crate::linalg::mean(&draws);
        let expect = 1.0f64.tanh() / 4.0;
        let mcse = (pg_var(1.0, c) / n as f64).sqrt();
        assert!((m - expect).abs() < 3.0 * mcse, "mean {m} vs {expect}, mcse {mcse}");
        // Tilt sign is irrelevant.
        let mut rng = chacha(102);
        let draws_neg: Vec<f64> =
            (0..n).map(|_| sample_polya_gamma(1, -c, &mut rng)).collect();
        let m_neg = crate::linalg::mean(&draws_neg);
        assert!((m_neg - expect).abs() < 3.0 * mcse);
    }

    #[test]
    fn integer_shape_adds() {
        let mut rng = chacha(103);
        let n = 60_000;
        let (b, c) = (3u32, 1.5);
        let draws: Vec<f64> =
            (0..n).map(|_| sample_polya_gamma(b, c, &mut rng)).collect();
        let m = crate::linalg::mean(&draws);
        let expect = pg_mean(3.0, c);
        let mcse = (pg_var(3.0, c) / n as f64).sqrt();
        assert!((m - expect).abs() < 3.0 * mcse, "mean {m} vs {expect}");
        let v = crate::linalg::sample_variance(&draws);
        assert!((v - pg_var(3.0, c)).abs() / pg_var(3.0, c) < 0.05);
    }
}
