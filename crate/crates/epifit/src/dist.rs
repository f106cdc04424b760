//! Log-density and log-mass functions, generic over [`Real`].
//!
//! All densities keep their full normalizing constants so that independently
//! coded summation oracles can match the model log-posteriors exactly.

use crate::autodiff::Real;
use crate::special::{lgamma, ln_choose};

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Normal with parameters that may themselves be taped (mean, sd).
pub fn normal_lpdf<R: Real>(x: R, mu: R, sd: R) -> R {
    let z = (x - mu) / sd;
    -(z.square() * 0.5) - sd.ln() - 0.5 * LN_2PI
}

/// Normal with fixed mean and standard deviation.
pub fn normal_lpdf_fixed<R: Real>(x: R, mu: f64, sd: f64) -> R {
    let z = (x - mu) / sd;
    -(z.square() * 0.5) - (sd.ln() + 0.5 * LN_2PI)
}

/// Half-normal on x >= 0 with scale `sd`.
pub fn half_normal_lpdf<R: Real>(x: R, sd: f64) -> R {
    normal_lpdf_fixed(x, 0.0, sd) + std::f64::consts::LN_2
}

pub fn lognormal_lpdf<R: Real>(x: R, mu: f64, sd: f64) -> R {
    let lx = x.ln();
    let z = (lx - mu) / sd;
    -lx - (z.square() * 0.5) - (sd.ln() + 0.5 * LN_2PI)
}

/// Gamma in the shape-rate parameterization.
pub fn gamma_lpdf<R: Real>(x: R, shape: f64, rate: f64) -> R {
    let norm = shape * rate.ln() - lgamma(shape);
    x.ln() * (shape - 1.0) - x * rate + norm
}

/// Inverse-gamma in the shape-scale parameterization.
pub fn inv_gamma_lpdf<R: Real>(x: R, shape: f64, scale: f64) -> R {
    let norm = shape * scale.ln() - lgamma(shape);
    -(x.ln() * (shape + 1.0)) - x.recip() * scale + norm
}

pub fn beta_lpdf<R: Real>(x: R, a: f64, b: f64) -> R {
    let norm = lgamma(a + b) - lgamma(a) - lgamma(b);
    x.ln() * (a - 1.0) + (R::constant(1.0) - x).ln() * (b - 1.0) + norm
}

pub fn exponential_lpdf<R: Real>(x: R, rate: f64) -> R {
    -(x * rate) + rate.ln()
}

/// Poisson log-mass for observed count `y` (data) with taped rate.
pub fn poisson_lpmf<R: Real>(y: f64, lambda: R) -> R {
    lambda.ln() * y - lambda - lgamma(y + 1.0)
}

/// Poisson log-mass parameterized by the log rate, avoiding ln(exp(.)).
pub fn poisson_log_lpmf<R: Real>(y: f64, log_lambda: R) -> R {
    log_lambda * y - log_lambda.exp() - lgamma(y + 1.0)
}

/// Binomial log-mass; zero-count edge cases drop their vanishing terms so a
/// probability of exactly 0 or 1 contributes log 1 = 0 when consistent.
pub fn binomial_lpmf<R: Real>(y: f64, n: f64, p: R) -> R {
    let mut lp = R::constant(ln_choose(n, y));
    if y > 0.0 {
        lp = lp + p.ln() * y;
    }
    if n - y > 0.0 {
        lp = lp + (R::constant(1.0) - p).ln() * (n - y);
    }
    lp
}

/// Multinomial log-mass over category counts `ys` with probabilities `ps`.
pub fn multinomial_lpmf<R: Real>(ys: &[f64], ps: &[R]) -> R {
    assert_eq!(ys.len(), ps.len());
    let n: f64 = ys.iter().sum();
    let mut lp = R::constant(lgamma(n + 1.0) - ys.iter().map(|y| lgamma(y + 1.0)).sum::<f64>());
    for (y, p) in ys.iter().zip(ps) {
        if *y > 0.0 {
            lp = lp + p.ln() * *y;
        }
    }
    lp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_standard_at_zero() {
        let lp: f64 = normal_lpdf_fixed(0.0, 0.0, 1.0);
        assert!((lp + 0.5 * LN_2PI).abs() < 1e-15);
    }

    #[test]
    fn poisson_at_zero_count() {
        // kappa = 1, y = 0 -> contribution -1
        let lp: f64 = poisson_lpmf(0.0, 1.0);
        assert!((lp + 1.0).abs() < 1e-15);
    }

    #[test]
    fn binomial_half() {
        let lp: f64 = binomial_lpmf(1.0, 2.0, 0.5);
        assert!((lp - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn binomial_empty_is_certain() {
        let lp: f64 = binomial_lpmf(0.0, 5.0, 0.0);
        assert_eq!(lp, 0.0);
    }

    #[test]
    fn gamma_matches_exponential() {
        // Gamma(1, rate) is Exponential(rate).
        for &x in &[0.1, 1.0, 3.7] {
            let a: f64 = gamma_lpdf(x, 1.0, 2.5);
            let b: f64 = exponential_lpdf(x, 2.5);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn multinomial_uniform() {
        let lp: f64 = multinomial_lpmf(&[1.0, 1.0], &[0.5, 0.5]);
        // 2!/(1!1!) * 0.25 = 0.5
        assert!((lp - 0.5f64.ln()).abs() < 1e-12);
    }
}
