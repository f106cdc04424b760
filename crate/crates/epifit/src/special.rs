//! Special functions needed by the log-densities and their derivatives.
//!
//! Values come from `statrs`; trigamma (the tape partial of digamma) is not
//! available there, so it is computed here by the standard recurrence plus
//! asymptotic series.

pub fn lgamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

pub fn digamma(x: f64) -> f64 {
    statrs::function::gamma::digamma(x)
}

/// First derivative of digamma. Recurrence to x >= 8, then the Bernoulli
/// asymptotic expansion; negative arguments via the reflection formula.
pub fn trigamma(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 {
        if x == x.floor() {
            return f64::INFINITY;
        }
        let s = (std::f64::consts::PI * x).sin();
        return std::f64::consts::PI * std::f64::consts::PI / (s * s) - trigamma(1.0 - x);
    }
    let mut acc = 0.0;
    let mut x = x;
    while x < 8.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let bernoulli = -1.0 / 30.0
        + inv2 * (1.0 / 42.0 + inv2 * (-1.0 / 30.0 + inv2 * (5.0 / 66.0 + inv2 * (-691.0 / 2730.0))));
    let tail = 1.0 + inv * (0.5 + inv * (1.0 / 6.0 + inv2 * bernoulli));
    acc + inv * tail
}

/// log of the binomial coefficient C(n, k) for real-valued counts.
/// Exact zero at the edges so that certain events contribute log 1 = 0.
pub fn ln_choose(n: f64, k: f64) -> f64 {
    if k == 0.0 || k == n {
        return 0.0;
    }
    lgamma(n + 1.0) - lgamma(k + 1.0) - lgamma(n - k + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lgamma_known_values() {
        assert!(lgamma(1.0).abs() < 1e-14);
        assert!(lgamma(2.0).abs() < 1e-14);
        assert!((lgamma(5.0) - 24.0f64.ln()).abs() < 1e-12);
        assert!((lgamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-12);
    }

    #[test]
    fn trigamma_known_values() {
        // trigamma(1) = pi^2/6
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((trigamma(1.0) - pi2_6).abs() < 1e-12);
        // trigamma(0.5) = pi^2/2
        assert!((trigamma(0.5) - 3.0 * pi2_6).abs() < 1e-11);
        // recurrence check: trigamma(x+1) = trigamma(x) - 1/x^2
        for &x in &[0.3, 1.7, 4.2, 11.0] {
            assert!((trigamma(x + 1.0) - (trigamma(x) - 1.0 / (x * x))).abs() < 1e-11);
        }
    }

    #[test]
    fn trigamma_matches_digamma_slope() {
        for &x in &[0.7f64, 1.0, 2.5, 9.0, 30.0] {
            let h = 1e-6 * x.max(1.0);
            let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert!(
                (trigamma(x) - fd).abs() / fd.abs() < 1e-6,
                "x={x}: {} vs {}",
                trigamma(x),
                fd
            );
        }
    }

    #[test]
    fn ln_choose_small_cases() {
        assert!((ln_choose(2.0, 1.0) - 2.0f64.ln()).abs() < 1e-12);
        assert!((ln_choose(10.0, 3.0) - 120.0f64.ln()).abs() < 1e-12);
    }
}
