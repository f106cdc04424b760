//! Diagonal mass matrix (metric) and the Welford accumulator used to adapt
//! it from warmup draws.

use rand::Rng;
use rand_distr::StandardNormal;

/// Diagonal metric storing the inverse mass-matrix entries, which under
/// adaptation approach the marginal posterior variances.
#[derive(Clone, Debug)]
pub struct MassMatrix {
    inv_diag: Vec<f64>,
}

impl MassMatrix {
    pub fn identity(dim: usize) -> Self {
        MassMatrix {
            inv_diag: vec![1.0; dim],
        }
    }

    /// Entries must be strictly positive and finite.
    pub fn diagonal(inv_diag: Vec<f64>) -> Self {
        assert!(
            inv_diag.iter().all(|v| *v > 0.0 && v.is_finite()),
            "metric entries must be positive and finite"
        );
        MassMatrix { inv_diag }
    }

    pub fn dim(&self) -> usize {
        self.inv_diag.len()
    }

    pub fn inv_diag(&self) -> &[f64] {
        &self.inv_diag
    }

    /// Momentum draw p ~ N(0, M): componentwise z / sqrt(M^-1).
    pub fn sample_momentum<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.inv_diag
            .iter()
            .map(|v| {
                let z: f64 = rng.sample(StandardNormal);
                z / v.sqrt()
            })
            .collect()
    }

    /// Kinetic energy p' M^-1 p / 2.
    pub fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p
            .iter()
            .zip(&self.inv_diag)
            .map(|(pi, v)| pi * pi * v)
            .sum::<f64>()
    }

    /// M^-1 p, the velocity used by the position update and the U-turn test.
    pub fn inv_mul(&self, p: &[f64], out: &mut [f64]) {
        for ((o, pi), v) in out.iter_mut().zip(p).zip(&self.inv_diag) {
            *o = pi * v;
        }
    }
}

/// Streaming mean/variance of unconstrained draws over an adaptation window.
#[derive(Clone, Debug)]
pub struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    pub fn new(dim: usize) -> Self {
        Welford {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn reset(&mut self) {
        self.n = 0;
        self.mean.fill(0.0);
        self.m2.fill(0.0);
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for i in 0..x.len() {
            let delta = x[i] - self.mean[i];
            self.mean[i] += delta / n;
            self.m2[i] += delta * (x[i] - self.mean[i]);
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// Sample variances shrunk toward the identity with weight 5/(n+5).
    pub fn regularized_variance(&self) -> Vec<f64> {
        let n = self.n as f64;
        let shrink = 5.0 / (n + 5.0);
        self.m2
            .iter()
            .map(|m2| {
                let var = if self.n > 1 { m2 / (n - 1.0) } else { 1.0 };
                ((1.0 - shrink) * var + shrink).max(1e-10)
            })
            .collect()
    }
}
