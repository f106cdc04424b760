//! Shared, implementation-independent oracles for the integration tests:
//! a fixed-step classical RK4 integrator, central finite differences, and
//! straight-line log-posterior summations coded directly from the model
//! definitions (no tape, no shared density helpers).
#![allow(dead_code)]

use epifit::models::BoardingSchoolData;

/// Classical fixed-step RK4; the final step of each span is shortened to
/// land exactly on the output time.
pub fn rk4_path<F>(rhs: F, y0: &[f64], t0: f64, ts: &[f64], h: f64) -> Vec<Vec<f64>>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let dim = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut out = Vec::with_capacity(ts.len());
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut stage = vec![0.0; dim];
    for &t_out in ts {
        while t < t_out - 1e-12 {
            let step = h.min(t_out - t);
            rhs(t, &y, &mut k1);
            for i in 0..dim {
                stage[i] = y[i] + 0.5 * step * k1[i];
            }
            rhs(t + 0.5 * step, &stage, &mut k2);
            for i in 0..dim {
                stage[i] = y[i] + 0.5 * step * k2[i];
            }
            rhs(t + 0.5 * step, &stage, &mut k3);
            for i in 0..dim {
                stage[i] = y[i] + step * k3[i];
            }
            rhs(t + step, &stage, &mut k4);
            for i in 0..dim {
                y[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            t += step;
        }
        out.push(y.clone());
    }
    out
}

/// SIR right-hand side in fraction space, coded independently of the crate.
pub fn sir_rhs(beta: f64, gamma: f64) -> impl Fn(f64, &[f64], &mut [f64]) {
    move |_t, y, dy| {
        let infection = beta * y[0] * y[1];
        let recovery = gamma * y[1];
        dy[0] = -infection;
        dy[1] = infection - recovery;
        dy[2] = recovery;
    }
}

/// Central finite differences with per-coordinate step h_scale*max(1, |x_i|).
pub fn central_diff<F>(f: F, x: &[f64], h_scale: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut grad = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = h_scale * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        grad.push((fp - fm) / (2.0 * h));
    }
    grad
}

/// Relative error with an absolute floor for near-zero values.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

pub fn boarding_school() -> BoardingSchoolData {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/boarding_school.csv");
    let text = std::fs::read_to_string(path).expect("bundled dataset present");
    let mut days = Vec::new();
    let mut cases = Vec::new();
    for line in text.lines().skip(1) {
        let mut parts = line.split(',');
        days.push(parts.next().unwrap().trim().parse().unwrap());
        cases.push(parts.next().unwrap().trim().parse().unwrap());
    }
    BoardingSchoolData::new(days, cases, 763).unwrap()
}

// ---------------------------------------------------------------------------
// Straight-line log-posterior oracles. Everything below is written from the
// model definitions with inline formulas only.
// ---------------------------------------------------------------------------

pub mod oracle {
    use statrs::function::gamma::ln_gamma;

    pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

    pub fn normal(x: f64, mu: f64, sd: f64) -> f64 {
        let z = (x - mu) / sd;
        -0.5 * z * z - sd.ln() - 0.5 * LN_2PI
    }

    pub fn lognormal(x: f64, mu: f64, sd: f64) -> f64 {
        let z = (x.ln() - mu) / sd;
        -x.ln() - 0.5 * z * z - sd.ln() - 0.5 * LN_2PI
    }

    pub fn gamma_sr(x: f64, shape: f64, rate: f64) -> f64 {
        shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
    }

    pub fn inv_gamma(x: f64, shape: f64, scale: f64) -> f64 {
        shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
    }

    pub fn beta_d(x: f64, a: f64, b: f64) -> f64 {
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
            + (a - 1.0) * x.ln()
            + (b - 1.0) * (1.0 - x).ln()
    }

    pub fn half_normal(x: f64, sd: f64) -> f64 {
        2.0f64.ln() + normal(x, 0.0, sd)
    }

    pub fn exponential(x: f64, rate: f64) -> f64 {
        rate.ln() - rate * x
    }

    pub fn poisson(y: f64, lambda: f64) -> f64 {
        y * lambda.ln() - lambda - ln_gamma(y + 1.0)
    }

    pub fn binomial(y: f64, n: f64, p: f64) -> f64 {
        let choose = if y == 0.0 || y == n {
            0.0
        } else {
            ln_gamma(n + 1.0) - ln_gamma(y + 1.0) - ln_gamma(n - y + 1.0)
        };
        let succ = if y > 0.0 { y * p.ln() } else { 0.0 };
        let fail = if n - y > 0.0 { (n - y) * (1.0 - p).ln() } else { 0.0 };
        choose + succ + fail
    }

    pub fn logistic(z: f64) -> f64 {
        1.0 / (1.0 + (-z).exp())
    }

    /// Log-Jacobian of the unit-interval logistic transform.
    pub fn unit_interval_jacobian(z: f64) -> f64 {
        let s = logistic(z);
        (s * (1.0 - s)).ln()
    }

    /// Straight-line sir_poisson log-posterior at unconstrained z, given the
    /// infected fractions `i_path` from an external solve.
    pub fn sir_poisson_lp(z: &[f64], cases: &[u64], n_pop: f64, i_path: &[f64]) -> f64 {
        let beta = z[0].exp();
        let gamma = z[1].exp();
        let s0 = logistic(z[2]);
        let mut lp = z[0] + z[1] + unit_interval_jacobian(z[2]);
        lp += lognormal(beta, 0.0, 1.0);
        lp += gamma_sr(gamma, 0.004, 0.02);
        lp += beta_d(s0, 0.5, 0.5);
        for (y, i_t) in cases.iter().zip(i_path) {
            lp += poisson(*y as f64, n_pop * i_t);
        }
        lp
    }

    /// Straight-line sir_binomial log-posterior (same priors, binomial
    /// observation).
    pub fn sir_binomial_lp(z: &[f64], cases: &[u64], n_pop: f64, i_path: &[f64]) -> f64 {
        let beta = z[0].exp();
        let gamma = z[1].exp();
        let s0 = logistic(z[2]);
        let mut lp = z[0] + z[1] + unit_interval_jacobian(z[2]);
        lp += lognormal(beta, 0.0, 1.0);
        lp += gamma_sr(gamma, 0.004, 0.02);
        lp += beta_d(s0, 0.5, 0.5);
        for (y, i_t) in cases.iter().zip(i_path) {
            lp += binomial(*y as f64, n_pop, *i_t);
        }
        lp
    }

    /// Straight-line sir_ou log-posterior. `z` is the full unconstrained
    /// vector (beta, gamma, s0, phi, sigma_sq, kappa...); `i_path` again
    /// comes from an external solve at the constrained (beta, gamma, s0).
    pub fn sir_ou_lp(z: &[f64], cases: &[u64], n_pop: f64, i_path: &[f64]) -> f64 {
        let beta = z[0].exp();
        let gamma = z[1].exp();
        let s0 = logistic(z[2]);
        let phi = z[3].exp();
        let sigma_sq = z[4].exp();
        let kappa = &z[5..];

        let mut lp = z[0] + z[1] + unit_interval_jacobian(z[2]) + z[3] + z[4];
        lp += lognormal(beta, 0.0, 1.0);
        lp += gamma_sr(gamma, 0.004, 0.02);
        lp += beta_d(s0, 0.5, 0.5);
        lp += half_normal(phi, 10.0);
        lp += inv_gamma(sigma_sq, 0.1, 0.1);

        let mu: Vec<f64> = i_path.iter().map(|i| (n_pop * i).ln()).collect();
        let stat_var = sigma_sq / (2.0 * phi);
        lp += normal(kappa[0], mu[0], stat_var.sqrt());
        let decay = (-phi).exp();
        let trans_var = sigma_sq / (2.0 * phi) * (1.0 - (-2.0 * phi).exp());
        for t in 0..kappa.len() - 1 {
            let mean = mu[t] + (kappa[t] - mu[t]) * decay;
            lp += normal(kappa[t + 1], mean, trans_var.sqrt());
        }
        for (y, k) in cases.iter().zip(kappa) {
            lp += poisson(*y as f64, k.exp());
        }
        lp
    }
}
