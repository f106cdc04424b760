//! Stochastic single-strain model: the daily log-intensity follows an
//! Ornstein-Uhlenbeck process reverting to the log of the deterministic SIR
//! solution, observed through a Poisson count each day.

use super::sir::{SirBase, SirPriors};
use super::{BoardingSchoolData, ModelDef, ModelError, PriorParams};
use crate::autodiff::Real;
use crate::dist::{half_normal_lpdf, inv_gamma_lpdf, normal_lpdf, poisson_log_lpmf};
use crate::ode::SolverConfig;
use crate::transforms::{Constraint, ParameterLayout};

/// Log-density of the OU transition from day t to day t+1:
/// kappa_next | kappa ~ N(mu_t + (kappa - mu_t) e^{-phi},
///                        sigma^2 (1 - e^{-2 phi}) / (2 phi)).
pub fn ou_transition_lpdf<R: Real>(kappa_next: R, kappa: R, mu_t: R, phi: R, sigma_sq: R) -> R {
    let decay = (-phi).exp();
    let mean = mu_t + (kappa - mu_t) * decay;
    let var = sigma_sq / (phi * 2.0) * (R::constant(1.0) - (phi * (-2.0)).exp());
    normal_lpdf(kappa_next, mean, var.sqrt())
}

/// Extra priors on top of [`SirPriors`]: phi ~ HalfNormal(0, variance),
/// sigma^2 ~ InvGamma(shape, scale).
#[derive(Clone, Copy, Debug)]
pub struct SirOuPriors {
    pub sir: SirPriors,
    pub phi: PriorParams,
    pub sigma_sq: PriorParams,
}

impl Default for SirOuPriors {
    fn default() -> Self {
        SirOuPriors {
            sir: SirPriors::default(),
            phi: PriorParams(0.0, 100.0),
            sigma_sq: PriorParams(0.1, 0.1),
        }
    }
}

pub struct SirOuModel {
    base: SirBase,
    phi_prior: PriorParams,
    sigma_sq_prior: PriorParams,
    layout: ParameterLayout,
}

impl SirOuModel {
    pub fn new(data: BoardingSchoolData) -> Result<Self, ModelError> {
        let mut layout = ParameterLayout::new();
        layout.push("beta", Constraint::LowerBound(0.0));
        layout.push("gamma", Constraint::LowerBound(0.0));
        layout.push("s0", Constraint::Interval(0.0, 1.0));
        layout.push("phi", Constraint::LowerBound(0.0));
        layout.push("sigma_sq", Constraint::LowerBound(0.0));
        for d in data.days() {
            layout.push(format!("kappa[{d}]"), Constraint::Free);
        }
        let defaults = SirOuPriors::default();
        let base = SirBase {
            data,
            layout: layout.clone(),
            priors: defaults.sir,
            solver: SolverConfig::default(),
        };
        Ok(SirOuModel {
            base,
            phi_prior: defaults.phi,
            sigma_sq_prior: defaults.sigma_sq,
            layout,
        })
    }

    pub fn set_prior(&mut self, name: &str, values: &[f64]) -> Result<(), ModelError> {
        match name {
            "phi" => self.phi_prior.set(name, values),
            "sigma_sq" => self.sigma_sq_prior.set(name, values),
            _ => self.base.priors.set(name, values),
        }
    }

    pub fn set_solver(&mut self, solver: SolverConfig) {
        self.base.solver = solver;
    }

    pub fn data(&self) -> &BoardingSchoolData {
        &self.base.data
    }

    /// mu_t = log(N i(t)) at each observation day, from the deterministic
    /// solve; None when the solve fails or the mean path is non-positive.
    fn log_mean_path<R: Real>(&self, beta: R, gamma: R, s0: R) -> Option<Vec<R>> {
        let n_pop = self.base.data.population() as f64;
        let path = self.base.infected_path(beta, gamma, s0)?;
        let mut mu = Vec::with_capacity(path.len());
        for i_t in path {
            if !(i_t.value() > 0.0) {
                return None;
            }
            mu.push((i_t * n_pop).ln());
        }
        Some(mu)
    }
}

impl ModelDef for SirOuModel {
    fn name(&self) -> &'static str {
        "sir_ou"
    }

    fn layout(&self) -> &ParameterLayout {
        &self.layout
    }

    fn logp<R: Real>(&self, z: &[R]) -> R {
        let (x, log_jac) = self.layout.constrain_vector(z);
        let (beta, gamma, s0, phi, sigma_sq) = (x[0], x[1], x[2], x[3], x[4]);
        let kappa = &x[5..];

        let mut lp = log_jac + self.base.prior_logp(beta, gamma, s0);
        lp = lp + half_normal_lpdf(phi, self.phi_prior.1.sqrt());
        lp = lp + inv_gamma_lpdf(sigma_sq, self.sigma_sq_prior.0, self.sigma_sq_prior.1);

        let mu = match self.log_mean_path(beta, gamma, s0) {
            Some(mu) => mu,
            None => return R::constant(f64::NEG_INFINITY),
        };

        // Stationary initial state, then the closed-form OU transitions.
        let stat_sd = (sigma_sq / (phi * 2.0)).sqrt();
        lp = lp + normal_lpdf(kappa[0], mu[0], stat_sd);
        for t in 0..kappa.len() - 1 {
            lp = lp + ou_transition_lpdf(kappa[t + 1], kappa[t], mu[t], phi, sigma_sq);
        }

        for (y, k) in self.base.data.cases().iter().zip(kappa) {
            lp = lp + poisson_log_lpmf(*y as f64, *k);
        }
        lp
    }

    fn generated_names(&self) -> Vec<String> {
        let mut names = vec!["R_0".to_string()];
        names.extend(self.base.data.days().iter().map(|d| format!("lambda[{d}]")));
        names
    }

    /// R_0 plus the latent intensity lambda_t = exp(kappa_t).
    fn generated(&self, constrained: &[f64]) -> Vec<f64> {
        let mut out = vec![constrained[0] / constrained[1]];
        out.extend(constrained[5..].iter().map(|k| k.exp()));
        out
    }

    fn fitted_prefix(&self) -> &'static str {
        "lambda["
    }
}
