//! Single-strain deterministic SIR models for the boarding-school outbreak:
//! Poisson and binomial observation variants sharing the same dynamics and
//! priors.

use super::{BoardingSchoolData, ModelDef, ModelError, PriorParams};
use crate::autodiff::Real;
use crate::dist::{beta_lpdf, binomial_lpmf, gamma_lpdf, lognormal_lpdf, poisson_lpmf};
use crate::ode::{integrate_rk45, OdeSystem, SolverConfig};
use crate::transforms::{Constraint, ParameterLayout};

/// SIR dynamics in fraction space: states (s, i, r) summing to one.
pub(crate) struct SirSystem;

impl OdeSystem for SirSystem {
    fn dim(&self) -> usize {
        3
    }
    fn rhs<R: Real>(&self, _t: f64, y: &[R], theta: &[R], dydt: &mut [R]) {
        let infection = theta[0] * y[0] * y[1];
        let recovery = theta[1] * y[1];
        dydt[0] = -infection;
        dydt[1] = infection - recovery;
        dydt[2] = recovery;
    }
}

/// Priors for (beta, gamma, s0): log-normal (mu, sd), gamma (shape, rate),
/// beta (a, b).
#[derive(Clone, Copy, Debug)]
pub struct SirPriors {
    pub beta: PriorParams,
    pub gamma: PriorParams,
    pub s0: PriorParams,
}

impl Default for SirPriors {
    fn default() -> Self {
        SirPriors {
            beta: PriorParams(0.0, 1.0),
            gamma: PriorParams(0.004, 0.02),
            s0: PriorParams(0.5, 0.5),
        }
    }
}

impl SirPriors {
    pub fn set(&mut self, name: &str, values: &[f64]) -> Result<(), ModelError> {
        match name {
            "beta" => self.beta.set(name, values),
            "gamma" => self.gamma.set(name, values),
            "s0" => self.s0.set(name, values),
            _ => Err(ModelError::UnknownPrior(name.to_string())),
        }
    }
}

fn sir_layout() -> ParameterLayout {
    let mut layout = ParameterLayout::new();
    layout.push("beta", Constraint::LowerBound(0.0));
    layout.push("gamma", Constraint::LowerBound(0.0));
    layout.push("s0", Constraint::Interval(0.0, 1.0));
    layout
}

/// Shared implementation of the two observation variants.
pub(crate) struct SirBase {
    pub data: BoardingSchoolData,
    pub layout: ParameterLayout,
    pub priors: SirPriors,
    pub solver: SolverConfig,
}

impl SirBase {
    fn new(data: BoardingSchoolData) -> Self {
        SirBase {
            data,
            layout: sir_layout(),
            priors: SirPriors::default(),
            solver: SolverConfig::default(),
        }
    }

    /// Infected fractions i(t) at the observation times, or None when the
    /// solve fails (treated as a rejected point by the caller).
    pub(crate) fn infected_path<R: Real>(&self, beta: R, gamma: R, s0: R) -> Option<Vec<R>> {
        let y0 = [s0, R::constant(1.0) - s0, R::constant(0.0)];
        let theta = [beta, gamma];
        let ts = self.data.times();
        match integrate_rk45(&SirSystem, &y0, 0.0, &ts, &theta, &self.solver) {
            Ok(sol) => Some(sol.states.into_iter().map(|mut s| s.swap_remove(1)).collect()),
            Err(_) => None,
        }
    }

    pub(crate) fn prior_logp<R: Real>(&self, beta: R, gamma: R, s0: R) -> R {
        lognormal_lpdf(beta, self.priors.beta.0, self.priors.beta.1)
            + gamma_lpdf(gamma, self.priors.gamma.0, self.priors.gamma.1)
            + beta_lpdf(s0, self.priors.s0.0, self.priors.s0.1)
    }

    pub(crate) fn generated_names(&self) -> Vec<String> {
        let mut names = vec!["R_0".to_string()];
        names.extend(self.data.days().iter().map(|d| format!("lambda[{d}]")));
        names
    }

    /// R_0 plus the fitted mean trajectory N * i(t).
    pub(crate) fn generated(&self, x: &[f64]) -> Vec<f64> {
        let n_pop = self.data.population() as f64;
        let mut out = vec![x[0] / x[1]];
        match self.infected_path::<f64>(x[0], x[1], x[2]) {
            Some(path) => out.extend(path.into_iter().map(|i| n_pop * i)),
            None => out.extend(std::iter::repeat(f64::NAN).take(self.data.days().len())),
        }
        out
    }
}

/// Y_t ~ Poisson(N * i(t)) with priors beta ~ LogNormal, gamma ~ Gamma,
/// s(0) ~ Beta.
pub struct SirPoissonModel {
    base: SirBase,
}

impl SirPoissonModel {
    pub fn new(data: BoardingSchoolData) -> Result<Self, ModelError> {
        Ok(SirPoissonModel {
            base: SirBase::new(data),
        })
    }

    pub fn set_prior(&mut self, name: &str, values: &[f64]) -> Result<(), ModelError> {
        self.base.priors.set(name, values)
    }

    pub fn set_solver(&mut self, solver: SolverConfig) {
        self.base.solver = solver;
    }

    pub fn data(&self) -> &BoardingSchoolData {
        &self.base.data
    }
}

impl ModelDef for SirPoissonModel {
    fn name(&self) -> &'static str {
        "sir_poisson"
    }

    fn layout(&self) -> &ParameterLayout {
        &self.base.layout
    }

    fn logp<R: Real>(&self, z: &[R]) -> R {
        let (x, log_jac) = self.base.layout.constrain_vector(z);
        let (beta, gamma, s0) = (x[0], x[1], x[2]);
        let mut lp = log_jac + self.base.prior_logp(beta, gamma, s0);
        let path = match self.base.infected_path(beta, gamma, s0) {
            Some(p) => p,
            None => return R::constant(f64::NEG_INFINITY),
        };
        let n_pop = self.base.data.population() as f64;
        for (y, i_t) in self.base.data.cases().iter().zip(path) {
            if !(i_t.value() > 0.0) {
                return R::constant(f64::NEG_INFINITY);
            }
            lp = lp + poisson_lpmf(*y as f64, i_t * n_pop);
        }
        lp
    }

    fn generated_names(&self) -> Vec<String> {
        self.base.generated_names()
    }

    fn generated(&self, constrained: &[f64]) -> Vec<f64> {
        self.base.generated(constrained)
    }

    fn fitted_prefix(&self) -> &'static str {
        "lambda["
    }
}

/// Y_t ~ Binomial(N, i(t)); identical dynamics and priors to the Poisson
/// variant, observation density swapped.
pub struct SirBinomialModel {
    base: SirBase,
}

impl SirBinomialModel {
    pub fn new(data: BoardingSchoolData) -> Result<Self, ModelError> {
        Ok(SirBinomialModel {
            base: SirBase::new(data),
        })
    }

    pub fn set_prior(&mut self, name: &str, values: &[f64]) -> Result<(), ModelError> {
        self.base.priors.set(name, values)
    }

    pub fn set_solver(&mut self, solver: SolverConfig) {
        self.base.solver = solver;
    }
}

impl ModelDef for SirBinomialModel {
    fn name(&self) -> &'static str {
        "sir_binomial"
    }

    fn layout(&self) -> &ParameterLayout {
        &self.base.layout
    }

    fn logp<R: Real>(&self, z: &[R]) -> R {
        let (x, log_jac) = self.base.layout.constrain_vector(z);
        let (beta, gamma, s0) = (x[0], x[1], x[2]);
        let mut lp = log_jac + self.base.prior_logp(beta, gamma, s0);
        let path = match self.base.infected_path(beta, gamma, s0) {
            Some(p) => p,
            None => return R::constant(f64::NEG_INFINITY),
        };
        let n_pop = self.base.data.population();
        for (y, i_t) in self.base.data.cases().iter().zip(path) {
            let iv = i_t.value();
            // Probability exactly 0 is only consistent with a zero count.
            if !(iv >= 0.0) || iv >= 1.0 || (iv == 0.0 && *y > 0) {
                return R::constant(f64::NEG_INFINITY);
            }
            lp = lp + binomial_lpmf(*y as f64, n_pop as f64, i_t);
        }
        lp
    }

    fn generated_names(&self) -> Vec<String> {
        self.base.generated_names()
    }

    fn generated(&self, constrained: &[f64]) -> Vec<f64> {
        self.base.generated(constrained)
    }

    fn fitted_prefix(&self) -> &'static str {
        "lambda["
    }
}
