//! The epidemic models, each exposed as a [`Model`]: a parameter layout, an
//! unconstrained log-posterior (priors + likelihood + constraint Jacobians),
//! and generated quantities evaluated per retained draw.

mod data;
mod gonorrhoea;
mod multistrain;
mod simulate;
mod sir;
mod sir_ou;

pub use data::{
    BoardingSchoolData, DataError, GonorrhoeaData, GonorrhoeaRow, MultistrainData,
    MultistrainWeek, StrainId, AGE_GROUPS, LONDON_REGION, REGION_NAMES,
};
pub use gonorrhoea::GonorrhoeaModel;
pub use multistrain::{seasonal_theta_minus, MultistrainModel, MultistrainPriors};
pub use simulate::{
    simulate_gonorrhoea, simulate_multistrain, simulate_sir_binomial, simulate_sir_ou,
    simulate_sir_poisson, GonorrhoeaTruth, MultistrainTruth, SirOuTruth, SirTruth,
};
pub use sir::{SirBinomialModel, SirPoissonModel, SirPriors};
pub use sir_ou::{ou_transition_lpdf, SirOuModel, SirOuPriors};

use crate::autodiff::{eval_with_gradient, GradientResult, Real, Tape, Var};
use crate::transforms::ParameterLayout;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("unknown prior `{0}` for this model")]
    UnknownPrior(String),
    #[error("prior `{name}` expects {expected} parameter(s), got {got}")]
    PriorArity {
        name: String,
        expected: usize,
        got: usize,
    },
}

/// A model definition: one generic log-density implementation shared by the
/// primal and taped evaluation paths, plus layout and generated quantities.
pub trait ModelDef {
    fn name(&self) -> &'static str;

    fn layout(&self) -> &ParameterLayout;

    /// Unconstrained-space log-posterior including constraint Jacobians.
    /// Deterministic in `z`; returns -inf for numerically invalid points.
    fn logp<R: Real>(&self, z: &[R]) -> R;

    fn generated_names(&self) -> Vec<String> {
        Vec::new()
    }

    /// Generated quantities at a constrained parameter vector. Never
    /// influences `logp`.
    fn generated(&self, _constrained: &[f64]) -> Vec<f64> {
        Vec::new()
    }

    /// Prefix of the generated-quantity block holding the fitted trajectory
    /// (used for plot-ready output). Empty when the model has none.
    fn fitted_prefix(&self) -> &'static str {
        ""
    }
}

/// Object-safe surface consumed by the samplers and the CLI.
///
/// Model objects are immutable after construction and shared read-only across
/// chains; per-evaluation scratch (tape, ODE workspaces) is caller-owned.
pub trait Model: Sync + Send {
    fn name(&self) -> &str;
    fn layout(&self) -> &ParameterLayout;
    fn dim(&self) -> usize {
        self.layout().dimension()
    }
    fn logp_value(&self, z: &[f64]) -> f64;
    fn logp_gradient(&self, tape: &Tape, z: &[f64]) -> GradientResult;
    fn generated_names(&self) -> Vec<String>;
    fn generated(&self, constrained: &[f64]) -> Vec<f64>;
    fn fitted_prefix(&self) -> &str;
}

impl<T: ModelDef + Sync + Send> Model for T {
    fn name(&self) -> &str {
        ModelDef::name(self)
    }
    fn layout(&self) -> &ParameterLayout {
        ModelDef::layout(self)
    }
    fn logp_value(&self, z: &[f64]) -> f64 {
        self.logp::<f64>(z)
    }
    fn logp_gradient(&self, tape: &Tape, z: &[f64]) -> GradientResult {
        eval_with_gradient(tape, |vars: &[Var<'_>]| self.logp(vars), z)
    }
    fn generated_names(&self) -> Vec<String> {
        ModelDef::generated_names(self)
    }
    fn generated(&self, constrained: &[f64]) -> Vec<f64> {
        ModelDef::generated(self, constrained)
    }
    fn fitted_prefix(&self) -> &str {
        ModelDef::fitted_prefix(self)
    }
}

/// Two-parameter prior specification; the family is fixed by the model, the
/// numbers may be overridden from the run configuration.
#[derive(Clone, Copy, Debug)]
pub struct PriorParams(pub f64, pub f64);

impl PriorParams {
    pub fn set(&mut self, name: &str, values: &[f64]) -> Result<(), ModelError> {
        match values {
            [a] => {
                self.0 = *a;
                Ok(())
            }
            [a, b] => {
                self.0 = *a;
                self.1 = *b;
                Ok(())
            }
            _ => Err(ModelError::PriorArity {
                name: name.to_string(),
                expected: 2,
                got: values.len(),
            }),
        }
    }
}
