//! Hierarchical Poisson model for gonorrhoea diagnosis counts stratified by
//! region, age group and gender, with a fixed gender effect, a fixed
//! gender-London interaction, and three blocks of random effects.

use super::{GonorrhoeaData, ModelDef, ModelError, PriorParams, AGE_GROUPS};
use crate::autodiff::Real;
use crate::dist::{exponential_lpdf, normal_lpdf, normal_lpdf_fixed, poisson_log_lpmf};
use crate::transforms::{Constraint, ParameterLayout};

/// Normal priors are (mean, variance) pairs; the variance components carry
/// unit-rate exponential priors (rate in the first slot).
#[derive(Clone, Copy, Debug)]
pub struct GonorrhoeaPriors {
    pub alpha: PriorParams,
    pub beta_m: PriorParams,
    pub beta_ml: PriorParams,
    pub sigma_sq_alpha: PriorParams,
    pub sigma_sq_xi: PriorParams,
    pub sigma_sq_nu: PriorParams,
}

impl Default for GonorrhoeaPriors {
    fn default() -> Self {
        GonorrhoeaPriors {
            alpha: PriorParams(0.0, 100.0),
            beta_m: PriorParams(0.0, 10.0),
            beta_ml: PriorParams(0.0, 10.0),
            sigma_sq_alpha: PriorParams(1.0, 0.0),
            sigma_sq_xi: PriorParams(1.0, 0.0),
            sigma_sq_nu: PriorParams(1.0, 0.0),
        }
    }
}

pub struct GonorrhoeaModel {
    data: GonorrhoeaData,
    layout: ParameterLayout,
    priors: GonorrhoeaPriors,
    log_pop: Vec<f64>,
}

impl GonorrhoeaModel {
    pub fn new(data: GonorrhoeaData) -> Result<Self, ModelError> {
        let mut layout = ParameterLayout::new();
        layout.push("alpha", Constraint::Free);
        layout.push("beta_M", Constraint::Free);
        layout.push("beta_ML", Constraint::Free);
        for r in 1..=9 {
            layout.push(format!("alpha_r[{r}]"), Constraint::Free);
        }
        for a in 0..7 {
            layout.push(format!("xi[{a}]"), Constraint::Free);
        }
        for a in 0..7 {
            layout.push(format!("nu[{a}]"), Constraint::Free);
        }
        layout.push("sigma_sq_alpha", Constraint::LowerBound(0.0));
        layout.push("sigma_sq_xi", Constraint::LowerBound(0.0));
        layout.push("sigma_sq_nu", Constraint::LowerBound(0.0));
        debug_assert_eq!(layout.dimension(), 29);
        let log_pop = data.rows().iter().map(|r| (r.population as f64).ln()).collect();
        Ok(GonorrhoeaModel {
            data,
            layout,
            priors: GonorrhoeaPriors::default(),
            log_pop,
        })
    }

    pub fn set_prior(&mut self, name: &str, values: &[f64]) -> Result<(), ModelError> {
        let slot = match name {
            "alpha" => &mut self.priors.alpha,
            "beta_M" => &mut self.priors.beta_m,
            "beta_ML" => &mut self.priors.beta_ml,
            "sigma_sq_alpha" => &mut self.priors.sigma_sq_alpha,
            "sigma_sq_xi" => &mut self.priors.sigma_sq_xi,
            "sigma_sq_nu" => &mut self.priors.sigma_sq_nu,
            _ => return Err(ModelError::UnknownPrior(name.to_string())),
        };
        slot.set(name, values)
    }

    pub fn data(&self) -> &GonorrhoeaData {
        &self.data
    }

    fn linear_predictor<R: Real>(&self, x: &[R], row_idx: usize) -> R {
        let row = &self.data.rows()[row_idx];
        let alpha = x[0];
        let mut logk = alpha + x[3 + row.region] + self.log_pop[row_idx];
        if row.male {
            logk = logk + x[12 + row.age_group] + x[1];
            if row.london() {
                logk = logk + x[2];
            }
        } else {
            logk = logk + x[19 + row.age_group];
        }
        logk
    }
}

impl ModelDef for GonorrhoeaModel {
    fn name(&self) -> &'static str {
        "gonorrhoea"
    }

    fn layout(&self) -> &ParameterLayout {
        &self.layout
    }

    fn logp<R: Real>(&self, z: &[R]) -> R {
        let (x, log_jac) = self.layout.constrain_vector(z);
        let pr = &self.priors;
        let mut lp = log_jac;

        lp = lp + normal_lpdf_fixed(x[0], pr.alpha.0, pr.alpha.1.sqrt());
        lp = lp + normal_lpdf_fixed(x[1], pr.beta_m.0, pr.beta_m.1.sqrt());
        lp = lp + normal_lpdf_fixed(x[2], pr.beta_ml.0, pr.beta_ml.1.sqrt());

        let (ss_alpha, ss_xi, ss_nu) = (x[26], x[27], x[28]);
        lp = lp + exponential_lpdf(ss_alpha, pr.sigma_sq_alpha.0);
        lp = lp + exponential_lpdf(ss_xi, pr.sigma_sq_xi.0);
        lp = lp + exponential_lpdf(ss_nu, pr.sigma_sq_nu.0);

        let zero = R::constant(0.0);
        let sd_alpha = ss_alpha.sqrt();
        for r in 0..9 {
            lp = lp + normal_lpdf(x[3 + r], zero, sd_alpha);
        }
        let sd_xi = ss_xi.sqrt();
        for a in 0..7 {
            lp = lp + normal_lpdf(x[12 + a], zero, sd_xi);
        }
        let sd_nu = ss_nu.sqrt();
        for a in 0..7 {
            lp = lp + normal_lpdf(x[19 + a], zero, sd_nu);
        }

        for (row_idx, row) in self.data.rows().iter().enumerate() {
            let logk = self.linear_predictor(&x, row_idx);
            lp = lp + poisson_log_lpmf(row.count as f64, logk);
        }
        lp
    }

    fn generated_names(&self) -> Vec<String> {
        self.data
            .rows()
            .iter()
            .map(|r| {
                format!(
                    "rate[{}.{}.{}]",
                    r.region + 1,
                    AGE_GROUPS[r.age_group],
                    if r.male { "M" } else { "F" }
                )
            })
            .collect()
    }

    /// Standardized diagnosis rate per 100,000 per stratum.
    fn generated(&self, constrained: &[f64]) -> Vec<f64> {
        (0..self.data.rows().len())
            .map(|idx| {
                let logk: f64 = self.linear_predictor(constrained, idx);
                1e5 * logk.exp() / self.data.rows()[idx].population as f64
            })
            .collect()
    }

    fn fitted_prefix(&self) -> &'static str {
        "rate["
    }
}
