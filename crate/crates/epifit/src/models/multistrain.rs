//! Multistrain SIR model fitted to weekly ILI consultation counts and
//! virological confirmation data. Each strain acts independently with its own
//! transmission rate; the recovery rate is shared. Cumulative ILI
//! compartments reset to zero at the start of every week, matching data that
//! restart counting weekly.

use super::{ModelDef, ModelError, MultistrainData, PriorParams, StrainId};
use crate::autodiff::Real;
use crate::dist::{
    beta_lpdf, binomial_lpmf, gamma_lpdf, half_normal_lpdf, lognormal_lpdf, multinomial_lpmf,
    normal_lpdf_fixed,
};
use crate::ode::{integrate_piecewise_with_resets, OdeSystem, SolverConfig};
use crate::transforms::{Constraint, ParameterLayout};

/// Seasonal flu-negative ILI rate:
/// log theta^-(t) = theta_hat + phi_amp (e^{-(t-mu_peak)^2 / (2 sigma_w^2)} - 1).
/// The maximum exp(theta_hat) is attained exactly at t = mu_peak.
pub fn seasonal_theta_minus<R: Real>(
    t: f64,
    theta_hat: R,
    phi_amp: R,
    mu_peak: R,
    sigma_w: R,
) -> R {
    let d = (R::constant(t) - mu_peak) / sigma_w;
    let bump = (-(d.square()) * 0.5).exp();
    (theta_hat + phi_amp * (bump - 1.0)).exp()
}

/// Count-space state per strain (S_x, I_x, R_x), then the cumulative ILI^+
/// compartment per strain, then cumulative ILI^-.
struct MultistrainSystem {
    n_strains: usize,
    total_pop: f64,
}

impl MultistrainSystem {
    fn ili_offset(&self) -> usize {
        3 * self.n_strains
    }
}

impl OdeSystem for MultistrainSystem {
    fn dim(&self) -> usize {
        4 * self.n_strains + 1
    }

    fn rhs<R: Real>(&self, t: f64, y: &[R], theta: &[R], dydt: &mut [R]) {
        let n = self.n_strains;
        let inv_pop = 1.0 / self.total_pop;
        let gamma = theta[n];
        let mut infected_sum = R::constant(0.0);
        for x in 0..n {
            let s = y[3 * x];
            let i = y[3 * x + 1];
            let infection = theta[x] * i * s * inv_pop;
            let recovery = gamma * i;
            dydt[3 * x] = -infection;
            dydt[3 * x + 1] = infection - recovery;
            dydt[3 * x + 2] = recovery;
            // theta_x^+ fraction of new infections become consultations.
            dydt[self.ili_offset() + x] = theta[n + 1 + x] * infection;
            infected_sum = infected_sum + i;
        }
        let theta_minus = seasonal_theta_minus(
            t,
            theta[2 * n + 1],
            theta[2 * n + 2],
            theta[2 * n + 3],
            theta[2 * n + 4],
        );
        dydt[4 * n] = theta_minus * (R::constant(self.total_pop) - infected_sum);
    }
}

/// Weakly informative defaults; every entry can be overridden per parameter
/// name from the run configuration.
#[derive(Clone, Debug)]
pub struct MultistrainPriors {
    /// LogNormal (mu, sd) per strain transmission rate.
    pub beta: PriorParams,
    /// Gamma (shape, rate) on the shared recovery rate.
    pub gamma: PriorParams,
    /// Beta (a, b) on each symptomatic-consultation probability.
    pub theta_plus: PriorParams,
    /// Beta (a, b) on each initial infected fraction; mass near zero.
    pub i0: PriorParams,
    /// Beta (a, b) on the diagnosis rate epsilon.
    pub epsilon: PriorParams,
    /// Normal (mean, variance) on theta_hat (log peak flu-negative rate).
    pub theta_hat: PriorParams,
    /// HalfNormal (0, variance) on the seasonal amplitude.
    pub phi_amp: PriorParams,
    /// Normal (mean, variance) on the peak day; default mean is mid-season.
    pub mu_peak: PriorParams,
    /// HalfNormal (0, variance) on the peak width in days.
    pub sigma_w: PriorParams,
}

impl MultistrainPriors {
    fn default_for(n_days: f64) -> Self {
        let four_weeks_sq = 28.0f64.powi(2);
        MultistrainPriors {
            beta: PriorParams(0.0, 1.0),
            gamma: PriorParams(0.004, 0.02),
            theta_plus: PriorParams(1.0, 1.0),
            i0: PriorParams(1.0, 999.0),
            epsilon: PriorParams(1.0, 1.0),
            theta_hat: PriorParams(0.01f64.ln(), 1.0),
            phi_amp: PriorParams(0.0, 1.0),
            mu_peak: PriorParams(n_days / 2.0, four_weeks_sq),
            sigma_w: PriorParams(0.0, four_weeks_sq),
        }
    }
}

pub struct MultistrainModel {
    data: MultistrainData,
    strains: Vec<StrainId>,
    layout: ParameterLayout,
    priors: MultistrainPriors,
    solver: SolverConfig,
    system: MultistrainSystem,
    boundaries: Vec<f64>,
    reset_mask: Vec<bool>,
}

impl MultistrainModel {
    pub fn new(data: MultistrainData, strains: Vec<StrainId>) -> Result<Self, ModelError> {
        if strains.is_empty() {
            return Err(ModelError::Data(super::DataError::Invalid(
                "need at least one strain".into(),
            )));
        }
        // Virology counts for strains excluded from the model must be zero:
        // the multinomial categories are exactly the chosen strains + negative.
        for (idx, strain) in StrainId::ALL.iter().enumerate() {
            if !strains.contains(strain) {
                for week in data.weeks() {
                    if week.positives[idx] != 0 {
                        return Err(ModelError::Data(super::DataError::Invalid(format!(
                            "week {}: positive {} samples present but strain not modelled",
                            week.week,
                            strain.label()
                        ))));
                    }
                }
            }
        }

        let mut layout = ParameterLayout::new();
        for s in &strains {
            layout.push(format!("beta_{}", s.label()), Constraint::LowerBound(0.0));
        }
        layout.push("gamma", Constraint::LowerBound(0.0));
        for s in &strains {
            layout.push(
                format!("theta_plus_{}", s.label()),
                Constraint::Interval(0.0, 1.0),
            );
        }
        for s in &strains {
            layout.push(format!("i0_{}", s.label()), Constraint::Interval(0.0, 1.0));
        }
        layout.push("epsilon", Constraint::Interval(0.0, 1.0));
        layout.push("theta_hat", Constraint::Free);
        layout.push("phi_amp", Constraint::LowerBound(0.0));
        layout.push("mu_peak", Constraint::Free);
        layout.push("sigma_w", Constraint::LowerBound(0.0));

        let n_weeks = data.n_weeks();
        let boundaries: Vec<f64> = (1..=n_weeks).map(|w| 7.0 * w as f64).collect();
        let n = strains.len();
        let mut reset_mask = vec![false; 4 * n + 1];
        for m in reset_mask.iter_mut().skip(3 * n) {
            *m = true;
        }
        let system = MultistrainSystem {
            n_strains: n,
            total_pop: data.total_population() as f64,
        };
        let priors = MultistrainPriors::default_for(7.0 * n_weeks as f64);
        Ok(MultistrainModel {
            data,
            strains,
            layout,
            priors,
            solver: SolverConfig::default(),
            system,
            boundaries,
            reset_mask,
        })
    }

    pub fn set_prior(&mut self, name: &str, values: &[f64]) -> Result<(), ModelError> {
        // Per-strain names share one prior slot per block.
        let slot = if name.starts_with("beta_") {
            &mut self.priors.beta
        } else if name.starts_with("theta_plus") {
            &mut self.priors.theta_plus
        } else if name.starts_with("i0") {
            &mut self.priors.i0
        } else {
            match name {
                "gamma" => &mut self.priors.gamma,
                "epsilon" => &mut self.priors.epsilon,
                "theta_hat" => &mut self.priors.theta_hat,
                "phi_amp" => &mut self.priors.phi_amp,
                "mu_peak" => &mut self.priors.mu_peak,
                "sigma_w" => &mut self.priors.sigma_w,
                _ => return Err(ModelError::UnknownPrior(name.to_string())),
            }
        };
        slot.set(name, values)
    }

    pub fn set_solver(&mut self, solver: SolverConfig) {
        self.solver = solver;
    }

    pub fn strains(&self) -> &[StrainId] {
        &self.strains
    }

    pub fn data(&self) -> &MultistrainData {
        &self.data
    }

    fn n(&self) -> usize {
        self.strains.len()
    }

    /// Weekly cumulative (ILI^+ per strain, ILI^-) at each week end, with the
    /// masked compartments reset at week starts.
    fn weekly_ili<R: Real>(&self, x: &[R]) -> Option<Vec<Vec<R>>> {
        let n = self.n();
        let pop = self.data.total_population() as f64;
        // Packed ODE parameters: betas, gamma, theta_plus, then the seasonal
        // rate parameters.
        let mut theta: Vec<R> = Vec::with_capacity(2 * n + 5);
        theta.extend_from_slice(&x[..n + 1]);
        theta.extend_from_slice(&x[n + 1..2 * n + 1]);
        theta.push(x[3 * n + 2]); // theta_hat
        theta.push(x[3 * n + 3]); // phi_amp
        theta.push(x[3 * n + 4]); // mu_peak
        theta.push(x[3 * n + 5]); // sigma_w

        let mut y0: Vec<R> = vec![R::constant(0.0); 4 * n + 1];
        for s in 0..n {
            let i0 = x[2 * n + 1 + s] * pop;
            y0[3 * s] = R::constant(pop) - i0;
            y0[3 * s + 1] = i0;
        }

        let ends = integrate_piecewise_with_resets(
            &self.system,
            &y0,
            0.0,
            &self.boundaries,
            &self.reset_mask,
            &theta,
            &self.solver,
        )
        .ok()?;
        let off = self.system.ili_offset();
        Some(
            ends.into_iter()
                .map(|state| state[off..].to_vec())
                .collect(),
        )
    }

    fn epsilon_index(&self) -> usize {
        3 * self.n() + 1
    }
}

impl ModelDef for MultistrainModel {
    fn name(&self) -> &'static str {
        "multistrain"
    }

    fn layout(&self) -> &ParameterLayout {
        &self.layout
    }

    fn logp<R: Real>(&self, z: &[R]) -> R {
        let n = self.n();
        let (x, log_jac) = self.layout.constrain_vector(z);
        let neg_inf = || R::constant(f64::NEG_INFINITY);

        let mut lp = log_jac;
        for s in 0..n {
            lp = lp + lognormal_lpdf(x[s], self.priors.beta.0, self.priors.beta.1);
        }
        lp = lp + gamma_lpdf(x[n], self.priors.gamma.0, self.priors.gamma.1);
        for s in 0..n {
            lp = lp + beta_lpdf(x[n + 1 + s], self.priors.theta_plus.0, self.priors.theta_plus.1);
        }
        for s in 0..n {
            lp = lp + beta_lpdf(x[2 * n + 1 + s], self.priors.i0.0, self.priors.i0.1);
        }
        let eps = x[self.epsilon_index()];
        lp = lp + beta_lpdf(eps, self.priors.epsilon.0, self.priors.epsilon.1);
        lp = lp
            + normal_lpdf_fixed(
                x[3 * n + 2],
                self.priors.theta_hat.0,
                self.priors.theta_hat.1.sqrt(),
            );
        lp = lp + half_normal_lpdf(x[3 * n + 3], self.priors.phi_amp.1.sqrt());
        lp = lp
            + normal_lpdf_fixed(x[3 * n + 4], self.priors.mu_peak.0, self.priors.mu_peak.1.sqrt());
        lp = lp + half_normal_lpdf(x[3 * n + 5], self.priors.sigma_w.1.sqrt());

        let weekly = match self.weekly_ili(&x) {
            Some(w) => w,
            None => return neg_inf(),
        };

        let pop = self.data.total_population() as f64;
        for (week, ili) in self.data.weeks().iter().zip(&weekly) {
            let mut total = R::constant(0.0);
            for part in ili {
                total = total + *part;
            }
            let total_v = total.value();
            if !(total_v > 0.0) {
                // No predicted consultations: impossible if anything was
                // observed that week.
                if week.ili_cases > 0 || week.total_samples() > 0 {
                    return neg_inf();
                }
                continue;
            }

            // Predicted consultations in the monitored population. The
            // binomial needs an integer trial count; round the primal value
            // (constant on the tape) and reject when it cannot cover the
            // observed count.
            let scale = week.monitored_pop as f64 / pop;
            let trials = (total_v * scale).round();
            if trials < week.ili_cases as f64 {
                return neg_inf();
            }
            if trials > 0.0 {
                lp = lp + binomial_lpmf(week.ili_cases as f64, trials, eps);
            } else if week.ili_cases > 0 {
                return neg_inf();
            }

            // Virological samples: multinomial over per-strain shares plus
            // the flu-negative share.
            let mut counts: Vec<f64> = Vec::with_capacity(n + 1);
            for (s, _) in self.strains.iter().enumerate() {
                let strain_idx = StrainId::ALL
                    .iter()
                    .position(|g| *g == self.strains[s])
                    .unwrap();
                counts.push(week.positives[strain_idx] as f64);
            }
            counts.push(week.negatives as f64);
            if counts.iter().sum::<f64>() > 0.0 {
                let shares: Vec<R> = ili.iter().map(|part| *part / total).collect();
                let lm = multinomial_lpmf(&counts, &shares);
                if !lm.value().is_finite() {
                    return neg_inf();
                }
                lp = lp + lm;
            }
        }
        lp
    }

    fn generated_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .strains
            .iter()
            .map(|s| format!("R_0_{}", s.label()))
            .collect();
        for week in self.data.weeks() {
            names.push(format!("ili_mean[{}]", week.week));
        }
        for week in self.data.weeks() {
            for s in &self.strains {
                names.push(format!("share[{}.{}]", week.week, s.label()));
            }
            names.push(format!("share[{}.neg]", week.week));
        }
        names
    }

    /// Per-strain R_0, expected weekly ILI consultations, and the weekly
    /// attribution shares of consultations by cause.
    fn generated(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out: Vec<f64> = (0..n).map(|s| x[s] / x[n]).collect();
        let eps = x[self.epsilon_index()];
        let pop = self.data.total_population() as f64;
        match self.weekly_ili::<f64>(x) {
            Some(weekly) => {
                for (week, ili) in self.data.weeks().iter().zip(&weekly) {
                    let total: f64 = ili.iter().sum();
                    let trials = (total * week.monitored_pop as f64 / pop).round();
                    out.push(eps * trials);
                }
                for ili in &weekly {
                    let total: f64 = ili.iter().sum();
                    for part in ili {
                        out.push(if total > 0.0 { part / total } else { f64::NAN });
                    }
                }
            }
            None => {
                let k = self.data.n_weeks() * (n + 2);
                out.extend(std::iter::repeat(f64::NAN).take(k));
            }
        }
        out
    }

    fn fitted_prefix(&self) -> &'static str {
        "ili_mean["
    }
}
