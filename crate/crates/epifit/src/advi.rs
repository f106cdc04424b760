//! Automatic differentiation variational inference: a Gaussian approximation
//! in the unconstrained space (mean-field or full-rank), fitted by stochastic
//! gradient ascent on the ELBO with reparameterized gradients from the tape.

use crate::autodiff::Tape;
use crate::diagnostics::DrawMatrix;
use crate::models::Model;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

const LN_2PI_E: f64 = 2.837_877_066_409_345_5;

/// Factorized Gaussian: mu plus log standard deviations.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanFieldParams {
    pub mu: Vec<f64>,
    /// omega = log sigma, so sigma stays positive by construction.
    pub omega: Vec<f64>,
}

impl MeanFieldParams {
    pub fn standard(dim: usize) -> Self {
        MeanFieldParams {
            mu: vec![0.0; dim],
            omega: vec![0.0; dim],
        }
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.omega.iter().map(|w| w.exp()).collect()
    }
}

/// Full-rank Gaussian: mu plus a lower-triangular factor with positive
/// diagonal (covariance = L L'). The diagonal is stored as its logarithm so
/// optimization stays unconstrained.
#[derive(Clone, Debug, PartialEq)]
pub struct FullRankParams {
    pub mu: Vec<f64>,
    /// Packed rows: for row i, entries L_i0 .. L_i,i-1 then log L_ii.
    packed: Vec<f64>,
}

impl FullRankParams {
    pub fn identity(dim: usize) -> Self {
        let mut packed = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for _ in 0..i {
                packed.push(0.0);
            }
            packed.push(0.0); // log 1
        }
        FullRankParams {
            mu: vec![0.0; dim],
            packed,
        }
    }

    fn row_start(i: usize) -> usize {
        i * (i + 1) / 2
    }

    /// Dense lower-triangular factor with the diagonal exponentiated.
    pub fn factor(&self) -> Vec<Vec<f64>> {
        let dim = self.mu.len();
        let mut l = vec![vec![0.0; dim]; dim];
        for i in 0..dim {
            let start = Self::row_start(i);
            for j in 0..i {
                l[i][j] = self.packed[start + j];
            }
            l[i][i] = self.packed[start + i].exp();
        }
        l
    }

    /// Covariance L L'.
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let l = self.factor();
        let dim = self.mu.len();
        let mut cov = vec![vec![0.0; dim]; dim];
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = 0.0;
                for k in 0..=i.min(j) {
                    acc += l[i][k] * l[j][k];
                }
                cov[i][j] = acc;
            }
        }
        cov
    }
}

/// The Gaussian variational family, with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum FamilyParams {
    MeanField(MeanFieldParams),
    FullRank(FullRankParams),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    MeanField,
    FullRank,
}

impl FamilyParams {
    pub fn identity(family: Family, dim: usize) -> Self {
        match family {
            Family::MeanField => FamilyParams::MeanField(MeanFieldParams::standard(dim)),
            Family::FullRank => FamilyParams::FullRank(FullRankParams::identity(dim)),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FamilyParams::MeanField(p) => p.mu.len(),
            FamilyParams::FullRank(p) => p.mu.len(),
        }
    }

    pub fn mu(&self) -> &[f64] {
        match self {
            FamilyParams::MeanField(p) => &p.mu,
            FamilyParams::FullRank(p) => &p.mu,
        }
    }

    pub fn mu_mut(&mut self) -> &mut [f64] {
        match self {
            FamilyParams::MeanField(p) => &mut p.mu,
            FamilyParams::FullRank(p) => &mut p.mu,
        }
    }

    /// Number of free variational parameters.
    fn n_params(&self) -> usize {
        match self {
            FamilyParams::MeanField(p) => 2 * p.mu.len(),
            FamilyParams::FullRank(p) => p.mu.len() + p.packed.len(),
        }
    }

    /// Elliptical standardization: zeta = mu + scale(eta).
    fn transform(&self, eta: &[f64], zeta: &mut [f64]) {
        match self {
            FamilyParams::MeanField(p) => {
                for i in 0..p.mu.len() {
                    zeta[i] = p.mu[i] + p.omega[i].exp() * eta[i];
                }
            }
            FamilyParams::FullRank(p) => {
                for i in 0..p.mu.len() {
                    let start = FullRankParams::row_start(i);
                    let mut acc = p.mu[i];
                    for j in 0..i {
                        acc += p.packed[start + j] * eta[j];
                    }
                    acc += p.packed[start + i].exp() * eta[i];
                    zeta[i] = acc;
                }
            }
        }
    }

    /// Closed-form Gaussian entropy.
    pub fn entropy(&self) -> f64 {
        let k = self.dim() as f64;
        match self {
            FamilyParams::MeanField(p) => p.omega.iter().sum::<f64>() + 0.5 * k * LN_2PI_E,
            FamilyParams::FullRank(p) => {
                let log_det: f64 = (0..p.mu.len())
                    .map(|i| p.packed[FullRankParams::row_start(i) + i])
                    .sum();
                log_det + 0.5 * k * LN_2PI_E
            }
        }
    }

    /// Accumulate the reparameterization gradient of one sample into `out`
    /// (layout: mu, then omega or packed rows). The entropy gradient is the
    /// caller's responsibility so samples can be averaged first.
    fn accumulate_sample_grad(&self, g_zeta: &[f64], eta: &[f64], out: &mut [f64]) {
        let dim = self.dim();
        match self {
            FamilyParams::MeanField(p) => {
                for i in 0..dim {
                    out[i] += g_zeta[i];
                    out[dim + i] += g_zeta[i] * eta[i] * p.omega[i].exp();
                }
            }
            FamilyParams::FullRank(p) => {
                for i in 0..dim {
                    out[i] += g_zeta[i];
                    let start = FullRankParams::row_start(i);
                    for j in 0..i {
                        out[dim + start + j] += g_zeta[i] * eta[j];
                    }
                    out[dim + start + i] += g_zeta[i] * eta[i] * p.packed[start + i].exp();
                }
            }
        }
    }

    /// Entropy gradient: +1 for each log-scale coordinate.
    fn add_entropy_grad(&self, out: &mut [f64]) {
        let dim = self.dim();
        match self {
            FamilyParams::MeanField(_) => {
                for i in 0..dim {
                    out[dim + i] += 1.0;
                }
            }
            FamilyParams::FullRank(p) => {
                for i in 0..p.mu.len() {
                    out[dim + FullRankParams::row_start(i) + i] += 1.0;
                }
            }
        }
    }

    fn apply_step(&mut self, delta: &[f64]) {
        let dim = self.dim();
        match self {
            FamilyParams::MeanField(p) => {
                for i in 0..dim {
                    p.mu[i] += delta[i];
                    p.omega[i] += delta[dim + i];
                }
            }
            FamilyParams::FullRank(p) => {
                for i in 0..dim {
                    p.mu[i] += delta[i];
                }
                for (s, d) in p.packed.iter_mut().zip(&delta[dim..]) {
                    *s += d;
                }
            }
        }
    }

    /// Free parameters as one flat vector (mu, then the scale block).
    fn flat(&self) -> Vec<f64> {
        match self {
            FamilyParams::MeanField(p) => {
                let mut v = p.mu.clone();
                v.extend_from_slice(&p.omega);
                v
            }
            FamilyParams::FullRank(p) => {
                let mut v = p.mu.clone();
                v.extend_from_slice(&p.packed);
                v
            }
        }
    }

    fn assign_flat(&mut self, flat: &[f64]) {
        let dim = self.dim();
        match self {
            FamilyParams::MeanField(p) => {
                p.mu.copy_from_slice(&flat[..dim]);
                p.omega.copy_from_slice(&flat[dim..]);
            }
            FamilyParams::FullRank(p) => {
                p.mu.copy_from_slice(&flat[..dim]);
                p.packed.copy_from_slice(&flat[dim..]);
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdviConfig {
    pub max_iter: usize,
    pub tol_rel_obj: f64,
    /// Monte Carlo samples per stochastic gradient.
    pub grad_samples: usize,
    /// Monte Carlo samples per ELBO evaluation.
    pub elbo_samples: usize,
    pub elbo_eval_every: usize,
    /// Step scale eta. `None` selects from {0.01, 0.1, 1} by short trials.
    pub step_scale: Option<f64>,
    /// Approximate posterior draws returned on the constrained scale.
    pub output_draws: usize,
    pub seed: u64,
}

impl Default for AdviConfig {
    fn default() -> Self {
        AdviConfig {
            max_iter: 10_000,
            tol_rel_obj: 0.01,
            grad_samples: 1,
            elbo_samples: 100,
            elbo_eval_every: 100,
            step_scale: None,
            output_draws: 1000,
            seed: 0,
        }
    }
}

impl AdviConfig {
    pub fn validate(&self) -> Result<(), AdviError> {
        let err = |m: &str| Err(AdviError::Config(m.to_string()));
        if self.tol_rel_obj <= 0.0 {
            return err("tol_rel_obj must be positive");
        }
        if self.grad_samples == 0 || self.elbo_samples == 0 {
            return err("sample counts must be at least 1");
        }
        if self.elbo_eval_every == 0 || self.max_iter == 0 {
            return err("iteration counts must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum AdviError {
    #[error("invalid ADVI configuration: {0}")]
    Config(String),
    #[error("failed to initialize ADVI for model `{model}`: ELBO not finite after {attempts} attempts")]
    Init { model: String, attempts: usize },
}

#[derive(Debug)]
pub struct AdviResult {
    pub params: FamilyParams,
    /// (iteration, ELBO estimate) at each evaluation point.
    pub elbo_trace: Vec<(usize, f64)>,
    pub converged: bool,
    /// Approximate posterior draws on the constrained scale (plus generated
    /// quantities), one chain.
    pub draws: DrawMatrix,
    pub warnings: Vec<String>,
}

fn standard_normal_vec<R: Rng>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// Monte Carlo ELBO estimate over `n` draws. A draw with non-finite model
/// log-density makes the estimate -inf, mirroring the support constraint.
pub fn elbo_estimate<M: Model + ?Sized, R: Rng>(
    model: &M,
    q: &FamilyParams,
    n: usize,
    rng: &mut R,
) -> f64 {
    let dim = q.dim();
    let mut eta = vec![0.0; dim];
    let mut zeta = vec![0.0; dim];
    let mut acc = 0.0f64;
    for _ in 0..n {
        standard_normal_vec(rng, &mut eta);
        q.transform(&eta, &mut zeta);
        let lp = model.logp_value(&zeta);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        acc += lp;
    }
    acc / n as f64 + q.entropy()
}

/// Reparameterization gradient of the ELBO with respect to the variational
/// parameters, averaged over `grad_samples` draws; the entropy gradient is
/// added analytically.
pub fn elbo_gradient<M: Model + ?Sized, R: Rng>(
    model: &M,
    tape: &Tape,
    q: &FamilyParams,
    grad_samples: usize,
    rng: &mut R,
) -> Vec<f64> {
    let dim = q.dim();
    let mut eta = vec![0.0; dim];
    let mut zeta = vec![0.0; dim];
    let mut grad = vec![0.0; q.n_params()];
    for _ in 0..grad_samples {
        standard_normal_vec(rng, &mut eta);
        q.transform(&eta, &mut zeta);
        let g = model.logp_gradient(tape, &zeta);
        q.accumulate_sample_grad(&g.gradient, &eta, &mut grad);
    }
    let inv = 1.0 / grad_samples as f64;
    for g in grad.iter_mut() {
        *g *= inv;
    }
    q.add_entropy_grad(&mut grad);
    grad
}

/// Per-coordinate step sizes: decaying accumulated squared gradients
/// (decay factor 0.9), an overall eta * k^(-1/2 + 1e-16) schedule, and a
/// unit offset in the denominator keeping the normalization benign where
/// gradients are small.
struct StepState {
    s: Vec<f64>,
    k: u64,
}

impl StepState {
    fn new(n: usize) -> Self {
        StepState {
            s: vec![0.0; n],
            k: 0,
        }
    }

    fn step(&mut self, eta: f64, grad: &[f64], delta: &mut [f64]) {
        self.k += 1;
        if self.k == 1 {
            for (si, g) in self.s.iter_mut().zip(grad) {
                *si = g * g;
            }
        } else {
            for (si, g) in self.s.iter_mut().zip(grad) {
                *si = 0.9 * *si + 0.1 * g * g;
            }
        }
        let scale = eta * (self.k as f64).powf(-0.5 + 1e-16);
        for i in 0..grad.len() {
            delta[i] = scale * grad[i] / (1.0 + self.s[i].sqrt());
        }
    }
}

/// RNG streams per purpose, all derived from the configured seed so a fit is
/// reproducible bit-for-bit.
fn stream(seed: u64, idx: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(idx);
    rng
}

const STREAM_INIT: u64 = 1;
const STREAM_TRIAL_BASE: u64 = 16;
const STREAM_OPTIMIZE: u64 = 2;
const STREAM_MONITOR: u64 = 3;
const STREAM_DRAWS: u64 = 4;

/// Suffix average of the optimization path (weight 2/k approximates the
/// arithmetic mean of the trailing half), smoothing out the stochastic
/// wander of the raw iterates around the optimum.
struct IterateAverage {
    flat: Vec<f64>,
    k: u64,
}

impl IterateAverage {
    fn new(n: usize) -> Self {
        IterateAverage {
            flat: vec![0.0; n],
            k: 0,
        }
    }

    fn push(&mut self, q: &FamilyParams) {
        self.k += 1;
        let w = (2.0 / self.k as f64).min(1.0);
        for (a, v) in self.flat.iter_mut().zip(q.flat()) {
            *a += w * (v - *a);
        }
    }

    fn snapshot(&self, like: &FamilyParams) -> FamilyParams {
        let mut q = like.clone();
        q.assign_flat(&self.flat);
        q
    }
}

fn run_iterations<M: Model + ?Sized>(
    model: &M,
    tape: &Tape,
    q: &mut FamilyParams,
    step: &mut StepState,
    avg: Option<&mut IterateAverage>,
    eta: f64,
    iters: usize,
    grad_samples: usize,
    rng: &mut ChaCha8Rng,
) {
    let mut delta = vec![0.0; q.n_params()];
    let mut avg = avg;
    for _ in 0..iters {
        let grad = elbo_gradient(model, tape, q, grad_samples, rng);
        if grad.iter().all(|g| g.is_finite()) {
            step.step(eta, &grad, &mut delta);
            q.apply_step(&delta);
        }
        // A non-finite gradient skips the update: the draw landed outside
        // the useful support.
        if let Some(avg) = avg.as_deref_mut() {
            avg.push(q);
        }
    }
}

/// Fit the variational approximation by stochastic gradient ascent.
///
/// Stops when the mean and the median of the trailing relative ELBO changes
/// both fall below `tol_rel_obj`, or at `max_iter`.
pub fn optimize<M: Model + ?Sized>(
    model: &M,
    family: Family,
    config: &AdviConfig,
    init: Option<FamilyParams>,
) -> Result<AdviResult, AdviError> {
    config.validate()?;
    let dim = model.dim();
    let tape = Tape::new();
    let mut warnings = Vec::new();

    // Initialization: the given point, else mu = 0 / identity scale; re-draw
    // mu uniformly in (-2, 2) while the ELBO stays non-finite.
    let mut q = init.unwrap_or_else(|| FamilyParams::identity(family, dim));
    if q.dim() != dim {
        return Err(AdviError::Config(format!(
            "init has dimension {}, model has {}",
            q.dim(),
            dim
        )));
    }
    let attempts = 100usize;
    {
        let mut init_rng = stream(config.seed, STREAM_INIT);
        let mut ok = false;
        for attempt in 0..attempts {
            let e = elbo_estimate(model, &q, config.elbo_samples, &mut init_rng);
            if e.is_finite() {
                ok = true;
                if attempt > 0 {
                    warnings.push(format!(
                        "initial point was re-drawn {attempt} time(s) before the ELBO was finite"
                    ));
                }
                break;
            }
            for mu in q.mu_mut() {
                *mu = init_rng.gen_range(-2.0..2.0);
            }
        }
        if !ok {
            return Err(AdviError::Init {
                model: model.name().to_string(),
                attempts,
            });
        }
    }

    // Step-scale selection by short trials when not fixed.
    let eta = match config.step_scale {
        Some(eta) => eta,
        None => {
            let candidates = [0.01, 0.1, 1.0];
            let trial_iters = 50.min(config.max_iter);
            let mut best = (f64::NEG_INFINITY, 0.1);
            for (i, cand) in candidates.iter().enumerate() {
                let mut trial_q = q.clone();
                let mut trial_step = StepState::new(q.n_params());
                let mut rng = stream(config.seed, STREAM_TRIAL_BASE + i as u64);
                run_iterations(
                    model,
                    &tape,
                    &mut trial_q,
                    &mut trial_step,
                    None,
                    *cand,
                    trial_iters,
                    config.grad_samples,
                    &mut rng,
                );
                let mut erng = stream(config.seed, STREAM_TRIAL_BASE + 8 + i as u64);
                let e = elbo_estimate(model, &trial_q, config.elbo_samples, &mut erng);
                if e.is_finite() && e > best.0 {
                    best = (e, *cand);
                }
            }
            if best.0 == f64::NEG_INFINITY {
                warnings.push(
                    "all step-scale trials gave non-finite ELBO; falling back to eta = 0.1".into(),
                );
            }
            best.1
        }
    };

    let mut rng = stream(config.seed, STREAM_OPTIMIZE);
    let mut monitor_rng = stream(config.seed, STREAM_MONITOR);
    let mut step = StepState::new(q.n_params());
    let mut avg = IterateAverage::new(q.n_params());
    let window_len = (config.max_iter / (10 * config.elbo_eval_every)).max(2);
    let mut rel_changes: Vec<f64> = Vec::new();
    let mut elbo_trace: Vec<(usize, f64)> = Vec::new();
    let mut prev_elbo = f64::NAN;
    let mut converged = false;
    let mut elbo_warned = false;

    let mut iter = 0usize;
    while iter < config.max_iter {
        let chunk = config.elbo_eval_every.min(config.max_iter - iter);
        run_iterations(
            model,
            &tape,
            &mut q,
            &mut step,
            Some(&mut avg),
            eta,
            chunk,
            config.grad_samples,
            &mut rng,
        );
        iter += chunk;

        let e = elbo_estimate(model, &avg.snapshot(&q), config.elbo_samples, &mut monitor_rng);
        if !e.is_finite() && !elbo_warned {
            warnings.push(format!("ELBO estimate was -inf at iteration {iter}"));
            elbo_warned = true;
        }
        elbo_trace.push((iter, e));
        if prev_elbo.is_finite() && e.is_finite() {
            let rel = ((e - prev_elbo) / prev_elbo).abs();
            rel_changes.push(rel);
            if rel_changes.len() > window_len {
                rel_changes.remove(0);
            }
            if rel_changes.len() >= 2 {
                let mean = rel_changes.iter().sum::<f64>() / rel_changes.len() as f64;
                let mut sorted = rel_changes.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let median = if sorted.len() % 2 == 0 {
                    0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
                } else {
                    sorted[sorted.len() / 2]
                };
                if mean < config.tol_rel_obj && median < config.tol_rel_obj {
                    converged = true;
                    break;
                }
            }
        }
        prev_elbo = e;
    }

    if !converged {
        warnings.push(format!(
            "stopped at max_iter = {} without meeting tol_rel_obj = {}",
            config.max_iter, config.tol_rel_obj
        ));
    }

    // Report the suffix-averaged parameters: they are what the ELBO monitor
    // tracked and what the posterior draws come from.
    let q = avg.snapshot(&q);
    let mut draw_rng = stream(config.seed, STREAM_DRAWS);
    let draws = draw_from_posterior(model, &q, config.output_draws, &mut draw_rng);

    Ok(AdviResult {
        params: q,
        elbo_trace,
        converged,
        draws,
        warnings,
    })
}

/// Sample the fitted approximation, map through the constraining transforms,
/// and evaluate generated quantities per draw.
pub fn draw_from_posterior<M: Model + ?Sized, R: Rng>(
    model: &M,
    q: &FamilyParams,
    n: usize,
    rng: &mut R,
) -> DrawMatrix {
    let dim = q.dim();
    let mut names = vec!["lp__".to_string()];
    names.extend(model.layout().names().map(|s| s.to_string()));
    names.extend(model.generated_names());

    let mut eta = vec![0.0; dim];
    let mut zeta = vec![0.0; dim];
    let mut values = Vec::with_capacity(n * names.len());
    for _ in 0..n {
        standard_normal_vec(rng, &mut eta);
        q.transform(&eta, &mut zeta);
        let (constrained, _) = model.layout().constrain_vector(&zeta);
        values.push(model.logp_value(&zeta));
        values.extend_from_slice(&constrained);
        values.extend(model.generated(&constrained));
    }
    DrawMatrix::new(names, 1, n, values, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Real;
    use crate::models::ModelDef;
    use crate::transforms::{Constraint, ParameterLayout};

    struct StdNormal {
        layout: ParameterLayout,
    }

    impl StdNormal {
        fn new(dim: usize) -> Self {
            let mut layout = ParameterLayout::new();
            for i in 0..dim {
                layout.push(format!("x{i}"), Constraint::Free);
            }
            StdNormal { layout }
        }
    }

    impl ModelDef for StdNormal {
        fn name(&self) -> &'static str {
            "std_normal"
        }
        fn layout(&self) -> &ParameterLayout {
            &self.layout
        }
        fn logp<R: Real>(&self, z: &[R]) -> R {
            // Normalized density so the exact ELBO at q = target is 0.
            let mut lp = R::constant(-0.5 * (z.len() as f64) * crate::dist::LN_2PI);
            for zi in z {
                lp = lp - zi.square() * 0.5;
            }
            lp
        }
    }

    #[test]
    fn elbo_zero_at_exact_family() {
        let model = StdNormal::new(3);
        let q = FamilyParams::identity(Family::MeanField, 3);
        let n = 400;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let e = elbo_estimate(&model, &q, n, &mut rng);
        assert!(e.abs() < 3.0 / (n as f64).sqrt(), "elbo = {e}");
    }

    #[test]
    fn elbo_shifted_mean_is_half() {
        // KL(N(mu,I) || N(0,I)) = |mu|^2/2, so ELBO = -1/2 at mu = e1.
        let model = StdNormal::new(4);
        let mut q = FamilyParams::identity(Family::MeanField, 4);
        q.mu_mut()[0] = 1.0;
        let n = 1000;
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let e = elbo_estimate(&model, &q, n, &mut rng);
        assert!((e + 0.5).abs() < 3.0 / (n as f64).sqrt(), "elbo = {e}");
    }

    #[test]
    fn gradient_zero_at_optimum() {
        let model = StdNormal::new(2);
        let q = FamilyParams::identity(Family::MeanField, 2);
        let tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let reps = 10_000usize;
        let mut mean_grad = vec![0.0; 4];
        for _ in 0..reps {
            let g = elbo_gradient(&model, &tape, &q, 1, &mut rng);
            for (m, gi) in mean_grad.iter_mut().zip(&g) {
                *m += gi;
            }
        }
        for m in mean_grad.iter_mut() {
            *m /= reps as f64;
        }
        // SE of the mu components is 1/sqrt(reps); omega components have
        // variance 2 at the optimum.
        for (i, m) in mean_grad.iter().enumerate() {
            let se = (2.0f64 / reps as f64).sqrt();
            assert!(m.abs() < 4.0 * se, "coordinate {i}: mean grad {m}");
        }
    }

    #[test]
    fn quadratic_model_mu_gradient() {
        // lp = -(z-3)^2/2: dELBO/dmu = 3 - mu analytically.
        struct Shifted {
            layout: ParameterLayout,
        }
        impl ModelDef for Shifted {
            fn name(&self) -> &'static str {
                "shifted"
            }
            fn layout(&self) -> &ParameterLayout {
                &self.layout
            }
            fn logp<R: Real>(&self, z: &[R]) -> R {
                -((z[0] - 3.0).square() * 0.5)
            }
        }
        let mut layout = ParameterLayout::new();
        layout.push("x", Constraint::Free);
        let model = Shifted { layout };
        let q = FamilyParams::identity(Family::MeanField, 1);
        let tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let reps = 10_000usize;
        let mut acc = 0.0;
        for _ in 0..reps {
            acc += elbo_gradient(&model, &tape, &q, 1, &mut rng)[0];
        }
        let mean = acc / reps as f64;
        let se = 1.0 / (reps as f64).sqrt();
        assert!((mean - 3.0).abs() < 4.0 * se, "mean mu-grad = {mean}");
    }

    #[test]
    fn recovers_independent_normal() {
        // Target inside the family: means (1, -2), sds (0.5, 3).
        struct TwoNormal {
            layout: ParameterLayout,
        }
        impl ModelDef for TwoNormal {
            fn name(&self) -> &'static str {
                "two_normal"
            }
            fn layout(&self) -> &ParameterLayout {
                &self.layout
            }
            fn logp<R: Real>(&self, z: &[R]) -> R {
                crate::dist::normal_lpdf_fixed(z[0], 1.0, 0.5)
                    + crate::dist::normal_lpdf_fixed(z[1], -2.0, 3.0)
            }
        }
        let mut layout = ParameterLayout::new();
        layout.push("a", Constraint::Free);
        layout.push("b", Constraint::Free);
        let model = TwoNormal { layout };
        let config = AdviConfig {
            seed: 21,
            ..Default::default()
        };
        let result = optimize(&model, Family::MeanField, &config, None).unwrap();
        let (mu, sigma) = match &result.params {
            FamilyParams::MeanField(p) => (p.mu.clone(), p.sigma()),
            _ => unreachable!(),
        };
        assert!((mu[0] - 1.0).abs() < 0.05, "mu0 = {}", mu[0]);
        assert!((mu[1] + 2.0).abs() < 0.05 * 3.0, "mu1 = {}", mu[1]);
        assert!((sigma[0] - 0.5).abs() < 0.05 * 0.5, "sigma0 = {}", sigma[0]);
        assert!((sigma[1] - 3.0).abs() < 0.05 * 3.0, "sigma1 = {}", sigma[1]);
    }

    #[test]
    fn point_mass_draws_collapse() {
        let model = StdNormal::new(2);
        let q = FamilyParams::MeanField(MeanFieldParams {
            mu: vec![0.7, -0.3],
            omega: vec![1e-12f64.ln(); 2],
        });
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = draw_from_posterior(&model, &q, 50, &mut rng);
        let c0 = draws.col_index("x0").unwrap();
        for d in 0..draws.n_draws() {
            assert!((draws.value(0, d, c0) - 0.7).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let model = StdNormal::new(2);
        let config = AdviConfig {
            max_iter: 300,
            seed: 5,
            output_draws: 10,
            ..Default::default()
        };
        let a = optimize(&model, Family::MeanField, &config, None).unwrap();
        let b = optimize(&model, Family::MeanField, &config, None).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.elbo_trace, b.elbo_trace);
        assert_eq!(a.converged, b.converged);
        for d in 0..a.draws.n_draws() {
            for c in 0..a.draws.names().len() {
                assert_eq!(
                    a.draws.value(0, d, c).to_bits(),
                    b.draws.value(0, d, c).to_bits()
                );
            }
        }
    }
}
