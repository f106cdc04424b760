//! The No-U-Turn sampler: leapfrog dynamics, recursive trajectory doubling
//! with multinomial selection, divergence detection, and warmup adaptation of
//! the step size (dual averaging) and the diagonal metric.

mod metric;
mod stepsize;
mod tree;

pub use metric::MassMatrix;
pub use stepsize::{find_reasonable_epsilon, DualAveragingState, WarmupSchedule};
pub use tree::{build_tree, leapfrog, nuts_transition, PhasePoint, Subtree, Transition};

use crate::autodiff::Tape;
use crate::diagnostics::{DrawMatrix, SamplerStats};
use crate::models::Model;
use metric::Welford;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Clone, Debug)]
pub struct NutsConfig {
    pub chains: usize,
    /// Warmup iterations, discarded from inference.
    pub warmup: usize,
    /// Total iterations per chain, including warmup.
    pub iter: usize,
    pub thin: usize,
    pub max_treedepth: u32,
    pub adapt_delta: f64,
    /// Transitions whose Hamiltonian drifts beyond this are divergent.
    pub divergence_threshold: f64,
    pub seed: u64,
    pub adapt_metric: bool,
    /// Reserved; dense metric adaptation is not implemented.
    pub dense_metric: bool,
    /// Fixes epsilon and disables dual averaging when set.
    pub fixed_step_size: Option<f64>,
    /// Auto-initialization draws unconstrained values uniformly in
    /// (-init_radius, init_radius).
    pub init_radius: f64,
}

impl Default for NutsConfig {
    fn default() -> Self {
        NutsConfig {
            chains: 4,
            warmup: 1000,
            iter: 2000,
            thin: 1,
            max_treedepth: 10,
            adapt_delta: 0.8,
            divergence_threshold: 1000.0,
            seed: 0,
            adapt_metric: true,
            dense_metric: false,
            fixed_step_size: None,
            init_radius: 2.0,
        }
    }
}

impl NutsConfig {
    pub fn validate(&self) -> Result<(), NutsError> {
        let err = |msg: &str| Err(NutsError::Config(msg.to_string()));
        if self.chains == 0 {
            return err("chains must be at least 1");
        }
        if self.iter <= self.warmup {
            return err("iter must exceed warmup");
        }
        if self.thin == 0 {
            return err("thin must be at least 1");
        }
        if !(self.adapt_delta > 0.0 && self.adapt_delta < 1.0) {
            return err("adapt_delta must lie in (0, 1)");
        }
        if self.dense_metric {
            return err("dense metric adaptation is reserved but not implemented");
        }
        Ok(())
    }

    /// Retained draws per chain: the first post-warmup draw is kept, then
    /// every thin-th draw.
    pub fn kept_per_chain(&self) -> usize {
        let post = self.iter - self.warmup;
        post.div_ceil(self.thin)
    }
}

#[derive(Debug, Error)]
pub enum NutsError {
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("failed to initialize model `{model}`: no finite log-density after {attempts} attempts")]
    Init { model: String, attempts: usize },
    #[error("invalid initial value: {0}")]
    BadInit(String),
}

/// Per-chain initial values on the constrained scale, by layout index.
/// Unlisted coordinates are drawn automatically.
#[derive(Clone, Debug, Default)]
pub enum ChainInit {
    #[default]
    Auto,
    Values(Vec<(usize, f64)>),
}

/// Everything a finished run reports: the retained draws plus the adapted
/// sampler state and any warnings raised during warmup.
#[derive(Debug)]
pub struct NutsRun {
    pub draws: DrawMatrix,
    pub step_sizes: Vec<f64>,
    pub metrics: Vec<MassMatrix>,
    pub warnings: Vec<String>,
}

/// One sampler chain: owns its tape, RNG stream, and adaptation state.
pub struct NutsChain<'m, M: Model + ?Sized> {
    model: &'m M,
    config: NutsConfig,
    rng: ChaCha8Rng,
    tape: Tape,
    current: PhasePoint,
    metric: MassMatrix,
    eps: f64,
    warnings: Vec<String>,
}

impl<'m, M: Model + ?Sized> NutsChain<'m, M> {
    /// Seeds the chain's RNG stream as (seed, chain index) and finds a
    /// starting point with finite log-density and gradient.
    pub fn new(
        model: &'m M,
        config: &NutsConfig,
        chain_index: usize,
        init: &ChainInit,
    ) -> Result<Self, NutsError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(chain_index as u64);
        let tape = Tape::new();
        let dim = model.dim();

        let mut pinned: Vec<Option<f64>> = vec![None; dim];
        if let ChainInit::Values(values) = init {
            for (idx, x) in values {
                let c = model.layout().constraint(*idx);
                let z = crate::transforms::unconstrain(*x, c)
                    .map_err(|e| NutsError::BadInit(e.to_string()))?;
                pinned[*idx] = Some(z);
            }
        }
        let fully_pinned = pinned.iter().all(|p| p.is_some());

        let attempts = 100usize;
        let mut current = None;
        for _ in 0..attempts {
            let position: Vec<f64> = pinned
                .iter()
                .map(|p| {
                    p.unwrap_or_else(|| rng.gen_range(-config.init_radius..config.init_radius))
                })
                .collect();
            let g = model.logp_gradient(&tape, &position);
            if g.is_finite() {
                current = Some(PhasePoint {
                    momentum: vec![0.0; dim],
                    gradient: g.gradient,
                    lp: g.value,
                    position,
                });
                break;
            }
            if fully_pinned {
                break;
            }
        }
        let current = current.ok_or_else(|| NutsError::Init {
            model: model.name().to_string(),
            attempts,
        })?;

        Ok(NutsChain {
            model,
            config: config.clone(),
            rng,
            tape,
            current,
            metric: MassMatrix::identity(dim),
            eps: 1.0,
            warnings: Vec::new(),
        })
    }

    pub fn step_size(&self) -> f64 {
        self.eps
    }

    pub fn metric(&self) -> &MassMatrix {
        &self.metric
    }

    pub fn position(&self) -> &[f64] {
        &self.current.position
    }

    fn reinit_step_size(&mut self) -> f64 {
        find_reasonable_epsilon(
            self.model,
            &self.tape,
            &self.current.position,
            self.current.lp,
            &self.current.gradient,
            &self.metric,
            &mut self.rng,
        )
    }

    /// Warmup with dual averaging toward adapt_delta and windowed estimation
    /// of the diagonal metric. Freezes epsilon at the averaged value.
    pub fn run_warmup(&mut self) {
        let n_warmup = self.config.warmup;
        let adapt_step = self.config.fixed_step_size.is_none();
        if let Some(fixed) = self.config.fixed_step_size {
            self.eps = fixed;
        } else {
            self.eps = self.reinit_step_size();
        }
        if n_warmup == 0 {
            return;
        }
        let mut schedule = WarmupSchedule::new(n_warmup, self.config.adapt_metric);
        if self.config.adapt_metric && !schedule.metric_enabled {
            self.warnings.push(format!(
                "warmup of {n_warmup} is too short for metric adaptation (need at least {}); metric stays identity",
                WarmupSchedule::INIT_BUFFER + WarmupSchedule::BASE_WINDOW + WarmupSchedule::TERM_BUFFER
            ));
        }
        let mut da = DualAveragingState::new(self.eps, self.config.adapt_delta);
        let mut welford = Welford::new(self.model.dim());

        for m in 0..n_warmup {
            let tr = self.transition();
            self.current = tr.end;
            if adapt_step {
                da.update(tr.accept_stat);
                self.eps = da.current();
            }
            if schedule.in_slow_window(m) {
                welford.push(&self.current.position);
            }
            if schedule.window_end(m) {
                self.metric = MassMatrix::diagonal(welford.regularized_variance());
                welford.reset();
                schedule.advance_window();
                if adapt_step {
                    self.eps = self.reinit_step_size();
                    da = DualAveragingState::new(self.eps, self.config.adapt_delta);
                }
            }
        }
        if adapt_step {
            self.eps = da.adapted();
        }
    }

    /// One NUTS transition at the chain's current step size and metric.
    pub fn transition(&mut self) -> Transition {
        nuts_transition(
            self.model,
            &self.tape,
            &self.current,
            self.eps,
            self.config.max_treedepth,
            self.config.divergence_threshold,
            &self.metric,
            &mut self.rng,
        )
    }

    fn advance(&mut self) -> Transition {
        let tr = self.transition();
        self.current = tr.end.clone();
        tr
    }
}

/// Run the warmup phase only and report the adapted step size and metric.
pub fn adapt_warmup<M: Model + ?Sized>(
    model: &M,
    config: &NutsConfig,
    chain_index: usize,
) -> Result<(f64, MassMatrix), NutsError> {
    config.validate()?;
    let mut chain = NutsChain::new(model, config, chain_index, &ChainInit::Auto)?;
    chain.run_warmup();
    Ok((chain.eps, chain.metric.clone()))
}

struct ChainOutput {
    values: Vec<f64>,
    divergent: Vec<bool>,
    treedepth: Vec<u32>,
    energy: Vec<f64>,
    accept_stat: Vec<f64>,
    step_size: f64,
    metric: MassMatrix,
    warnings: Vec<String>,
}

fn run_chain<M: Model + ?Sized>(
    model: &M,
    config: &NutsConfig,
    chain_index: usize,
    init: &ChainInit,
) -> Result<ChainOutput, NutsError> {
    let mut chain = NutsChain::new(model, config, chain_index, init)?;
    chain.run_warmup();

    let n_post = config.iter - config.warmup;
    let kept = config.kept_per_chain();
    let n_cols = 1 + model.dim() + model.generated_names().len();
    let mut out = ChainOutput {
        values: Vec::with_capacity(kept * n_cols),
        divergent: Vec::with_capacity(kept),
        treedepth: Vec::with_capacity(kept),
        energy: Vec::with_capacity(kept),
        accept_stat: Vec::with_capacity(kept),
        step_size: chain.eps,
        metric: chain.metric.clone(),
        warnings: Vec::new(),
    };
    for i in 0..n_post {
        let tr = chain.advance();
        if i % config.thin != 0 {
            continue;
        }
        let (constrained, _) = model.layout().constrain_vector(&chain.current.position);
        let generated = model.generated(&constrained);
        out.values.push(chain.current.lp);
        out.values.extend_from_slice(&constrained);
        out.values.extend_from_slice(&generated);
        out.divergent.push(tr.divergent);
        out.treedepth.push(tr.treedepth);
        out.energy.push(tr.energy);
        out.accept_stat.push(tr.accept_stat);
    }
    out.warnings = chain.warnings;
    Ok(out)
}

/// Run all chains and merge the retained draws in chain order.
///
/// Chains are embarrassingly parallel; each owns its tape, RNG stream
/// (derived as stream(seed, chain index)), and adaptation state. `inits`
/// may be empty (all chains auto-initialize) or hold one entry per chain.
pub fn sample<M: Model + ?Sized>(
    model: &M,
    config: &NutsConfig,
    inits: &[ChainInit],
) -> Result<NutsRun, NutsError> {
    config.validate()?;
    if !inits.is_empty() && inits.len() != config.chains {
        return Err(NutsError::Config(format!(
            "got {} inits for {} chains",
            inits.len(),
            config.chains
        )));
    }
    let auto = ChainInit::Auto;
    let init_for = |c: usize| -> &ChainInit {
        if inits.is_empty() {
            &auto
        } else {
            &inits[c]
        }
    };

    let outputs: Result<Vec<ChainOutput>, NutsError> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(model, config, c, init_for(c)))
        .collect();
    let outputs = outputs?;

    let mut names = vec!["lp__".to_string()];
    names.extend(model.layout().names().map(|s| s.to_string()));
    names.extend(model.generated_names());

    let kept = config.kept_per_chain();
    let mut values = Vec::with_capacity(config.chains * kept * names.len());
    let mut stats = SamplerStats::default();
    let mut step_sizes = Vec::with_capacity(config.chains);
    let mut metrics = Vec::with_capacity(config.chains);
    let mut warnings = Vec::new();
    for out in outputs {
        values.extend(out.values);
        stats.divergent.extend(out.divergent);
        stats.treedepth.extend(out.treedepth);
        stats.energy.extend(out.energy);
        stats.accept_stat.extend(out.accept_stat);
        step_sizes.push(out.step_size);
        metrics.push(out.metric);
        for w in out.warnings {
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
    }
    let draws = DrawMatrix::new(names, config.chains, kept, values, Some(stats));
    Ok(NutsRun {
        draws,
        step_sizes,
        metrics,
        warnings,
    })
}
