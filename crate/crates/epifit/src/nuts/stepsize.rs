//! Dual-averaging step-size adaptation toward a target acceptance statistic,
//! plus the reasonable-first-step search run before adaptation starts.

use super::metric::MassMatrix;
use super::tree::{leapfrog, PhasePoint};
use crate::autodiff::Tape;
use crate::models::Model;
use rand::Rng;

/// Nesterov dual-averaging state for log epsilon.
#[derive(Clone, Debug)]
pub struct DualAveragingState {
    mu: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    counter: u64,
    pub gamma: f64,
    pub t0: f64,
    pub kappa: f64,
    pub delta: f64,
}

impl DualAveragingState {
    /// `mu` anchors the shrinkage at log(10 * eps0).
    pub fn new(eps0: f64, delta: f64) -> Self {
        DualAveragingState {
            mu: (10.0 * eps0).ln(),
            log_eps: eps0.ln(),
            log_eps_bar: 0.0,
            h_bar: 0.0,
            counter: 0,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            delta,
        }
    }

    pub fn update(&mut self, accept_stat: f64) {
        let alpha = if accept_stat.is_finite() {
            accept_stat.clamp(0.0, 1.0)
        } else {
            0.0
        };
        self.counter += 1;
        let m = self.counter as f64;
        let w = 1.0 / (m + self.t0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.delta - alpha);
        self.log_eps = self.mu - m.sqrt() / self.gamma * self.h_bar;
        let mk = m.powf(-self.kappa);
        self.log_eps_bar = mk * self.log_eps + (1.0 - mk) * self.log_eps_bar;
    }

    /// Step size used while adaptation is running.
    pub fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    /// Smoothed step size; epsilon is frozen at this value after warmup.
    pub fn adapted(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Double or halve a unit step until a single leapfrog crosses 50%
/// acceptance, starting the dual-averaging scheme near a usable scale.
pub fn find_reasonable_epsilon<M: Model + ?Sized, R: Rng>(
    model: &M,
    tape: &Tape,
    position: &[f64],
    lp: f64,
    gradient: &[f64],
    metric: &MassMatrix,
    rng: &mut R,
) -> f64 {
    let mut eps = 1.0f64;
    let p = metric.sample_momentum(rng);
    let h0 = -lp + metric.kinetic(&p);
    let z = PhasePoint {
        position: position.to_vec(),
        momentum: p,
        gradient: gradient.to_vec(),
        lp,
    };

    let log_ratio = |eps: f64| -> f64 {
        let z1 = leapfrog(model, tape, &z, eps, metric);
        let h1 = -z1.lp + metric.kinetic(&z1.momentum);
        if h1.is_finite() {
            h0 - h1
        } else {
            f64::NEG_INFINITY
        }
    };

    let mut ratio = log_ratio(eps);
    let half_log = 0.5f64.ln();
    let dir: f64 = if ratio > half_log { 1.0 } else { -1.0 };
    for _ in 0..100 {
        if dir * ratio <= dir * half_log {
            break;
        }
        eps *= 2.0f64.powf(dir);
        if !(1e-10..=1e7).contains(&eps) {
            break;
        }
        ratio = log_ratio(eps);
    }
    eps.clamp(1e-10, 1e7)
}

/// Three-phase warmup: a fast start interval adapting only the step size,
/// expanding slow windows that feed the metric, and a fast terminal interval
/// re-tuning the step size against the final metric.
#[derive(Clone, Debug)]
pub struct WarmupSchedule {
    pub init_buffer: usize,
    pub term_buffer: usize,
    window_size: usize,
    next_window: usize,
    n_warmup: usize,
    pub metric_enabled: bool,
}

impl WarmupSchedule {
    pub const INIT_BUFFER: usize = 75;
    pub const TERM_BUFFER: usize = 50;
    pub const BASE_WINDOW: usize = 25;

    /// Metric adaptation needs at least init + base + term = 150 warmup
    /// iterations; below that the metric stays identity.
    pub fn new(n_warmup: usize, adapt_metric: bool) -> Self {
        let metric_enabled = adapt_metric
            && n_warmup >= Self::INIT_BUFFER + Self::BASE_WINDOW + Self::TERM_BUFFER;
        WarmupSchedule {
            init_buffer: Self::INIT_BUFFER,
            term_buffer: Self::TERM_BUFFER,
            window_size: Self::BASE_WINDOW,
            next_window: Self::INIT_BUFFER + Self::BASE_WINDOW - 1,
            n_warmup,
            metric_enabled,
        }
    }

    /// Is warmup iteration `m` (0-based) inside a slow metric window?
    pub fn in_slow_window(&self, m: usize) -> bool {
        self.metric_enabled && m >= self.init_buffer && m + self.term_buffer < self.n_warmup
    }

    /// True when iteration `m` is the last of the current slow window, i.e.
    /// the point at which the metric is re-estimated.
    pub fn window_end(&self, m: usize) -> bool {
        self.in_slow_window(m) && m == self.next_window
    }

    /// Advance to the next (doubled) window; the last window stretches to
    /// the end of the slow phase rather than leaving a short remainder.
    pub fn advance_window(&mut self) {
        let last_slow = self.n_warmup - self.term_buffer - 1;
        if self.next_window == last_slow {
            // Sentinel past the slow phase: no further window ends.
            self.next_window = self.n_warmup;
            return;
        }
        self.window_size *= 2;
        self.next_window += self.window_size;
        if self.next_window != last_slow {
            let following = self.next_window + 2 * self.window_size;
            if following + self.term_buffer >= self.n_warmup {
                self.next_window = last_slow;
            }
        }
    }
}
