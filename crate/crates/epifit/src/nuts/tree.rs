//! Leapfrog dynamics and the recursive trajectory doubling with multinomial
//! state selection.

use super::metric::MassMatrix;
use crate::autodiff::Tape;
use crate::models::Model;
use rand::Rng;

/// Position, momentum, cached gradient of the log-density, and its value.
#[derive(Clone, Debug)]
pub struct PhasePoint {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub gradient: Vec<f64>,
    pub lp: f64,
}

impl PhasePoint {
    pub fn hamiltonian(&self, metric: &MassMatrix) -> f64 {
        -self.lp + metric.kinetic(&self.momentum)
    }
}

/// One full leapfrog step: half-step momentum, full-step position, half-step
/// momentum; returns the updated gradient and log-density so the caller never
/// recomputes them.
pub fn leapfrog<M: Model + ?Sized>(
    model: &M,
    tape: &Tape,
    z: &PhasePoint,
    eps: f64,
    metric: &MassMatrix,
) -> PhasePoint {
    let dim = z.position.len();
    let half = 0.5 * eps;

    // p <- p - (eps/2) dV/dtheta, with dV/dtheta = -grad(lp).
    let mut p: Vec<f64> = z
        .momentum
        .iter()
        .zip(&z.gradient)
        .map(|(pi, gi)| pi + half * gi)
        .collect();

    // theta <- theta + eps M^-1 p
    let mut velocity = vec![0.0; dim];
    metric.inv_mul(&p, &mut velocity);
    let position: Vec<f64> = z
        .position
        .iter()
        .zip(&velocity)
        .map(|(ti, vi)| ti + eps * vi)
        .collect();

    let g = model.logp_gradient(tape, &position);
    for (pi, gi) in p.iter_mut().zip(&g.gradient) {
        *pi += half * gi;
    }
    PhasePoint {
        position,
        momentum: p,
        gradient: g.gradient,
        lp: g.value,
    }
}

/// Generalized U-turn test between the trajectory ends: continue only while
/// both end momenta point away from the spanned displacement under M^-1.
fn is_turning(metric: &MassMatrix, left: &PhasePoint, right: &PhasePoint) -> bool {
    let dim = left.position.len();
    let mut span = vec![0.0; dim];
    for i in 0..dim {
        span[i] = right.position[i] - left.position[i];
    }
    let mut v = vec![0.0; dim];
    metric.inv_mul(&left.momentum, &mut v);
    let forward: f64 = v.iter().zip(&span).map(|(a, b)| a * b).sum();
    if forward < 0.0 {
        return true;
    }
    metric.inv_mul(&right.momentum, &mut v);
    let backward: f64 = v.iter().zip(&span).map(|(a, b)| a * b).sum();
    backward < 0.0
}

/// Accumulated summary of a (sub)trajectory during doubling.
pub struct Subtree {
    pub leftmost: PhasePoint,
    pub rightmost: PhasePoint,
    /// Multinomially selected proposal from this subtree.
    pub proposal: PhasePoint,
    pub proposal_h: f64,
    pub log_sum_weight: f64,
    pub sum_accept: f64,
    pub n_leapfrog: u32,
    pub divergent: bool,
    pub turning: bool,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Build a subtree of 2^depth leapfrog states extending `from` in the given
/// direction. States are weighted by exp(h0 - H); subtrees that diverge or
/// turn are flagged and never sampled from by the caller.
#[allow(clippy::too_many_arguments)]
pub fn build_tree<M: Model + ?Sized, R: Rng>(
    model: &M,
    tape: &Tape,
    depth: u32,
    from: &PhasePoint,
    direction: f64,
    eps: f64,
    h0: f64,
    divergence_threshold: f64,
    metric: &MassMatrix,
    rng: &mut R,
) -> Subtree {
    if depth == 0 {
        let z = leapfrog(model, tape, from, direction * eps, metric);
        let h = z.hamiltonian(metric);
        let delta_h = h - h0;
        let divergent = !delta_h.is_finite() || delta_h > divergence_threshold;
        let log_weight = if delta_h.is_finite() { -delta_h } else { f64::NEG_INFINITY };
        let accept = if delta_h.is_finite() {
            (-delta_h).exp().min(1.0)
        } else {
            0.0
        };
        return Subtree {
            leftmost: z.clone(),
            rightmost: z.clone(),
            proposal_h: h,
            proposal: z,
            log_sum_weight: log_weight,
            sum_accept: accept,
            n_leapfrog: 1,
            divergent,
            turning: false,
        };
    }

    let inner = build_tree(
        model,
        tape,
        depth - 1,
        from,
        direction,
        eps,
        h0,
        divergence_threshold,
        metric,
        rng,
    );
    if inner.divergent || inner.turning {
        return inner;
    }
    let far_end = if direction > 0.0 {
        inner.rightmost.clone()
    } else {
        inner.leftmost.clone()
    };
    let outer = build_tree(
        model,
        tape,
        depth - 1,
        &far_end,
        direction,
        eps,
        h0,
        divergence_threshold,
        metric,
        rng,
    );

    let mut combined = Subtree {
        leftmost: if direction > 0.0 {
            inner.leftmost
        } else {
            outer.leftmost
        },
        rightmost: if direction > 0.0 {
            outer.rightmost
        } else {
            inner.rightmost
        },
        proposal: inner.proposal,
        proposal_h: inner.proposal_h,
        log_sum_weight: log_sum_exp(inner.log_sum_weight, outer.log_sum_weight),
        sum_accept: inner.sum_accept + outer.sum_accept,
        n_leapfrog: inner.n_leapfrog + outer.n_leapfrog,
        divergent: outer.divergent,
        turning: outer.turning,
    };
    if combined.divergent || combined.turning {
        return combined;
    }

    // Unbiased multinomial choice between the two halves of this doubling.
    let accept_outer = (outer.log_sum_weight - combined.log_sum_weight).exp();
    if rng.gen::<f64>() < accept_outer {
        combined.proposal = outer.proposal;
        combined.proposal_h = outer.proposal_h;
    }
    combined.turning = is_turning(metric, &combined.leftmost, &combined.rightmost);
    combined
}

/// Outcome of one NUTS transition, as stored per retained draw.
#[derive(Clone, Debug)]
pub struct Transition {
    pub end: PhasePoint,
    pub energy: f64,
    pub accept_stat: f64,
    pub treedepth: u32,
    pub divergent: bool,
    pub n_leapfrog: u32,
}

/// A full No-U-Turn transition from the current point: fresh momentum, then
/// trajectory doubling in random directions with progressive
/// (biased-toward-new-subtree) multinomial sampling, stopping on a U-turn,
/// a divergence, or at the maximum tree depth.
pub fn nuts_transition<M: Model + ?Sized, R: Rng>(
    model: &M,
    tape: &Tape,
    current: &PhasePoint,
    eps: f64,
    max_treedepth: u32,
    divergence_threshold: f64,
    metric: &MassMatrix,
    rng: &mut R,
) -> Transition {
    let momentum = metric.sample_momentum(rng);
    let start = PhasePoint {
        position: current.position.clone(),
        momentum,
        gradient: current.gradient.clone(),
        lp: current.lp,
    };
    let h0 = start.hamiltonian(metric);

    let mut left = start.clone();
    let mut right = start.clone();
    let mut selected = start.clone();
    let mut selected_h = h0;
    let mut log_sum_weight = 0.0f64;
    let mut sum_accept = 0.0f64;
    let mut n_leapfrog = 0u32;
    let mut divergent = false;
    let mut depth = 0u32;

    while depth < max_treedepth {
        let go_right = rng.gen::<bool>();
        let direction = if go_right { 1.0 } else { -1.0 };
        let from = if go_right { &right } else { &left };
        let subtree = build_tree(
            model,
            tape,
            depth,
            from,
            direction,
            eps,
            h0,
            divergence_threshold,
            metric,
            rng,
        );
        sum_accept += subtree.sum_accept;
        n_leapfrog += subtree.n_leapfrog;

        if subtree.divergent {
            divergent = true;
            break;
        }
        if subtree.turning {
            break;
        }

        // Biased progressive sampling: always take a heavier new subtree,
        // otherwise accept with the weight ratio.
        if subtree.log_sum_weight > log_sum_weight
            || rng.gen::<f64>() < (subtree.log_sum_weight - log_sum_weight).exp()
        {
            selected = subtree.proposal.clone();
            selected_h = subtree.proposal_h;
        }
        log_sum_weight = log_sum_exp(log_sum_weight, subtree.log_sum_weight);

        if go_right {
            right = subtree.rightmost;
        } else {
            left = subtree.leftmost;
        }
        depth += 1;

        if is_turning(metric, &left, &right) {
            break;
        }
    }

    let accept_stat = if n_leapfrog > 0 {
        sum_accept / n_leapfrog as f64
    } else {
        0.0
    };
    Transition {
        end: selected,
        energy: selected_h,
        accept_stat,
        treedepth: depth,
        divergent,
        n_leapfrog,
    }
}
