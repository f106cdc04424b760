//! Adaptive Runge-Kutta 4(5) (Dormand-Prince) integration for non-stiff
//! systems.
//!
//! The integrator is generic over [`Real`]: with `f64` state it is a plain
//! fast solver; with tape scalars the solution carries exact gradients with
//! respect to the initial state and parameters through every accepted step.
//! The step-size controller reads primal values only, so identical inputs
//! take identical step sequences regardless of the scalar type.

use crate::autodiff::Real;
use thiserror::Error;

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// b - b_hat: weights of the embedded error estimate.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// Continuous-extension coefficients (order-4 interpolant).
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const MIN_SCALE: f64 = 0.2;
const MAX_SCALE: f64 = 10.0;
const SAFETY: f64 = 0.9;

/// Right-hand side of an ODE system: dy/dt = rhs(t, y, theta).
///
/// The generic method keeps a single definition usable both for primal
/// solves and for tape-recorded solves.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs<R: Real>(&self, t: f64, y: &[R], theta: &[R], dydt: &mut [R]);
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    /// `None` selects the starting step automatically from the right-hand
    /// side magnitude (Hairer-Norsett-Wanner heuristic).
    pub initial_step: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rel_tol: 1e-6,
            abs_tol: 1e-6,
            max_steps: 100_000,
            initial_step: None,
        }
    }
}

/// States at the requested output times, one row per time.
#[derive(Clone, Debug)]
pub struct OdeSolution<R> {
    pub times: Vec<f64>,
    pub states: Vec<Vec<R>>,
}

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("step count exceeded max_steps; integration reached t = {t_reached} (stiff system? try a smaller time span)")]
    MaxStepsExceeded { t_reached: f64 },
    #[error("non-finite right-hand side at t = {t}")]
    NonFiniteRhs { t: f64 },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("invalid integration input: {0}")]
    BadInput(String),
}

fn validate_times(t0: f64, ts: &[f64]) -> Result<(), OdeError> {
    if ts.is_empty() {
        return Err(OdeError::BadInput("no output times requested".into()));
    }
    if !(ts[0] > t0) {
        return Err(OdeError::BadInput(format!(
            "first output time {} must be greater than t0 = {}",
            ts[0], t0
        )));
    }
    if ts.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(OdeError::BadInput(
            "output times must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Scratch buffers for one integration; reused across steps.
struct Workspace<R> {
    k: [Vec<R>; 7],
    y_stage: Vec<R>,
    y_next: Vec<R>,
    rcont: [Vec<R>; 5],
}

impl<R: Real> Workspace<R> {
    fn new(dim: usize) -> Self {
        let z = || vec![R::constant(0.0); dim];
        Workspace {
            k: [z(), z(), z(), z(), z(), z(), z()],
            y_stage: z(),
            y_next: z(),
            rcont: [z(), z(), z(), z(), z()],
        }
    }
}

fn rms_scaled(err: &[f64], scale: &[f64]) -> f64 {
    let n = err.len() as f64;
    (err.iter()
        .zip(scale)
        .map(|(e, s)| (e / s) * (e / s))
        .sum::<f64>()
        / n)
        .sqrt()
}

/// Automatic initial step selection on the primal values.
fn initial_step<S: OdeSystem>(
    system: &S,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    theta: &[f64],
    t_end: f64,
    cfg: &SolverConfig,
) -> f64 {
    let dim = y0.len();
    let scale: Vec<f64> = y0
        .iter()
        .map(|y| cfg.abs_tol + cfg.rel_tol * y.abs())
        .collect();
    let d0 = rms_scaled(y0, &scale);
    let d1 = rms_scaled(f0, &scale);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(t_end - t0);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; dim];
    system.rhs(t0 + h0, &y1, theta, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms_scaled(&diff, &scale) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(t_end - t0)
}

/// Integrate from `(t0, y0)` and report states at each time in `ts`.
///
/// Accepted steps satisfy the embedded-error criterion
/// `err <= abs_tol + rel_tol * |y|` componentwise (RMS norm); output times
/// interior to a step are filled by the solver's continuous extension.
pub fn integrate_rk45<S: OdeSystem, R: Real>(
    system: &S,
    y0: &[R],
    t0: f64,
    ts: &[f64],
    theta: &[R],
    cfg: &SolverConfig,
) -> Result<OdeSolution<R>, OdeError> {
    validate_times(t0, ts)?;
    let dim = system.dim();
    assert_eq!(y0.len(), dim, "initial state length must equal system dim");
    if y0.iter().any(|v| !v.value().is_finite()) {
        return Err(OdeError::BadInput("non-finite initial state".into()));
    }
    let t_end = *ts.last().unwrap();

    let mut ws = Workspace::<R>::new(dim);
    let mut y: Vec<R> = y0.to_vec();
    let mut t = t0;

    // FSAL: k1 holds f(t, y) across steps.
    system.rhs(t, &y, theta, &mut ws.k[0]);
    if ws.k[0].iter().any(|v| !v.value().is_finite()) {
        return Err(OdeError::NonFiniteRhs { t });
    }

    let mut h = match cfg.initial_step {
        Some(h) => h.min(t_end - t0),
        None => {
            let y_p: Vec<f64> = y.iter().map(|v| v.value()).collect();
            let f_p: Vec<f64> = ws.k[0].iter().map(|v| v.value()).collect();
            let th_p: Vec<f64> = theta.iter().map(|v| v.value()).collect();
            initial_step(system, t0, &y_p, &f_p, &th_p, t_end, cfg)
        }
    };

    let mut states: Vec<Vec<R>> = Vec::with_capacity(ts.len());
    let mut out_idx = 0usize;
    let mut steps = 0usize;
    let mut just_rejected = false;

    while out_idx < ts.len() {
        if steps >= cfg.max_steps {
            return Err(OdeError::MaxStepsExceeded { t_reached: t });
        }
        steps += 1;
        if t + h > t_end {
            h = t_end - t;
        }
        if h <= f64::EPSILON * 16.0 * t.abs().max(1.0) {
            return Err(OdeError::StepUnderflow { t });
        }

        // Stages 2..7; stage 7 state is the 5th-order solution (FSAL).
        for s in 1..7 {
            for i in 0..dim {
                let mut acc = ws.k[0][i] * (A[s - 1][0] * h);
                for (j, kj) in ws.k.iter().enumerate().take(s).skip(1) {
                    let a = A[s - 1][j];
                    if a != 0.0 {
                        acc = acc + kj[i] * (a * h);
                    }
                }
                ws.y_stage[i] = y[i] + acc;
            }
            if s == 6 {
                ws.y_next.clone_from_slice(&ws.y_stage);
            }
            let (head, tail) = ws.k.split_at_mut(s);
            let _ = head;
            system.rhs(t + C[s] * h, &ws.y_stage, theta, &mut tail[0]);
        }
        if ws.k.iter().any(|k| k.iter().any(|v| !v.value().is_finite())) {
            return Err(OdeError::NonFiniteRhs { t: t + h });
        }

        // Embedded error estimate on primal values.
        let mut err_vec = vec![0.0f64; dim];
        let mut scale = vec![0.0f64; dim];
        for i in 0..dim {
            let mut e = 0.0;
            for (s, es) in E.iter().enumerate() {
                e += es * ws.k[s][i].value();
            }
            err_vec[i] = h * e;
            scale[i] = cfg.abs_tol + cfg.rel_tol * y[i].value().abs().max(ws.y_next[i].value().abs());
        }
        let err = rms_scaled(&err_vec, &scale);

        if err.is_finite() && err <= 1.0 {
            let t_new = t + h;
            let step_end_tol = 1e-9 * t_new.abs().max(1.0);
            let mut dense_ready = false;
            while out_idx < ts.len() && ts[out_idx] <= t_new + step_end_tol {
                let t_out = ts[out_idx];
                if (t_out - t_new).abs() <= step_end_tol {
                    states.push(ws.y_next.clone());
                } else {
                    if !dense_ready {
                        prepare_dense(&mut ws, &y, h);
                        dense_ready = true;
                    }
                    let theta_frac = ((t_out - t) / h).clamp(0.0, 1.0);
                    states.push(eval_dense(&ws, theta_frac));
                }
                out_idx += 1;
            }
            std::mem::swap(&mut y, &mut ws.y_next);
            let (k1, k7) = {
                let (head, tail) = ws.k.split_at_mut(6);
                (&mut head[0], &tail[0])
            };
            k1.clone_from_slice(k7);
            t = t_new;

            let mut scale_fac = SAFETY * err.powf(-0.2);
            scale_fac = scale_fac.clamp(MIN_SCALE, MAX_SCALE);
            if just_rejected {
                scale_fac = scale_fac.min(1.0);
            }
            h *= scale_fac;
            just_rejected = false;
        } else {
            let scale_fac = if err.is_finite() {
                (SAFETY * err.powf(-0.2)).clamp(MIN_SCALE, 1.0)
            } else {
                MIN_SCALE
            };
            h *= scale_fac;
            just_rejected = true;
        }
    }

    Ok(OdeSolution {
        times: ts.to_vec(),
        states,
    })
}

fn prepare_dense<R: Real>(ws: &mut Workspace<R>, y: &[R], h: f64) {
    let dim = y.len();
    for i in 0..dim {
        let ydiff = ws.y_next[i] - y[i];
        let bspl = ws.k[0][i] * h - ydiff;
        ws.rcont[0][i] = y[i];
        ws.rcont[1][i] = ydiff;
        ws.rcont[2][i] = bspl;
        ws.rcont[3][i] = ydiff - ws.k[6][i] * h - bspl;
        let mut acc = ws.k[0][i] * D[0];
        for (s, ds) in D.iter().enumerate().skip(2) {
            acc = acc + ws.k[s][i] * *ds;
        }
        ws.rcont[4][i] = acc * h;
    }
}

fn eval_dense<R: Real>(ws: &Workspace<R>, theta: f64) -> Vec<R> {
    let one_m = 1.0 - theta;
    ws.rcont[0]
        .iter()
        .zip(&ws.rcont[1])
        .zip(&ws.rcont[2])
        .zip(&ws.rcont[3])
        .zip(&ws.rcont[4])
        .map(|((((r0, r1), r2), r3), r4)| {
            let inner = *r3 + *r4 * one_m;
            *r0 + (*r1 + (*r2 + inner * theta) * one_m) * theta
        })
        .collect()
}

/// Integrate over consecutive segments, zeroing the masked components at the
/// start of each segment. Masked components therefore report within-segment
/// cumulative increments at each boundary; unmasked components are continuous.
pub fn integrate_piecewise_with_resets<S: OdeSystem, R: Real>(
    system: &S,
    y0: &[R],
    t0: f64,
    boundaries: &[f64],
    reset_mask: &[bool],
    theta: &[R],
    cfg: &SolverConfig,
) -> Result<Vec<Vec<R>>, OdeError> {
    validate_times(t0, boundaries)?;
    assert_eq!(reset_mask.len(), system.dim());
    let mut segment_ends = Vec::with_capacity(boundaries.len());
    let mut state: Vec<R> = y0.to_vec();
    let mut t_start = t0;
    for &b in boundaries {
        for (s, masked) in state.iter_mut().zip(reset_mask) {
            if *masked {
                *s = R::constant(0.0);
            }
        }
        let sol = integrate_rk45(system, &state, t_start, &[b], theta, cfg)?;
        state = sol.states.into_iter().next().unwrap();
        segment_ends.push(state.clone());
        t_start = b;
    }
    Ok(segment_ends)
}
