//! Reverse-mode automatic differentiation over a recorded operation tape.
//!
//! A [`Tape`] records every primitive operation performed on [`Var`] values
//! during a forward evaluation. A reverse sweep then accumulates adjoints in
//! one pass, yielding the exact gradient of a scalar output with respect to
//! every input. One tape serves one evaluation context; it is reused across
//! evaluations by truncation ([`Tape::reset`]).
//!
//! The [`Real`] trait abstracts over plain `f64` and [`Var`], so the same
//! model code produces either a fast primal value or a differentiable record.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::special::{digamma, lgamma, trigamma};

const CONST_ID: u32 = u32::MAX;

/// One recorded operation: up to two parents with local partial derivatives.
///
/// Unary operations store the same parent twice with a zero second partial,
/// keeping the reverse sweep branch-free.
#[derive(Clone, Copy)]
struct Node {
    p0: u32,
    p1: u32,
    d0: f64,
    d1: f64,
}

/// Append-only record of primitive operations in topological order.
///
/// Single-writer by construction: each worker (chain, optimizer) owns its own
/// tape. Interior mutability keeps `Var` arithmetic ergonomic without
/// threading `&mut` through every expression.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    /// Number of recorded nodes. Deterministic for a fixed evaluation path.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Truncate the tape so it can be reused for the next evaluation.
    /// Capacity is kept, so steady-state evaluations do not allocate.
    pub fn reset(&self) {
        self.nodes.borrow_mut().clear();
    }

    /// Register an input variable (a leaf node with zero local partials).
    pub fn input(&self, value: f64) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len() as u32;
        nodes.push(Node {
            p0: id,
            p1: id,
            d0: 0.0,
            d1: 0.0,
        });
        Var {
            tape: Some(self),
            value,
            id,
        }
    }

    /// Register a slice of inputs in order.
    pub fn inputs(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.input(v)).collect()
    }

    fn push(&self, p0: u32, d0: f64, p1: u32, d1: f64) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len() as u32;
        nodes.push(Node { p0, p1, d0, d1 });
        id
    }

    /// Reverse sweep from `output`, returning the adjoints of `inputs`.
    ///
    /// The sweep allocates a fresh adjoint buffer (all zeros) each call, so
    /// repeated sweeps over the same recording give identical results.
    pub fn gradient(&self, output: Var<'_>, inputs: &[Var<'_>]) -> Vec<f64> {
        if output.id == CONST_ID {
            return vec![0.0; inputs.len()];
        }
        let nodes = self.nodes.borrow();
        let mut adjoint = vec![0.0f64; output.id as usize + 1];
        adjoint[output.id as usize] = 1.0;
        for i in (0..=output.id as usize).rev() {
            let a = adjoint[i];
            if a != 0.0 {
                let n = nodes[i];
                adjoint[n.p0 as usize] += n.d0 * a;
                adjoint[n.p1 as usize] += n.d1 * a;
            }
        }
        inputs
            .iter()
            .map(|v| {
                if v.id == CONST_ID {
                    0.0
                } else {
                    adjoint[v.id as usize]
                }
            })
            .collect()
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

/// Value plus gradient of a scalar function of a real vector.
#[derive(Clone, Debug)]
pub struct GradientResult {
    pub value: f64,
    pub gradient: Vec<f64>,
}

impl GradientResult {
    /// True when the value and every gradient entry are finite. Domain
    /// violations in a primitive propagate non-finite entries here rather
    /// than being clamped.
    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.gradient.iter().all(|g| g.is_finite())
    }
}

/// Evaluate `f` at `x` with one forward record and one reverse sweep.
/// The tape is reset afterwards; gradient length always equals `x.len()`.
pub fn eval_with_gradient<F>(tape: &Tape, f: F, x: &[f64]) -> GradientResult
where
    F: for<'t> FnOnce(&[Var<'t>]) -> Var<'t>,
{
    tape.reset();
    let vars = tape.inputs(x);
    let out = f(&vars);
    let gradient = tape.gradient(out, &vars);
    let value = out.value;
    tape.reset();
    GradientResult { value, gradient }
}

/// A scalar recorded on a [`Tape`]. Copy; arithmetic records nodes.
///
/// Constants (from [`Real::constant`] or mixed `f64` arithmetic) carry no
/// tape and record nothing until combined with a taped value.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    value: f64,
    id: u32,
}

impl<'t> Var<'t> {
    /// A tapeless constant; participates in arithmetic without recording.
    pub fn constant(value: f64) -> Self {
        Var {
            tape: None,
            value,
            id: CONST_ID,
        }
    }

    pub fn value(self) -> f64 {
        self.value
    }

    fn is_const(self) -> bool {
        self.id == CONST_ID
    }

    fn unary(self, value: f64, d: f64) -> Self {
        match self.tape {
            None => Var::constant(value),
            Some(tape) => {
                let id = tape.push(self.id, d, self.id, 0.0);
                Var {
                    tape: Some(tape),
                    value,
                    id,
                }
            }
        }
    }

    fn binary(a: Var<'t>, b: Var<'t>, value: f64, da: f64, db: f64) -> Var<'t> {
        let tape = match a.tape.or(b.tape) {
            None => return Var::constant(value),
            Some(t) => t,
        };
        let (p0, d0) = if a.is_const() { (b.id, 0.0) } else { (a.id, da) };
        let (p1, d1) = if b.is_const() { (p0, 0.0) } else { (b.id, db) };
        let id = tape.push(p0, d0, p1, d1);
        Var {
            tape: Some(tape),
            value,
            id,
        }
    }
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({})", self.value)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        Var::binary(self, rhs, self.value + rhs.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        Var::binary(self, rhs, self.value - rhs.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        Var::binary(self, rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self {
        let v = self.value / rhs.value;
        Var::binary(self, rhs, v, 1.0 / rhs.value, -v / rhs.value)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.unary(-self.value, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Self {
        self.unary(self.value + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Self {
        self.unary(self.value - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Self {
        self.unary(self.value * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Self {
        self.unary(self.value / rhs, 1.0 / rhs)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        rhs + self
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        rhs.unary(self - rhs.value, -1.0)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        rhs * self
    }
}

impl<'t> Div<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let v = self / rhs.value;
        rhs.unary(v, -v / rhs.value)
    }
}

/// Scalar abstraction shared by `f64` (primal) and [`Var`] (taped).
///
/// The primitive set is exactly what the model log-densities need; each taped
/// primitive records its local partials. Out-of-domain operands propagate
/// non-finite values, never clamped results.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + std::fmt::Debug
{
    fn constant(c: f64) -> Self;
    fn value(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn ln_1p(self) -> Self;
    fn sqrt(self) -> Self;
    /// Power with a constant exponent.
    fn powf(self, e: f64) -> Self;
    /// Power with a variable exponent.
    fn pow(self, e: Self) -> Self;
    fn recip(self) -> Self;
    /// Standard logistic 1 / (1 + e^{-x}).
    fn logistic(self) -> Self;
    fn lgamma(self) -> Self;
    fn digamma(self) -> Self;
    /// Fused log(e^a + e^b), stable for widely separated magnitudes.
    fn log_sum_exp(self, other: Self) -> Self;
    fn square(self) -> Self {
        self * self
    }
}

impl Real for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn value(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn ln_1p(self) -> Self {
        f64::ln_1p(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powf(self, e: f64) -> Self {
        f64::powf(self, e)
    }
    fn pow(self, e: Self) -> Self {
        f64::powf(self, e)
    }
    fn recip(self) -> Self {
        1.0 / self
    }
    fn logistic(self) -> Self {
        if self >= 0.0 {
            1.0 / (1.0 + (-self).exp())
        } else {
            let e = self.exp();
            e / (1.0 + e)
        }
    }
    fn lgamma(self) -> Self {
        lgamma(self)
    }
    fn digamma(self) -> Self {
        digamma(self)
    }
    fn log_sum_exp(self, other: Self) -> Self {
        let m = self.max(other);
        if m == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        m + ((self - m).exp() + (other - m).exp()).ln()
    }
}

impl<'t> Real for Var<'t> {
    fn constant(c: f64) -> Self {
        Var::constant(c)
    }
    fn value(self) -> f64 {
        self.value
    }
    fn exp(self) -> Self {
        let v = self.value.exp();
        self.unary(v, v)
    }
    fn ln(self) -> Self {
        self.unary(self.value.ln(), 1.0 / self.value)
    }
    fn ln_1p(self) -> Self {
        self.unary(self.value.ln_1p(), 1.0 / (1.0 + self.value))
    }
    fn sqrt(self) -> Self {
        let v = self.value.sqrt();
        self.unary(v, 0.5 / v)
    }
    fn powf(self, e: f64) -> Self {
        // At the domain edge x = 0 the recorded partial is the one-sided
        // limit from the positive side, e * x^(e-1).
        self.unary(self.value.powf(e), e * self.value.powf(e - 1.0))
    }
    fn pow(self, e: Self) -> Self {
        let v = self.value.powf(e.value);
        Var::binary(
            self,
            e,
            v,
            e.value * self.value.powf(e.value - 1.0),
            v * self.value.ln(),
        )
    }
    fn recip(self) -> Self {
        let v = 1.0 / self.value;
        self.unary(v, -v * v)
    }
    fn logistic(self) -> Self {
        let s = Real::logistic(self.value);
        self.unary(s, s * (1.0 - s))
    }
    fn lgamma(self) -> Self {
        self.unary(lgamma(self.value), digamma(self.value))
    }
    fn digamma(self) -> Self {
        self.unary(digamma(self.value), trigamma(self.value))
    }
    fn log_sum_exp(self, other: Self) -> Self {
        let m = self.value.max(other.value);
        if m == f64::NEG_INFINITY {
            return Var::binary(self, other, f64::NEG_INFINITY, 0.0, 0.0);
        }
        let v = m + ((self.value - m).exp() + (other.value - m).exp()).ln();
        Var::binary(self, other, v, (self.value - v).exp(), (other.value - v).exp())
    }
}
