//! Bijective constraining transforms between the unconstrained sampler space
//! and the constrained model space, with log-Jacobian corrections.
//!
//! Every model parameter in scope is scalar-constrained: free, bounded on one
//! side (exp shift), or interval-bounded (scaled logistic). The total
//! log-Jacobian of a blockwise transform is the sum of the elementwise terms.

use crate::autodiff::Real;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Constraint {
    Free,
    LowerBound(f64),
    UpperBound(f64),
    /// Open interval (a, b) with a < b.
    Interval(f64, f64),
}

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("value {value} is outside the open support of {constraint:?}")]
    OutOfSupport { value: f64, constraint: Constraint },
    #[error("parameter `{name}`: value {value} is outside the open support of {constraint:?}")]
    OutOfSupportNamed {
        name: String,
        value: f64,
        constraint: Constraint,
    },
}

/// Map an unconstrained value into the constraint's open support.
/// Returns the constrained value and log|d constrain / dz|.
pub fn constrain<R: Real>(z: R, c: Constraint) -> (R, R) {
    match c {
        Constraint::Free => (z, R::constant(0.0)),
        Constraint::LowerBound(l) => (z.exp() + l, z),
        Constraint::UpperBound(u) => (R::constant(u) - z.exp(), z),
        Constraint::Interval(a, b) => {
            let width = b - a;
            let s = z.logistic();
            let x = s * width + a;
            // log s(1-s) = -|z| - 2 log(1 + e^{-|z|}), stable for large |z|.
            let log_j = if z.value() >= 0.0 {
                (-z).exp().ln_1p() * (-2.0) - z + width.ln()
            } else {
                z.exp().ln_1p() * (-2.0) + z + width.ln()
            };
            (x, log_j)
        }
    }
}

/// Inverse of [`constrain`]. Inputs on or outside the boundary are hard
/// errors: silent clamping would corrupt gradients downstream.
pub fn unconstrain(x: f64, c: Constraint) -> Result<f64, TransformError> {
    let err = || TransformError::OutOfSupport {
        value: x,
        constraint: c,
    };
    match c {
        Constraint::Free => Ok(x),
        Constraint::LowerBound(l) => {
            if x > l {
                Ok((x - l).ln())
            } else {
                Err(err())
            }
        }
        Constraint::UpperBound(u) => {
            if x < u {
                Ok((u - x).ln())
            } else {
                Err(err())
            }
        }
        Constraint::Interval(a, b) => {
            if x > a && x < b {
                Ok((x - a).ln() - (b - x).ln())
            } else {
                Err(err())
            }
        }
    }
}

/// Ordered list of (name, constraint) pairs defining a model's parameter
/// vector in unconstrained space.
#[derive(Clone, Debug, Default)]
pub struct ParameterLayout {
    entries: Vec<(String, Constraint)>,
}

impl ParameterLayout {
    pub fn new() -> Self {
        ParameterLayout {
            entries: Vec::new(),
        }
    }

    /// Append a parameter. Panics on duplicate names: layouts are built from
    /// static model definitions, so a duplicate is a programming error.
    pub fn push(&mut self, name: impl Into<String>, c: Constraint) {
        let name = name.into();
        assert!(
            self.index_of(&name).is_none(),
            "duplicate parameter name `{name}`"
        );
        self.entries.push((name, c));
    }

    pub fn dimension(&self) -> usize {
        self.entries.len()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn constraint(&self, i: usize) -> Constraint {
        self.entries[i].1
    }

    pub fn name(&self, i: usize) -> &str {
        &self.entries[i].0
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    /// Elementwise constrain; the total log-Jacobian is the sum over entries.
    pub fn constrain_vector<R: Real>(&self, z: &[R]) -> (Vec<R>, R) {
        assert_eq!(z.len(), self.dimension());
        let mut out = Vec::with_capacity(z.len());
        let mut total = R::constant(0.0);
        for (zi, (_, c)) in z.iter().zip(&self.entries) {
            let (x, lj) = constrain(*zi, *c);
            out.push(x);
            total = total + lj;
        }
        (out, total)
    }

    /// Elementwise unconstrain of an in-support constrained vector.
    pub fn unconstrain_vector(&self, x: &[f64]) -> Result<Vec<f64>, TransformError> {
        assert_eq!(x.len(), self.dimension());
        x.iter()
            .zip(&self.entries)
            .map(|(xi, (name, c))| {
                unconstrain(*xi, *c).map_err(|_| TransformError::OutOfSupportNamed {
                    name: name.clone(),
                    value: *xi,
                    constraint: *c,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_bound_at_zero() {
        let (x, lj) = constrain(0.0f64, Constraint::LowerBound(0.0));
        assert_eq!(x, 1.0);
        assert_eq!(lj, 0.0);
        assert_eq!(unconstrain(1.0, Constraint::LowerBound(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn unit_interval_midpoint() {
        let (x, lj) = constrain(0.0f64, Constraint::Interval(0.0, 1.0));
        assert_eq!(x, 0.5);
        assert!((lj - 0.25f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn unit_interval_at_two() {
        let (x, lj) = constrain(2.0f64, Constraint::Interval(0.0, 1.0));
        assert!((x - 0.880_797_077_977_882_4).abs() < 1e-12);
        assert!((lj - (x * (1.0 - x)).ln()).abs() < 1e-12);
        assert!((unconstrain(0.880_797_1, Constraint::Interval(0.0, 1.0)).unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn free_is_identity() {
        assert_eq!(unconstrain(-3.7, Constraint::Free).unwrap(), -3.7);
        assert_eq!(constrain(-3.7f64, Constraint::Free).0, -3.7);
    }

    #[test]
    fn boundary_is_an_error() {
        assert!(unconstrain(0.0, Constraint::LowerBound(0.0)).is_err());
        assert!(unconstrain(1.0, Constraint::Interval(0.0, 1.0)).is_err());
        assert!(unconstrain(-0.1, Constraint::Interval(0.0, 1.0)).is_err());
    }

    #[test]
    fn vector_composition() {
        let mut layout = ParameterLayout::new();
        layout.push("a", Constraint::LowerBound(0.0));
        layout.push("b", Constraint::Interval(0.0, 1.0));
        let (x, total) = layout.constrain_vector(&[0.0f64, 0.0]);
        assert_eq!(x, vec![1.0, 0.5]);
        assert!((total - 0.25f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn sir_layout_round_trip() {
        let mut layout = ParameterLayout::new();
        layout.push("beta", Constraint::LowerBound(0.0));
        layout.push("gamma", Constraint::LowerBound(0.0));
        layout.push("s0", Constraint::Interval(0.0, 1.0));
        let x = [1.89, 0.48, 0.999];
        let z = layout.unconstrain_vector(&x).unwrap();
        assert!((z[0] - 1.89f64.ln()).abs() < 1e-15);
        let (back, total) = layout.constrain_vector(&z);
        for (bi, xi) in back.iter().zip(&x) {
            assert!((bi - xi).abs() < 1e-12);
        }
        // total equals the sum of elementwise values computed independently
        let mut expect = 0.0;
        expect += constrain(z[0], Constraint::LowerBound(0.0)).1;
        expect += constrain(z[1], Constraint::LowerBound(0.0)).1;
        expect += constrain(z[2], Constraint::Interval(0.0, 1.0)).1;
        assert!((total - expect).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn duplicate_names_rejected() {
        let mut layout = ParameterLayout::new();
        layout.push("a", Constraint::Free);
        layout.push("a", Constraint::Free);
    }
}
