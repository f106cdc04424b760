//! Bayesian inference engine for the epidemic models in this workspace:
//! a reverse-mode autodiff tape, an adaptive Runge-Kutta 4(5) solver,
//! constraining transforms, the No-U-Turn sampler, automatic differentiation
//! variational inference, and convergence diagnostics.
//!
//! The guide in `book/` walks through each concept with runnable snippets;
//! those snippets are compiled and executed as doc-tests of this crate so
//! they stay in sync with the code.

pub mod advi;
pub mod autodiff;
pub mod diagnostics;
pub mod dist;
pub mod nuts;
pub mod ode;
pub mod models;
pub mod special;
pub mod transforms;
