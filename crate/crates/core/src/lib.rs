//! Solvers for space-time coupled evolution equations of the form
//! `(d/dt - L)^nu u = f` with initial data prescribed on the whole past.
//!
//! The operator is the subordination of a heat operator `d/dt - L` by an
//! infinite Levy measure `nu`; the solution admits both a stochastic
//! representation (a spatial Feller process run at the first-passage time of
//! an independent subordinator, including its overshoot) and a deterministic
//! fundamental-solution representation (transition density composed with the
//! overshoot density of the subordinator).
//!
//! The crate provides:
//!
//! * [`subordinator`] — Levy kernels, exact increment sampling, first-passage
//!   simulation, potential and overshoot densities;
//! * [`spatial`] — the four explicit-kernel spatial models (free, killed and
//!   reflected Brownian motion, spectral fractional interval);
//! * [`mc`] — embarrassingly parallel Feynman-Kac estimators with
//!   deterministic, worker-count independent reductions;
//! * [`quadrature`] — the deterministic reference solver built from the
//!   fundamental-solution densities;
//! * [`operator`] — numerical application of the nonlocal operator, its
//!   adjoint, weak-solution residuals and the history-to-initial-value
//!   forcing correction;
//! * [`octrw`] — an overshoot continuous-time random walk simulator whose
//!   rescaled law converges to the coupled limit process.
//!
//! The crate is `no_std` compatible (it requires `alloc`); all IO, file
//! formats and the experiment runner live in the companion `cee-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod field;
pub mod math;
pub mod mc;
pub mod octrw;
pub mod operator;
pub mod quadrature;
pub mod rng;
pub mod spatial;
pub mod subordinator;

pub use error::{Error, Result};
pub use spatial::Point;
