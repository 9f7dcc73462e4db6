//! Simulation and estimation toolkit for partially observed Markov pairs,
//! classical and quantum.
//!
//! The crate simulates weak (indirect) quantum measurement chains — a probe
//! qubit repeatedly coupled to an unobservable system qubit and measured —
//! alongside classical linear-Gaussian and multiplicative-noise models, and
//! solves the resulting filtering problems three ways:
//!
//! * a scalar Kalman filter ([`filters::kalman_filter`]),
//! * an exact grid-based recursion for the posterior density
//!   ([`filters::grid_posterior_step`]),
//! * the model-free optimal filtering equation, driven by kernel estimates
//!   of the one-step predictive density and its logarithmic derivative
//!   ([`filters::optimal_filter_estimate`]).
//!
//! Filters are compared by empirical Bayesian risk (mean squared error)
//! through the scenario runner in [`bench`]. The [`qudit`] module maps the
//! same observation model onto a single four-level system via artificial
//! qubits.
//!
//! Start with the `examples/` directory; each example exercises one
//! capability end to end.

pub mod bench;
pub mod error;
pub mod filters;
pub mod kde;
pub mod models;
pub mod quantum;
pub mod qudit;

pub use error::{Error, Result};
