//! Lattice simulation of the mollified 2D KPZ equation through the
//! stochastic heat equation, with limit-law oracles and statistics.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaging;
pub mod config;
pub mod deterministic;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod initial;
pub mod mollifier;
pub mod noise;
pub mod polymer;
pub mod quadrature;
pub mod scalar;
pub mod solver;
pub mod spectral;
pub mod stats;
pub mod theory;

pub use error::{ErrorClass, KpzError, Result};
pub use grid::{GridSpec, Point};
pub use scalar::Real;

pub type FieldState32 = solver::FieldState<f32>;
pub type FieldState64 = solver::FieldState<f64>;
pub type Ensemble32 = ensemble::Ensemble<f32>;
pub type Ensemble64 = ensemble::Ensemble<f64>;
pub type Environment32 = polymer::FrozenEnvironment<f32>;
pub type Environment64 = polymer::FrozenEnvironment<f64>;
