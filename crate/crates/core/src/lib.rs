//! Canonical transport maps between discrete probability measures and
//! structural counterfactual maps.
//!
//! The numerical core ([`measures`], [`ot`], [`maps`], [`checks`]) is generic
//! over the scalar type through [`Real`]; the aliases below fix it to `f64`,
//! which is what the structural-model layer ([`scm`], [`dsl`]) works in.
//!
//! - [`measures`]: weighted point clouds, reference measures, 1D quantiles,
//!   push-forwards and file I/O.
//! - [`ot`]: cost matrices, exact assignment, Sinkhorn plans.
//! - [`maps`]: cyclically monotone, quantile-preserving and
//!   Knothe–Rosenblatt matchings plus matching algebra.
//! - [`checks`]: falsifiers for monotonicity, comonotonicity, triangularity
//!   and family laws.
//! - [`scm`]: structural causal models, interventions, subsolution and
//!   counterfactual maps.
//! - [`dsl`]: the structural-equation text format.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod dsl;
pub mod maps;
pub mod measures;
pub mod ot;
pub mod repro;
pub mod rng;
mod scalar;
pub mod scm;

pub use scalar::Real;

/// Discrete measure over `f64` coordinates.
pub type Measure = measures::DiscreteMeasure<f64>;
/// Matching between two `f64` measures.
pub type Matching = maps::DiscreteMatching<f64>;
/// Optimal assignment with an `f64` objective.
pub type Assignment = ot::Assignment<f64>;
/// Coupling plan with `f64` entries.
pub type Plan = ot::CouplingPlan<f64>;
/// Cost function over `f64`.
pub type Cost = ot::CostSpec<f64>;
