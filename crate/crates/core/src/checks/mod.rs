//! Falsifiers for monotonicity-type properties of maps and map families.
//!
//! Every checker evaluates the property on finitely many points or tuples
//! and returns a [`PropertyReport`]. A passing report only means that no
//! violation larger than the tolerance was found at the sampled resolution;
//! a failing report carries a witness that can be re-evaluated with the
//! public helpers ([`cycle_sum_monotone`], [`cycle_sum_comonotone`],
//! [`jacobian_asymmetry`]).

mod cycles;
mod family;
mod gradient;
mod point_map;
mod probes;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Real;

pub use cycles::{
    check_cyclically_comonotone, check_cyclically_monotone, cycle_sum_comonotone, cycle_sum_monotone, CycleOptions,
    EXHAUSTIVE_MAX, EXHAUSTIVE_MAX_SUPPORT,
};
pub use family::{check_family_algebra, Family, Law};
pub use gradient::{check_gradient_field, jacobian, jacobian_asymmetry, GradientOptions};
pub use point_map::{Composed, FnMap, Identity, MapError, PointMap};
pub(crate) use point_map::check_dim;
pub use probes::{
    check_comonotone_1d, check_diagonal_nondecreasing, check_diagonally_comonotone, check_triangular, ProbeOptions,
};

/// Default tolerance for closed-form maps.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("invalid checker parameter: {0}")]
    Parameter(String),
    #[error("finite-difference step {h:e} vanishes at coordinate {coordinate} of {point:?}")]
    Step { h: f64, coordinate: usize, point: Vec<f64> },
    #[error("family member {from} -> {to}: {msg}")]
    Family { from: usize, to: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Offending tuple of a failed check.
///
/// `points` holds the tuple itself (a cycle, a base/probe pair, a single
/// point), `indices` the coordinates or family indices involved and `value`
/// the violating quantity as computed by the checker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub points: Vec<Vec<f64>>,
    pub indices: Vec<usize>,
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: String,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<Witness>,
    /// Number of tuples evaluated.
    pub trials: usize,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl PropertyReport {
    pub(crate) fn new(property: &str, trials: usize, tolerance: f64, witness: Option<Witness>) -> Self {
        Self {
            property: property.to_string(),
            verdict: if witness.is_some() { Verdict::Fail } else { Verdict::Pass },
            witness,
            trials,
            tolerance,
            note: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

pub(crate) fn to_f64<T: Real>(x: &[T]) -> Vec<f64> {
    x.iter().map(|v| v.f64()).collect()
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}
