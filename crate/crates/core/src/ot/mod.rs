//! Costs and solvers for the discrete transport problems behind every
//! canonical map.

mod assignment;
mod sinkhorn;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Real;

pub use assignment::{brute_force_assignment, solve_assignment, tie_tolerance, Assignment, BRUTE_FORCE_MAX};
pub use sinkhorn::{barycentric_projection, sinkhorn_plan, CouplingPlan, SinkhornOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OtError {
    #[error("source points have dimension {src}, target points {dst}")]
    DimensionMismatch { src: usize, dst: usize },
    #[error("cost matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite cost at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("brute force is limited to n <= {max}, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error("hierarchical cost needs epsilon > 0, got {0}")]
    Epsilon(f64),
    #[error("Sinkhorn did not converge in {iterations} iterations (marginal residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("Sinkhorn underflow at lambda = {lambda:e}; raise lambda")]
    Underflow { lambda: f64 },
    #[error("plan row {0} has zero mass")]
    ZeroRowMass(usize),
    #[error("{0}")]
    Parameter(String),
}

/// Ground cost between points.
///
/// `Hierarchical` weighs coordinate `k` (1-based) by `epsilon^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound = "T: Real")]
pub enum CostSpec<T> {
    SquaredEuclidean,
    Hierarchical { epsilon: T },
}

impl<T: Real> CostSpec<T> {
    pub fn hierarchical(epsilon: T) -> Result<Self, OtError> {
        if !(epsilon > T::zero()) || !epsilon.is_finite() {
            return Err(OtError::Epsilon(epsilon.f64()));
        }
        Ok(CostSpec::Hierarchical { epsilon })
    }

    /// Per-coordinate weights for dimension `d`.
    pub fn weights(&self, d: usize) -> Vec<T> {
        match *self {
            CostSpec::SquaredEuclidean => vec![T::one(); d],
            CostSpec::Hierarchical { epsilon } => (1..=d).map(|k| epsilon.powi(k as i32)).collect(),
        }
    }

    pub fn pair(&self, a: &[T], b: &[T]) -> T {
        weighted_sq(&self.weights(a.len()), a, b)
    }
}

fn weighted_sq<T: Real>(w: &[T], a: &[T], b: &[T]) -> T {
    // Least significant coordinates first so small terms are not swamped.
    let mut acc = T::zero();
    for k in (0..a.len()).rev() {
        let d = a[k] - b[k];
        acc = acc + w[k] * d * d;
    }
    acc
}

/// Entry `(i, j)` is the cost between `src[i]` and `dst[j]`.
pub fn cost_matrix<T: Real>(src: &[Vec<T>], dst: &[Vec<T>], c: &CostSpec<T>) -> Result<Array2<T>, OtError> {
    let d = src.first().map_or(0, Vec::len);
    weighted_matrix(src, dst, &c.weights(d))
}

/// Hierarchical cost divided by `epsilon`, so the leading coordinate has unit
/// weight and coordinate `k` weight `epsilon^(k-1)`. Same minimizers as the
/// unscaled cost, with the leading terms kept at order one.
pub fn normalized_hierarchical_matrix<T: Real>(src: &[Vec<T>], dst: &[Vec<T>], epsilon: T) -> Result<Array2<T>, OtError> {
    if !(epsilon > T::zero()) || !epsilon.is_finite() {
        return Err(OtError::Epsilon(epsilon.f64()));
    }
    let d = src.first().map_or(0, Vec::len);
    let w: Vec<T> = (0..d).map(|k| epsilon.powi(k as i32)).collect();
    weighted_matrix(src, dst, &w)
}

fn weighted_matrix<T: Real>(src: &[Vec<T>], dst: &[Vec<T>], w: &[T]) -> Result<Array2<T>, OtError> {
    let d = w.len();
    if let Some(p) = src.iter().find(|p| p.len() != d) {
        return Err(OtError::DimensionMismatch { src: p.len(), dst: d });
    }
    if let Some(q) = dst.iter().find(|q| q.len() != d) {
        return Err(OtError::DimensionMismatch { src: d, dst: q.len() });
    }
    Ok(Array2::from_shape_fn((src.len(), dst.len()), |(i, j)| weighted_sq(w, &src[i], &dst[j])))
}
