//! Discrete measures, reference-measure generators, 1D quantiles and
//! push-forwards.

mod io;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checks::{MapError, PointMap};
use crate::{rng, Real};

pub use io::{load_measure, parse_csv, parse_json, save_measure, to_csv, to_json, Format};

/// Tolerance on `Σ w = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Per-coordinate tolerance under which two points are the same atom.
pub const MERGE_TOL: f64 = 1e-12;
/// Default cap on the number of grid nodes `k^d`.
pub const GRID_CAP: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("measure has no points")]
    Empty,
    #[error("point {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("points must have dimension at least 1")]
    ZeroDimension,
    #[error("{points} points but {weights} weights")]
    WeightCount { points: usize, weights: usize },
    #[error("negative weight {weight} at row {index}")]
    NegativeWeight { index: usize, weight: f64 },
    #[error("non-finite value at row {index}")]
    NonFinite { index: usize },
    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("{0}")]
    Parameter(String),
    #[error("grid of {0} nodes exceeds the cap of {1}")]
    GridTooLarge(u128, usize),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("map evaluation failed at support point {index}: {source}")]
    Map { index: usize, source: MapError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Weighted point cloud in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DiscreteMeasure<T> {
    id: String,
    points: Vec<Vec<T>>,
    weights: Vec<T>,
}

impl<T: Real> DiscreteMeasure<T> {
    pub fn new(
        id: impl Into<String>,
        points: Vec<Vec<T>>,
        weights: Vec<T>,
    ) -> Result<Self, MeasureError> {
        let dim = check_points(&points)?;
        debug_assert!(dim >= 1);
        if weights.len() != points.len() {
            return Err(MeasureError::WeightCount {
                points: points.len(),
                weights: weights.len(),
            });
        }
        for (index, w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(MeasureError::NonFinite { index });
            }
            if *w < T::zero() {
                return Err(MeasureError::NegativeWeight {
                    index,
                    weight: w.f64(),
                });
            }
        }
        let total: f64 = weights.iter().map(|w| w.f64()).sum();
        let tol = WEIGHT_SUM_TOL.max(4.0 * T::epsilon().f64() * weights.len() as f64);
        if (total - 1.0).abs() > tol {
            return Err(MeasureError::WeightSum(total));
        }
        Ok(Self {
            id: id.into(),
            points,
            weights,
        })
    }

    /// Uniform weights `1/n`.
    pub fn uniform(id: impl Into<String>, points: Vec<Vec<T>>) -> Result<Self, MeasureError> {
        let n = points.len();
        if n == 0 {
            return Err(MeasureError::Empty);
        }
        let w = T::one() / T::c(n as f64);
        Self::new(id, points, vec![w; n])
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.points[i]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// True when every weight equals `1/n` within [`WEIGHT_SUM_TOL`].
    pub fn is_uniform(&self) -> bool {
        let target = 1.0 / self.len() as f64;
        let tol = WEIGHT_SUM_TOL.max(4.0 * T::epsilon().f64());
        self.weights.iter().all(|w| (w.f64() - target).abs() <= tol)
    }

    /// Index of the support point equal to `x` within [`MERGE_TOL`].
    pub fn find(&self, x: &[T]) -> Option<usize> {
        self.points.iter().position(|p| same_point(p, x))
    }

    /// Sorted 1D view of a `d = 1` measure.
    pub fn support_1d(&self) -> Result<Support1D<T>, MeasureError> {
        Support1D::new(self)
    }

    /// Multiset equality of atoms: same points (within [`MERGE_TOL`]) carrying
    /// the same total weight.
    pub fn same_distribution(&self, other: &Self) -> bool {
        if self.dim() != other.dim() {
            return false;
        }
        let a = merged_atoms(&self.points, &self.weights);
        let b = merged_atoms(&other.points, &other.weights);
        if a.len() != b.len() {
            return false;
        }
        let tol = WEIGHT_SUM_TOL.max(4.0 * T::epsilon().f64());
        a.iter().all(|(p, w)| {
            b.iter()
                .any(|(q, v)| same_point(p, q) && (w.f64() - v.f64()).abs() <= tol)
        })
    }
}

fn check_points<T: Real>(points: &[Vec<T>]) -> Result<usize, MeasureError> {
    let first = points.first().ok_or(MeasureError::Empty)?;
    let dim = first.len();
    if dim == 0 {
        return Err(MeasureError::ZeroDimension);
    }
    for (index, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(MeasureError::DimensionMismatch {
                index,
                expected: dim,
                got: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(MeasureError::NonFinite { index });
        }
    }
    Ok(dim)
}

pub(crate) fn same_point<T: Real>(a: &[T], b: &[T]) -> bool {
    let tol = T::c(MERGE_TOL);
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (*x - *y).abs() <= tol)
}

/// Merges coincident points, summing weights; keeps first-occurrence order.
fn merged_atoms<T: Real>(points: &[Vec<T>], weights: &[T]) -> Vec<(Vec<T>, T)> {
    let mut out: Vec<(Vec<T>, T)> = Vec::with_capacity(points.len());
    for (p, w) in points.iter().zip(weights) {
        match out.iter_mut().find(|(q, _)| same_point(p, q)) {
            Some((_, acc)) => *acc = *acc + *w,
            None => out.push((p.clone(), *w)),
        }
    }
    out
}

/// Sorted, deduplicated support of a 1D measure with its CDF values.
#[derive(Debug, Clone, PartialEq)]
pub struct Support1D<T> {
    values: Vec<T>,
    cumulative: Vec<T>,
}

impl<T: Real> Support1D<T> {
    pub fn new(m: &DiscreteMeasure<T>) -> Result<Self, MeasureError> {
        if m.dim() != 1 {
            return Err(MeasureError::Parameter(format!(
                "1D view needs d = 1, measure has d = {}",
                m.dim()
            )));
        }
        let mut atoms: Vec<(T, T)> = m.points.iter().map(|p| p[0]).zip(m.weights.iter().copied()).collect();
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite support"));
        let tol = T::c(MERGE_TOL);
        let mut values: Vec<T> = Vec::new();
        let mut masses: Vec<T> = Vec::new();
        for (v, w) in atoms {
            match values.last() {
                Some(&last) if v - last <= tol => {
                    *masses.last_mut().expect("paired") = *masses.last().expect("paired") + w;
                }
                _ => {
                    values.push(v);
                    masses.push(w);
                }
            }
        }
        let mut acc = T::zero();
        let mut cumulative: Vec<T> = masses
            .iter()
            .map(|w| {
                acc = acc + *w;
                acc
            })
            .collect();
        // Absorb rounding so the CDF ends at exactly one.
        if let Some(last) = cumulative.last_mut() {
            *last = T::one();
        }
        Ok(Self { values, cumulative })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn cumulative(&self) -> &[T] {
        &self.cumulative
    }

    /// `F(x) = μ((-∞, x])`.
    pub fn cdf(&self, x: T) -> T {
        match self.values.iter().rposition(|v| *v <= x) {
            Some(i) => self.cumulative[i],
            None => T::zero(),
        }
    }

    /// Generalized inverse `F†(α) = inf { x : α ≤ F(x) }`.
    pub fn quantile(&self, alpha: T) -> Result<T, MeasureError> {
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(MeasureError::Parameter(format!(
                "quantile level {alpha} outside (0, 1)"
            )));
        }
        let i = self.cumulative.partition_point(|c| *c < alpha);
        Ok(self.values[i.min(self.values.len() - 1)])
    }
}

/// Quantile of a 1D measure at level `alpha ∈ (0, 1)`.
pub fn quantile_1d<T: Real>(m: &DiscreteMeasure<T>, alpha: T) -> Result<T, MeasureError> {
    m.support_1d()?.quantile(alpha)
}

/// `k^d` grid nodes on `[lo, hi]^d` with uniform weights.
///
/// Endpoints are included for `k ≥ 2`; `k = 1` yields the midpoint. Points
/// are listed with the first coordinate varying slowest.
pub fn uniform_grid<T: Real>(d: usize, k: usize, lo: T, hi: T) -> Result<DiscreteMeasure<T>, MeasureError> {
    uniform_grid_capped(d, k, lo, hi, GRID_CAP)
}

pub fn uniform_grid_capped<T: Real>(
    d: usize,
    k: usize,
    lo: T,
    hi: T,
    cap: usize,
) -> Result<DiscreteMeasure<T>, MeasureError> {
    if d == 0 {
        return Err(MeasureError::ZeroDimension);
    }
    if k == 0 {
        return Err(MeasureError::Parameter("grid needs k >= 1".into()));
    }
    if !(lo < hi) {
        return Err(MeasureError::Parameter(format!("grid needs lo < hi, got [{lo}, {hi}]")));
    }
    let total = (k as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
    if total > cap as u128 {
        return Err(MeasureError::GridTooLarge(total, cap));
    }
    let axis: Vec<T> = if k == 1 {
        vec![(lo + hi) / T::c(2.0)]
    } else {
        let step = (hi - lo) / T::c((k - 1) as f64);
        (0..k)
            .map(|i| if i == k - 1 { hi } else { lo + step * T::c(i as f64) })
            .collect()
    };
    let n = total as usize;
    let points = (0..n)
        .map(|mut idx| {
            let mut p = vec![T::zero(); d];
            for c in (0..d).rev() {
                p[c] = axis[idx % k];
                idx /= k;
            }
            p
        })
        .collect();
    DiscreteMeasure::uniform(format!("grid{d}x{k}"), points)
}

/// `n` i.i.d. draws of `R·U` with `R ~ Unif[0,1]` and `U` uniform on the unit
/// sphere of `R^d`.
pub fn spherical_uniform_sample<T: Real>(d: usize, n: usize, seed: u64) -> Result<DiscreteMeasure<T>, MeasureError> {
    if d == 0 {
        return Err(MeasureError::ZeroDimension);
    }
    if n == 0 {
        return Err(MeasureError::Empty);
    }
    let mut rng = rng::seeded(seed);
    let points = (0..n)
        .map(|_| loop {
            let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                let r: f64 = rng.random();
                break g.iter().map(|v| T::c(r * v / norm)).collect();
            }
        })
        .collect();
    DiscreteMeasure::uniform(format!("ball{d}:{seed}"), points)
}

/// `n` i.i.d. draws from the uniform law on `[0,1]^d`.
pub fn uniform_cube_sample<T: Real>(d: usize, n: usize, seed: u64) -> Result<DiscreteMeasure<T>, MeasureError> {
    if d == 0 {
        return Err(MeasureError::ZeroDimension);
    }
    if n == 0 {
        return Err(MeasureError::Empty);
    }
    let mut rng = rng::seeded(seed);
    let points = (0..n)
        .map(|_| (0..d).map(|_| T::c(rng.random::<f64>())).collect())
        .collect();
    DiscreteMeasure::uniform(format!("cube{d}:{seed}"), points)
}

/// `f♯m`: maps every atom, merging coincident images.
pub fn pushforward<T: Real, F: PointMap<T> + ?Sized>(
    m: &DiscreteMeasure<T>,
    f: &F,
) -> Result<DiscreteMeasure<T>, MeasureError> {
    let images = m
        .points
        .iter()
        .enumerate()
        .map(|(index, p)| f.eval(p).map_err(|source| MeasureError::Map { index, source }))
        .collect::<Result<Vec<_>, _>>()?;
    let (points, weights): (Vec<_>, Vec<_>) = merged_atoms(&images, &m.weights).into_iter().unzip();
    DiscreteMeasure::new(format!("push({})", m.id), points, weights)
}
