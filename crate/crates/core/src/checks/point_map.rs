use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::Real;

/// Failure to evaluate a [`PointMap`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("point has dimension {got}, map expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("point {0} is outside the map's domain")]
    Domain(String),
    #[error("evaluation failed: {0}")]
    Evaluation(String),
}

/// An evaluatable map `R^d -> R^d`.
///
/// Matching-backed maps are only defined on their source support and expose
/// it through [`PointMap::support`].
pub trait PointMap<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[T]) -> Result<Vec<T>, MapError>;

    fn support(&self) -> Option<&[Vec<T>]> {
        None
    }

    /// Evaluates every point, stopping at the first failure.
    fn eval_all(&self, pts: &[Vec<T>]) -> Result<Vec<Vec<T>>, MapError> {
        pts.iter().map(|p| self.eval(p)).collect()
    }
}

impl<T: Real, M: PointMap<T> + ?Sized> PointMap<T> for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[T]) -> Result<Vec<T>, MapError> {
        (**self).eval(x)
    }
    fn support(&self) -> Option<&[Vec<T>]> {
        (**self).support()
    }
}

impl<T: Real, M: PointMap<T> + ?Sized> PointMap<T> for Box<M> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[T]) -> Result<Vec<T>, MapError> {
        (**self).eval(x)
    }
    fn support(&self) -> Option<&[Vec<T>]> {
        (**self).support()
    }
}

impl<T: Real, M: PointMap<T> + ?Sized> PointMap<T> for Arc<M> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[T]) -> Result<Vec<T>, MapError> {
        (**self).eval(x)
    }
    fn support(&self) -> Option<&[Vec<T>]> {
        (**self).support()
    }
}

pub(crate) fn check_dim(expected: usize, x: &[impl Sized]) -> Result<(), MapError> {
    if x.len() != expected {
        return Err(MapError::Dimension {
            expected,
            got: x.len(),
        });
    }
    Ok(())
}

/// The identity map of `R^d`.
#[derive(Debug, Clone, Copy)]
pub struct Identity {
    pub dim: usize,
}

impl<T: Real> PointMap<T> for Identity {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[T]) -> Result<Vec<T>, MapError> {
        check_dim(self.dim, x)?;
        Ok(x.to_vec())
    }
}

type BoxedFn<T> = Box<dyn Fn(&[T]) -> Result<Vec<T>, MapError> + Send + Sync>;

/// Closed-form map backed by a Rust closure.
pub struct FnMap<T> {
    dim: usize,
    name: String,
    f: BoxedFn<T>,
}

impl<T: Real> FnMap<T> {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        f: impl Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            name: name.into(),
            f: Box::new(move |x| Ok(f(x))),
        }
    }

    pub fn fallible(
        name: impl Into<String>,
        dim: usize,
        f: impl Fn(&[T]) -> Result<Vec<T>, MapError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            name: name.into(),
            f: Box::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl<T> fmt::Debug for FnMap<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnMap")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .finish()
    }
}

impl<T: Real> PointMap<T> for FnMap<T> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[T]) -> Result<Vec<T>, MapError> {
        check_dim(self.dim, x)?;
        let y = (self.f)(x)?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(MapError::Evaluation(format!(
                "{} produced a non-finite value",
                self.name
            )));
        }
        Ok(y)
    }
}

/// `outer ∘ inner`.
pub struct Composed<A, B> {
    pub outer: A,
    pub inner: B,
}

impl<T: Real, A: PointMap<T>, B: PointMap<T>> PointMap<T> for Composed<A, B> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval(&self, x: &[T]) -> Result<Vec<T>, MapError> {
        self.outer.eval(&self.inner.eval(x)?)
    }
    fn support(&self) -> Option<&[Vec<T>]> {
        self.inner.support()
    }
}
