//! Entropic transport by log-domain Sinkhorn scaling with epsilon annealing.

use ndarray::Array2;

use super::{cost_matrix, CostSpec, OtError};
use crate::measures::DiscreteMeasure;
use crate::Real;

/// Nonnegative `n × m` coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingPlan<T> {
    pub matrix: Array2<T>,
}

impl<T: Real> CouplingPlan<T> {
    pub fn row_sums(&self) -> Vec<T> {
        self.matrix.rows().into_iter().map(|r| r.iter().copied().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<T> {
        self.matrix.columns().into_iter().map(|c| c.iter().copied().sum()).collect()
    }

    /// Largest absolute deviation of either marginal from `a`, `b`.
    pub fn marginal_residual(&self, a: &[T], b: &[T]) -> T {
        let rows = self.row_sums().into_iter().zip(a).map(|(s, w)| (s - *w).abs());
        let cols = self.col_sums().into_iter().zip(b).map(|(s, w)| (s - *w).abs());
        rows.chain(cols).fold(T::zero(), T::max)
    }

    /// `Σ_ij plan_ij · cost_ij`.
    pub fn cost(&self, cost: &Array2<T>) -> T {
        self.matrix.iter().zip(cost.iter()).map(|(p, c)| *p * *c).sum()
    }

    /// Permutation plan of a uniform assignment: `1/n` on `(i, perm[i])`.
    pub fn from_permutation(perm: &[usize]) -> Self {
        let n = perm.len();
        let mut matrix = Array2::zeros((n, n));
        let w = T::one() / T::c(n as f64);
        for (i, &j) in perm.iter().enumerate() {
            matrix[[i, j]] = w;
        }
        Self { matrix }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SinkhornOptions<T> {
    /// Entropic regularization strength.
    pub lambda: T,
    pub max_iter: usize,
    /// Bound on the marginal residual.
    pub tol: T,
}

impl<T: Real> SinkhornOptions<T> {
    pub fn new(lambda: T) -> Self {
        Self {
            lambda,
            max_iter: 100_000,
            tol: T::c(1e-6),
        }
    }
}

fn log_sum_exp<T: Real>(vals: impl Iterator<Item = T> + Clone) -> T {
    let m = vals.clone().fold(T::neg_infinity(), T::max);
    if m == T::neg_infinity() {
        return m;
    }
    m + vals.map(|v| (v - m).exp()).sum::<T>().ln()
}

/// Entropic optimal coupling between `mu` and `nu`.
///
/// The regularization is annealed from the cost scale down to `lambda`,
/// warm-starting the dual potentials at each stage; the returned plan meets
/// both marginals within `opts.tol`.
pub fn sinkhorn_plan<T: Real>(
    mu: &DiscreteMeasure<T>,
    nu: &DiscreteMeasure<T>,
    c: &CostSpec<T>,
    opts: SinkhornOptions<T>,
) -> Result<CouplingPlan<T>, OtError> {
    if !(opts.lambda > T::zero()) {
        return Err(OtError::Parameter(format!("lambda must be positive, got {}", opts.lambda)));
    }
    if mu.dim() != nu.dim() {
        return Err(OtError::DimensionMismatch {
            src: mu.dim(),
            dst: nu.dim(),
        });
    }
    let cost = cost_matrix(mu.points(), nu.points(), c)?;
    if let Some(((row, col), _)) = cost.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(OtError::NonFinite { row, col });
    }
    let (n, m) = cost.dim();
    let a = mu.weights();
    let b = nu.weights();
    let log_a: Vec<T> = a.iter().map(|w| w.ln()).collect();
    let log_b: Vec<T> = b.iter().map(|w| w.ln()).collect();
    let mut f = vec![T::zero(); n];
    let mut g = vec![T::zero(); m];

    let scale = cost.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    let mut lambda = scale.max(opts.lambda);
    let mut iterations = 0usize;
    let mut residual = T::infinity();
    let half = T::c(0.5);

    let plan_at = |f: &[T], g: &[T], lambda: T| {
        Array2::from_shape_fn((n, m), |(i, j)| (log_a[i] + log_b[j] + (f[i] + g[j] - cost[[i, j]]) / lambda).exp())
    };

    loop {
        let last_stage = lambda <= opts.lambda;
        let stage_budget = if last_stage { usize::MAX } else { 200 };
        let mut stage_iters = 0usize;
        while stage_iters < stage_budget && iterations < opts.max_iter {
            for i in 0..n {
                let lse = log_sum_exp((0..m).map(|j| log_b[j] + (g[j] - cost[[i, j]]) / lambda));
                if !lse.is_finite() {
                    return Err(OtError::Underflow { lambda: lambda.f64() });
                }
                f[i] = -lambda * lse;
            }
            for j in 0..m {
                let lse = log_sum_exp((0..n).map(|i| log_a[i] + (f[i] - cost[[i, j]]) / lambda));
                if !lse.is_finite() {
                    return Err(OtError::Underflow { lambda: lambda.f64() });
                }
                g[j] = -lambda * lse;
            }
            iterations += 1;
            stage_iters += 1;
            // Columns are exact after the g-update; only rows can drift.
            if iterations.is_multiple_of(10) || last_stage {
                residual = (0..n)
                    .map(|i| {
                        let row: T = (0..m)
                            .map(|j| (log_a[i] + log_b[j] + (f[i] + g[j] - cost[[i, j]]) / lambda).exp())
                            .sum();
                        (row - a[i]).abs()
                    })
                    .fold(T::zero(), T::max);
                let stage_tol = if last_stage { opts.tol } else { T::c(1e-3) };
                if residual <= stage_tol {
                    break;
                }
            }
        }
        if last_stage {
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        lambda = (lambda * half).max(opts.lambda);
    }

    let plan = CouplingPlan {
        matrix: plan_at(&f, &g, opts.lambda),
    };
    if plan.matrix.iter().any(|v| !v.is_finite()) {
        return Err(OtError::Underflow {
            lambda: opts.lambda.f64(),
        });
    }
    let residual_final = plan.marginal_residual(a, b);
    if residual_final > opts.tol {
        return Err(OtError::NonConvergence {
            iterations,
            residual: residual_final.f64().max(residual.f64()),
        });
    }
    Ok(plan)
}

/// Row `i` goes to `Σ_j plan_ij · dst_j / Σ_j plan_ij`.
pub fn barycentric_projection<T: Real>(plan: &CouplingPlan<T>, dst: &[Vec<T>]) -> Result<Vec<Vec<T>>, OtError> {
    let (_, m) = plan.matrix.dim();
    if m != dst.len() {
        return Err(OtError::Parameter(format!(
            "plan has {m} columns but {} target points",
            dst.len()
        )));
    }
    let d = dst.first().map_or(0, Vec::len);
    plan.matrix
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let mass: T = row.iter().copied().sum();
            if !(mass > T::zero()) {
                return Err(OtError::ZeroRowMass(i));
            }
            let mut out = vec![T::zero(); d];
            for (w, q) in row.iter().zip(dst) {
                for (o, v) in out.iter_mut().zip(q) {
                    *o = *o + *w * *v;
                }
            }
            Ok(out.into_iter().map(|v| v / mass).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::uniform_cube_sample;

    #[test]
    fn single_point() {
        let m = DiscreteMeasure::<f64>::uniform("m", vec![vec![0.3, 0.1]]).unwrap();
        let p = sinkhorn_plan(&m, &m, &CostSpec::SquaredEuclidean, SinkhornOptions::new(0.1)).unwrap();
        assert!((p.matrix[[0, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn marginals_hold() {
        let mu = uniform_cube_sample::<f64>(2, 12, 1).unwrap();
        let w: Vec<f64> = (1..=12).map(|k| k as f64 / 78.0).collect();
        let nu = DiscreteMeasure::new("nu", uniform_cube_sample::<f64>(2, 12, 2).unwrap().points().to_vec(), w.clone()).unwrap();
        let p = sinkhorn_plan(&mu, &nu, &CostSpec::SquaredEuclidean, SinkhornOptions::new(0.01)).unwrap();
        assert!(p.marginal_residual(mu.weights(), &w) <= 1e-6);
        assert!(p.matrix.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn non_convergence_is_reported() {
        let mu = uniform_cube_sample::<f64>(2, 10, 3).unwrap();
        let nu = uniform_cube_sample::<f64>(2, 10, 4).unwrap();
        let opts = SinkhornOptions {
            lambda: 1e-3,
            max_iter: 3,
            tol: 1e-12,
        };
        assert!(matches!(
            sinkhorn_plan(&mu, &nu, &CostSpec::SquaredEuclidean, opts),
            Err(OtError::NonConvergence { .. })
        ));
        assert!(sinkhorn_plan(&mu, &nu, &CostSpec::SquaredEuclidean, SinkhornOptions::new(0.0)).is_err());
    }

    #[test]
    fn projection_examples() {
        let dst = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 2.0], vec![0.0, -2.0]];
        let perm = [2, 0, 3, 1];
        let p = CouplingPlan::<f64>::from_permutation(&perm);
        let proj = barycentric_projection(&p, &dst).unwrap();
        for (i, &j) in perm.iter().enumerate() {
            assert_eq!(proj[i], dst[j]);
        }
        let uniform = CouplingPlan {
            matrix: Array2::from_elem((4, 4), 1.0 / 16.0),
        };
        for row in barycentric_projection(&uniform, &dst).unwrap() {
            assert!(row.iter().all(|v| v.abs() < 1e-15));
        }
        let mut zero = uniform.clone();
        zero.matrix.row_mut(2).fill(0.0);
        assert!(matches!(barycentric_projection(&zero, &dst), Err(OtError::ZeroRowMass(2))));
        assert!(barycentric_projection(&uniform, &dst[..3]).is_err());
    }
}
