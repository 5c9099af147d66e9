use super::{to_f64, CheckError, PointMap, PropertyReport, Witness};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientOptions {
    /// Central-difference step.
    pub h: f64,
    pub tol: f64,
}

impl Default for GradientOptions {
    fn default() -> Self {
        Self { h: 1e-5, tol: 1e-6 }
    }
}

/// Central-difference Jacobian; entry `[i][j]` is `∂T_i/∂x_j`.
pub fn jacobian<T: Real, M: PointMap<T> + ?Sized>(t: &M, x: &[T], h: T) -> Result<Vec<Vec<T>>, CheckError> {
    if !(h > T::zero()) {
        return Err(CheckError::Parameter(format!("step must be positive, got {h}")));
    }
    let d = t.dim();
    super::check_dim(d, x)?;
    let mut jac = vec![vec![T::zero(); d]; d];
    let mut xp = x.to_vec();
    for j in 0..d {
        let (up, down) = (x[j] + h, x[j] - h);
        if up == x[j] || down == x[j] {
            return Err(CheckError::Step {
                h: h.f64(),
                coordinate: j,
                point: to_f64(x),
            });
        }
        xp[j] = up;
        let fp = t.eval(&xp)?;
        xp[j] = down;
        let fm = t.eval(&xp)?;
        xp[j] = x[j];
        let width = up - down;
        for i in 0..d {
            jac[i][j] = (fp[i] - fm[i]) / width;
        }
    }
    Ok(jac)
}

/// `|J_ij − J_ji|` at `x`.
pub fn jacobian_asymmetry<T: Real, M: PointMap<T> + ?Sized>(
    t: &M,
    x: &[T],
    h: T,
    i: usize,
    j: usize,
) -> Result<T, CheckError> {
    let jac = jacobian(t, x, h)?;
    Ok((jac[i][j] - jac[j][i]).abs())
}

/// A smooth map is locally a gradient iff its Jacobian is symmetric.
pub fn check_gradient_field<T: Real, M: PointMap<T> + ?Sized>(
    t: &M,
    pts: &[Vec<T>],
    opts: GradientOptions,
) -> Result<PropertyReport, CheckError> {
    let h = T::c(opts.h);
    let tol = T::c(opts.tol);
    let d = t.dim();
    let mut trials = 0;
    let mut worst: Option<(T, Witness)> = None;
    for x in pts {
        let jac = jacobian(t, x, h)?;
        for i in 0..d {
            for j in i + 1..d {
                trials += 1;
                let asym = (jac[i][j] - jac[j][i]).abs();
                if asym > tol && worst.as_ref().is_none_or(|(w, _)| asym > *w) {
                    worst = Some((
                        asym,
                        Witness {
                            points: vec![to_f64(x)],
                            indices: vec![i, j],
                            value: asym.f64(),
                            detail: format!(
                                "d T_{}/d x_{} = {:e} but d T_{}/d x_{} = {:e}",
                                i + 1,
                                j + 1,
                                jac[i][j].f64(),
                                j + 1,
                                i + 1,
                                jac[j][i].f64()
                            ),
                        },
                    ));
                }
            }
        }
    }
    Ok(PropertyReport::new("gradient_field", trials, opts.tol, worst.map(|(_, w)| w)))
}
