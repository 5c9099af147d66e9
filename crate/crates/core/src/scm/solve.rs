use nalgebra::{DMatrix, DVector};

use super::{linear_block, node_name, Scm, ScmError};
use crate::checks::{check_dim, MapError, PointMap};
use crate::dsl::{classify_mechanism, noise_under_indicator, Affine, Env, Expr, MechanismKind, Var};

/// Damped fixed-point iteration used for nonlinear cycles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    /// Weight of the previous iterate.
    pub damping: f64,
    /// Bound on `max |F(x) − x|`, relative to `max(1, |x|)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

const BISECTION_TOL: f64 = 1e-12;
const MAX_DOUBLINGS: usize = 200;

/// The model under `do(A, a)`, with mechanisms specialized to that value.
#[derive(Debug, Clone)]
pub struct World<'m> {
    scm: &'m Scm,
    a: f64,
    bodies: Vec<Expr>,
    kinds: Vec<MechanismKind>,
    affine: Vec<Option<Affine>>,
    fixed_point: FixedPointOptions,
}

impl<'m> World<'m> {
    pub fn new(scm: &'m Scm, a: f64) -> Self {
        let bodies: Vec<Expr> = scm
            .equations()
            .iter()
            .map(|eq| eq.body.substitute(Var::A, &Expr::Num(a)).fold())
            .collect();
        let kinds = bodies
            .iter()
            .enumerate()
            .map(|(i, b)| classify_mechanism(b, Var::U(i + 1)))
            .collect();
        let affine = bodies.iter().map(Expr::affine).collect();
        Self {
            scm,
            a,
            bodies,
            kinds,
            affine,
            fixed_point: FixedPointOptions::default(),
        }
    }

    pub fn with_fixed_point(mut self, opts: FixedPointOptions) -> Self {
        self.fixed_point = opts;
        self
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// Mechanism classes once `A` is fixed.
    pub fn kinds(&self) -> &[MechanismKind] {
        &self.kinds
    }

    fn eval(&self, i: usize, x: &[f64], u: &[f64]) -> Result<f64, ScmError> {
        let env = Env { x, a: self.a, u, ua: 0.0 };
        self.bodies[i].eval(&env).map_err(|e| ScmError::Evaluation {
            node: node_name(i),
            msg: e.to_string(),
        })
    }

    /// `g_a(u)`.
    pub fn forward(&self, u: &[f64]) -> Result<Vec<f64>, ScmError> {
        let d = self.scm.dim();
        if u.len() != d {
            return Err(ScmError::Dimension {
                expected: d,
                got: u.len(),
            });
        }
        let mut x = vec![0.0; d];
        for comp in self.scm.components() {
            if comp.len() == 1 && !self.scm.equations()[comp[0]].self_loop {
                x[comp[0]] = self.eval(comp[0], &x, u)?;
            } else if comp.iter().all(|&i| self.affine[i].is_some()) {
                self.solve_linear(comp, &mut x, u)?;
            } else {
                self.solve_fixed_point(comp, &mut x, u)?;
            }
        }
        Ok(x)
    }

    fn solve_linear(&self, comp: &[usize], x: &mut [f64], u: &[f64]) -> Result<(), ScmError> {
        let k = comp.len();
        let mut lhs = DMatrix::<f64>::identity(k, k);
        let mut rhs = DVector::<f64>::zeros(k);
        for (r, &i) in comp.iter().enumerate() {
            let aff = self.affine[i].as_ref().expect("checked affine");
            let mut acc = aff.constant;
            for (v, c) in &aff.coeffs {
                match *v {
                    Var::X(j) => match comp.iter().position(|&s| s == j - 1) {
                        Some(col) => lhs[(r, col)] -= c,
                        None => acc += c * x[j - 1],
                    },
                    Var::U(j) => acc += c * u[j - 1],
                    _ => {}
                }
            }
            rhs[r] = acc;
        }
        let names = || comp.iter().map(|&i| node_name(i)).collect::<Vec<_>>().join(", ");
        let sol = lhs.lu().solve(&rhs).ok_or_else(|| ScmError::Singular(names()))?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(ScmError::Singular(names()));
        }
        for (r, &i) in comp.iter().enumerate() {
            x[i] = sol[r];
        }
        Ok(())
    }

    fn solve_fixed_point(&self, comp: &[usize], x: &mut [f64], u: &[f64]) -> Result<(), ScmError> {
        let opts = self.fixed_point;
        let mut next = vec![0.0; comp.len()];
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        for it in 1..=opts.max_iter {
            iterations = it;
            // Overflow while iterating means the iteration diverged.
            let step: Result<(), ScmError> = next
                .iter_mut()
                .zip(comp)
                .try_for_each(|(slot, &i)| self.eval(i, x, u).map(|v| *slot = v));
            if step.is_err() {
                residual = f64::INFINITY;
                break;
            }
            residual = 0.0;
            let mut scale = 1.0f64;
            for (slot, &i) in next.iter().zip(comp) {
                residual = residual.max((slot - x[i]).abs());
                scale = scale.max(x[i].abs());
            }
            if residual <= opts.tol * scale {
                for (slot, &i) in next.iter().zip(comp) {
                    x[i] = *slot;
                }
                return Ok(());
            }
            for (slot, &i) in next.iter().zip(comp) {
                x[i] = opts.damping * x[i] + (1.0 - opts.damping) * slot;
            }
        }
        Err(ScmError::FixedPoint {
            nodes: comp.iter().map(|&i| node_name(i)).collect::<Vec<_>>().join(", "),
            iterations,
            residual,
        })
    }

    /// `g_a⁻¹(x)`, one node at a time.
    pub fn recover(&self, x: &[f64]) -> Result<Vec<f64>, ScmError> {
        let d = self.scm.dim();
        if x.len() != d {
            return Err(ScmError::Dimension {
                expected: d,
                got: x.len(),
            });
        }
        let mut u = vec![0.0; d];
        for i in 0..d {
            u[i] = match self.kinds[i] {
                MechanismKind::LinearRow | MechanismKind::AdditiveNoise => x[i] - self.eval(i, x, &u)?,
                MechanismKind::MonotoneNoise { increasing } => self.bisect(i, x, &mut u, increasing)?,
                MechanismKind::Opaque => {
                    let reason = if noise_under_indicator(&self.bodies[i], Var::U(i + 1)) {
                        "an indicator of the noise is not injective".to_string()
                    } else {
                        format!("noise does not enter {} monotonically", self.bodies[i])
                    };
                    return Err(ScmError::NotInvertible {
                        node: node_name(i),
                        reason,
                    });
                }
            };
        }
        Ok(u)
    }

    fn bisect(&self, i: usize, x: &[f64], u: &mut [f64], increasing: bool) -> Result<f64, ScmError> {
        let target = x[i];
        let fail = || ScmError::Bracket {
            node: node_name(i),
            target,
        };
        let sign = if increasing { 1.0 } else { -1.0 };
        let g = |t: f64, u: &mut [f64]| -> Result<f64, ScmError> {
            u[i] = t;
            Ok(sign * (self.eval(i, x, u).map_err(|_| fail())? - target))
        };
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        let mut bracketed = false;
        for _ in 0..MAX_DOUBLINGS {
            let (glo, ghi) = (g(lo, u)?, g(hi, u)?);
            if glo == 0.0 {
                return Ok(lo);
            }
            if ghi == 0.0 {
                return Ok(hi);
            }
            if glo < 0.0 && ghi > 0.0 {
                bracketed = true;
                break;
            }
            if glo > 0.0 {
                lo *= 2.0;
            }
            if ghi < 0.0 {
                hi *= 2.0;
            }
        }
        if !bracketed {
            return Err(fail());
        }
        let mut mid = 0.5 * (lo + hi);
        for _ in 0..MAX_DOUBLINGS {
            mid = 0.5 * (lo + hi);
            if hi - lo <= BISECTION_TOL * mid.abs().max(1.0) {
                break;
            }
            let gm = g(mid, u)?;
            if gm == 0.0 {
                break;
            }
            if gm < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(mid)
    }
}

/// `g_a(u)`.
pub fn solve_forward(m: &Scm, a: f64, u: &[f64]) -> Result<Vec<f64>, ScmError> {
    World::new(m, a).forward(u)
}

/// `g_a⁻¹(x)`.
pub fn recover_noise(m: &Scm, a: f64, x: &[f64]) -> Result<Vec<f64>, ScmError> {
    World::new(m, a).recover(x)
}

/// `C_{a'←a}(x) = g_{a'}(g_a⁻¹(x))`.
pub fn counterfactual_point(m: &Scm, a: f64, a_prime: f64, x: &[f64]) -> Result<Vec<f64>, ScmError> {
    World::new(m, a_prime).forward(&World::new(m, a).recover(x)?)
}

/// Constant shift `(Id − M)⁻¹ m (a' − a)` of a linear model's counterfactual.
pub fn linear_counterfactual(m: &Scm, a: f64, a_prime: f64) -> Result<Vec<f64>, ScmError> {
    let block = linear_block(m)?;
    let inv = block.inverse.ok_or_else(|| ScmError::Singular("X".into()))?;
    Ok(inv
        .iter()
        .map(|row| row.iter().zip(&block.m_a).map(|(p, q)| p * q).sum::<f64>() * (a_prime - a))
        .collect())
}

fn map_err(e: ScmError) -> MapError {
    MapError::Evaluation(e.to_string())
}

/// `g_a` as a map on noise vectors.
#[derive(Debug, Clone)]
pub struct Subsolution<'m> {
    world: World<'m>,
}

impl<'m> Subsolution<'m> {
    pub fn new(m: &'m Scm, a: f64) -> Self {
        Self { world: World::new(m, a) }
    }
}

impl PointMap<f64> for Subsolution<'_> {
    fn dim(&self) -> usize {
        self.world.scm.dim()
    }
    fn eval(&self, u: &[f64]) -> Result<Vec<f64>, MapError> {
        check_dim(self.dim(), u)?;
        self.world.forward(u).map_err(map_err)
    }
}

/// `g_a⁻¹` as a map on outcomes.
#[derive(Debug, Clone)]
pub struct InverseSubsolution<'m> {
    world: World<'m>,
}

impl<'m> InverseSubsolution<'m> {
    pub fn new(m: &'m Scm, a: f64) -> Self {
        Self { world: World::new(m, a) }
    }
}

impl PointMap<f64> for InverseSubsolution<'_> {
    fn dim(&self) -> usize {
        self.world.scm.dim()
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>, MapError> {
        check_dim(self.dim(), x)?;
        self.world.recover(x).map_err(map_err)
    }
}

/// `C_{a'←a}` as a map on outcomes.
#[derive(Debug, Clone)]
pub struct CounterfactualMap<'m> {
    from: World<'m>,
    to: World<'m>,
}

impl<'m> CounterfactualMap<'m> {
    pub fn new(m: &'m Scm, a: f64, a_prime: f64) -> Self {
        Self {
            from: World::new(m, a),
            to: World::new(m, a_prime),
        }
    }
}

impl PointMap<f64> for CounterfactualMap<'_> {
    fn dim(&self) -> usize {
        self.from.scm.dim()
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>, MapError> {
        check_dim(self.dim(), x)?;
        self.from
            .recover(x)
            .and_then(|u| self.to.forward(&u))
            .map_err(map_err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_scm;

    #[test]
    fn gene_smoking_closed_forms() {
        let m = parse_scm("X1 = U1\nA = ind(X1 + UA)\nX2 = 0.5*X1 + 2*A + U2").unwrap();
        assert_eq!(solve_forward(&m, 1.0, &[0.3, -0.2]).unwrap(), vec![0.3, 0.5 * 0.3 + 2.0 - 0.2]);
        assert_eq!(counterfactual_point(&m, 0.0, 1.0, &[1.0, 2.0]).unwrap(), vec![1.0, 4.0]);
        assert_eq!(linear_counterfactual(&m, 0.0, 1.0).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn cyclic_fixed_point() {
        let m = parse_scm("X2 = X1*X3 + U2\nX3 = A*X2 + U3\nX1 = U1\nA = UA").unwrap();
        let (a, u) = (0.8, [0.5, 0.3, -0.7]);
        let x = solve_forward(&m, a, &u).unwrap();
        let den = 1.0 - a * u[0];
        let want = [u[0], (u[0] * u[2] + u[1]) / den, (a * u[1] + u[2]) / den];
        for (p, q) in x.iter().zip(want) {
            assert!((p - q).abs() < 1e-10, "{x:?} vs {want:?}");
        }
        let back = recover_noise(&m, a, &x).unwrap();
        for (p, q) in back.iter().zip(u) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn divergence_is_an_error() {
        let m = parse_scm("X1 = 3*exp(X2) + U1\nX2 = X1 + U2").unwrap();
        let r = solve_forward(&m, 0.0, &[1.0, 1.0]);
        assert!(matches!(r, Err(ScmError::FixedPoint { .. })), "{r:?}");
    }

    #[test]
    fn monotone_inversion_and_errors() {
        let m = parse_scm("X1 = exp(U1)\nX2 = X1 - 2*exp(U2)").unwrap();
        let x = solve_forward(&m, 0.0, &[0.25, -1.5]).unwrap();
        let u = recover_noise(&m, 0.0, &x).unwrap();
        assert!((u[0] - 0.25).abs() < 1e-11 && (u[1] + 1.5).abs() < 1e-11, "{u:?}");
        assert!(matches!(recover_noise(&m, 0.0, &[-1.0, 0.0]), Err(ScmError::Bracket { .. })));

        let ind = parse_scm("X1 = ind(U1 - 0.5)").unwrap();
        let err = recover_noise(&ind, 0.0, &[1.0]).unwrap_err();
        assert!(err.to_string().contains("indicator"), "{err}");

        let flip = parse_scm("X1 = (2*A - 1)*U1").unwrap();
        assert_eq!(recover_noise(&flip, 0.0, &[0.25]).unwrap(), vec![-0.25]);
        assert_eq!(recover_noise(&flip, 1.0, &[0.25]).unwrap(), vec![0.25]);
        assert!(recover_noise(&flip, 0.5, &[0.25]).is_err());
        assert!(linear_counterfactual(&flip, 0.0, 1.0).is_err());
    }
}
