use super::{AMechanism, NoiseSpec, Scm, ScmError};
use crate::dsl::{classify_mechanism, parse_expr, parse_scm, BinOp, Expr, MechanismKind, Var};

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 3] = ["gene-smoking", "cyclic-triangular", "qp-linear"];

/// A named worked model with the intervention values it is usually probed at.
#[derive(Debug, Clone, PartialEq)]
pub struct Builtin {
    pub name: &'static str,
    pub model: Scm,
    pub a_values: Vec<f64>,
}

const GENE_SMOKING: &str = "\
# alpha = 0.5, beta = 2
X1 = U1
A = ind(X1 + UA)
X2 = 0.5*X1 + 2*A + U2
U1 ~ gaussian(0, 1)
U2 ~ gaussian(0, 1)
UA ~ gaussian(0, 1)
";

// |a·u1| ≤ 1/4 on the declared support and a-values, so 1 − a·u1 stays away from zero.
const CYCLIC_TRIANGULAR: &str = "\
A = UA
X1 = U1
X2 = X1*X3 + U2
X3 = A*X2 + U3
U1 ~ uniform(-0.5, 0.5)
UA ~ uniform(-0.5, 0.5)
";

fn qp_linear() -> Result<Scm, ScmError> {
    let row = |text: &str| parse_expr(text).map_err(|e| ScmError::Parameter(e.to_string()));
    Scm::new(
        vec![
            row("A - (1/3)*X1 + (2/3)*X2 + U1")?,
            row("A + (2/3)*X1 - (1/3)*X2 + U2")?,
        ],
        AMechanism::Equation(Expr::Var(Var::UA)),
        vec![NoiseSpec::default(); 2],
        NoiseSpec::default(),
    )
}

pub fn builtin(name: &str) -> Result<Builtin, ScmError> {
    let parsed = |text: &str| parse_scm(text).map_err(|e| ScmError::Parameter(e.to_string()));
    Ok(match name {
        "gene-smoking" => Builtin {
            name: "gene-smoking",
            model: parsed(GENE_SMOKING)?,
            a_values: vec![0.0, 0.5, 1.0],
        },
        "cyclic-triangular" => Builtin {
            name: "cyclic-triangular",
            model: parsed(CYCLIC_TRIANGULAR)?,
            a_values: vec![-0.5, 0.0, 0.5],
        },
        "qp-linear" => Builtin {
            name: "qp-linear",
            model: qp_linear()?,
            a_values: vec![0.0, 0.5, 1.0],
        },
        other => {
            return Err(ScmError::Parameter(format!(
                "unknown builtin model {other:?}; expected one of {}",
                BUILTIN_NAMES.join(", ")
            )))
        }
    })
}

/// Replaces the noise `U_{i+1}` by `φ(Ũ)` in its mechanism, where `phi` is
/// an expression in `U_{i+1}` that must be strictly monotone, and gives `Ũ`
/// the law `noise`.
pub fn reparameterize(m: &Scm, i: usize, phi: &Expr, noise: NoiseSpec) -> Result<Scm, ScmError> {
    let u = Var::U(i + 1);
    let mut foreign = None;
    phi.visit_vars(&mut |v| {
        if v != u {
            foreign = Some(v);
        }
    });
    if let Some(v) = foreign {
        return Err(ScmError::Parameter(format!("reparameterization may only use {u}, found {v}")));
    }
    if classify_mechanism(phi, u) == MechanismKind::Opaque {
        return Err(ScmError::Parameter(format!("{phi} is not strictly monotone in {u}")));
    }
    if i >= m.dim() {
        return Err(ScmError::UnknownTarget(format!("U{}", i + 1)));
    }
    let body = m.mechanism(i).substitute(u, phi);
    m.with_mechanism(i, body, noise)
}

/// `lo + (hi − lo)(t + 1)/2`: maps `uniform(−1, 1)` onto `uniform(lo, hi)`.
pub fn affine_rescale(i: usize, lo: f64, hi: f64) -> Expr {
    let t = Expr::Var(Var::U(i + 1));
    let half = Expr::Num(0.5 * (hi - lo));
    Expr::bin(
        BinOp::Add,
        Expr::Num(lo),
        Expr::bin(BinOp::Mul, half, Expr::bin(BinOp::Add, t, Expr::Num(1.0))),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{counterfactual_point, linear_block, validate};

    #[test]
    fn all_builtins_load() {
        for name in BUILTIN_NAMES {
            let b = builtin(name).unwrap();
            assert_eq!(b.name, name);
            assert!(validate(&b.model).is_ok());
        }
        assert!(builtin("nope").is_err());
    }

    #[test]
    fn qp_linear_block() {
        let m = builtin("qp-linear").unwrap().model;
        let lin = linear_block(&m).unwrap();
        let inv = lin.inverse.unwrap();
        for (row, want) in inv.iter().zip([[1.0, 0.5], [0.5, 1.0]]) {
            for (p, q) in row.iter().zip(want) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reparameterized_counterfactuals_agree() {
        let m = builtin("cyclic-triangular").unwrap().model;
        let r = reparameterize(&m, 0, &affine_rescale(0, -0.5, 0.5), NoiseSpec::Uniform { lo: -1.0, hi: 1.0 }).unwrap();
        let x = [0.3, 0.7, -0.2];
        let (p, q) = (
            counterfactual_point(&m, 0.0, 0.5, &x).unwrap(),
            counterfactual_point(&r, 0.0, 0.5, &x).unwrap(),
        );
        for (s, t) in p.iter().zip(&q) {
            assert!((s - t).abs() < 1e-12);
        }
        let bad = parse_expr("U1*U1").unwrap();
        assert!(reparameterize(&m, 0, &bad, NoiseSpec::default()).is_err());
    }
}
