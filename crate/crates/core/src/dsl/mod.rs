//! Structural-equation text format.
//!
//! ```text
//! # comments run to end of line
//! X1 = U1
//! A  = ind(X1 + UA)
//! X2 = 0.5*X1 + 2*A + U2
//! U1 ~ gaussian(0, 1)      # optional noise declarations
//! ```
//!
//! Equations are separated by newlines or `;`. Expressions use `+ - * /`,
//! unary minus, parentheses and the functions `exp`, `ind` (1 if the
//! argument is positive, else 0) and `neg`. Noises default to
//! `uniform(0, 1)`; `gaussian(mean, sd)` and `point(v)` are also accepted.

mod parser;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checks::{check_dim, MapError, PointMap};

pub use parser::{parse_expr, parse_scm};

/// Variable reference. Indices are 1-based as written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Var {
    X(usize),
    A,
    U(usize),
    UA,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "X{i}"),
            Var::A => f.write_str("A"),
            Var::U(i) => write!(f, "U{i}"),
            Var::UA => f.write_str("UA"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnaryOp {
    Neg,
    Exp,
    Ind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expr {
    Num(f64),
    Var(Var),
    Unary(UnaryOp, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("{0} is not bound")]
    Unbound(Var),
    #[error("non-finite result")]
    NonFinite,
}

/// Values of every symbol an expression may reference.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub x: &'a [f64],
    pub a: f64,
    pub u: &'a [f64],
    pub ua: f64,
}

impl Expr {
    pub fn num(v: f64) -> Self {
        Expr::Num(v)
    }

    pub fn var(v: Var) -> Self {
        Expr::Var(v)
    }

    pub fn unary(op: UnaryOp, e: Expr) -> Self {
        Expr::Unary(op, Box::new(e))
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Self {
        Expr::Bin(op, Box::new(l), Box::new(r))
    }

    pub fn eval(&self, env: &Env<'_>) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(v) => match *v {
                Var::X(i) => *env.x.get(i.wrapping_sub(1)).ok_or(EvalError::Unbound(*v))?,
                Var::U(i) => *env.u.get(i.wrapping_sub(1)).ok_or(EvalError::Unbound(*v))?,
                Var::A => env.a,
                Var::UA => env.ua,
            },
            Expr::Unary(op, e) => {
                let x = e.eval(env)?;
                match op {
                    UnaryOp::Neg => -x,
                    UnaryOp::Exp => x.exp(),
                    UnaryOp::Ind => f64::from(u8::from(x > 0.0)),
                }
            }
            Expr::Bin(op, l, r) => {
                let (x, y) = (l.eval(env)?, r.eval(env)?);
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        x / y
                    }
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Calls `f` on every variable occurrence, left to right.
    pub fn visit_vars(&self, f: &mut impl FnMut(Var)) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => f(*v),
            Expr::Unary(_, e) => e.visit_vars(f),
            Expr::Bin(_, l, r) => {
                l.visit_vars(f);
                r.visit_vars(f);
            }
        }
    }

    pub fn count(&self, v: Var) -> usize {
        let mut n = 0;
        self.visit_vars(&mut |w| n += usize::from(w == v));
        n
    }

    pub fn mentions(&self, v: Var) -> bool {
        self.count(v) > 0
    }

    /// Replaces every occurrence of `v` by `by`.
    pub fn substitute(&self, v: Var, by: &Expr) -> Expr {
        match self {
            Expr::Var(w) if *w == v => by.clone(),
            Expr::Num(_) | Expr::Var(_) => self.clone(),
            Expr::Unary(op, e) => Expr::unary(*op, e.substitute(v, by)),
            Expr::Bin(op, l, r) => Expr::bin(*op, l.substitute(v, by), r.substitute(v, by)),
        }
    }

    /// Evaluates variable-free subtrees. Subtrees whose evaluation fails
    /// (for instance a constant division by zero) are kept as written.
    pub fn fold(&self) -> Expr {
        let folded = match self {
            Expr::Num(_) | Expr::Var(_) => return self.clone(),
            Expr::Unary(op, e) => Expr::unary(*op, e.fold()),
            Expr::Bin(op, l, r) => Expr::bin(*op, l.fold(), r.fold()),
        };
        let constant = match &folded {
            Expr::Unary(_, e) => matches!(**e, Expr::Num(_)),
            Expr::Bin(_, l, r) => matches!(**l, Expr::Num(_)) && matches!(**r, Expr::Num(_)),
            _ => false,
        };
        if constant {
            let env = Env {
                x: &[],
                a: 0.0,
                u: &[],
                ua: 0.0,
            };
            if let Ok(v) = folded.eval(&env) {
                return Expr::Num(v);
            }
        }
        folded
    }

    /// Affine decomposition `Σ c_v·v + c_0`, or `None` if the expression is
    /// not affine in its variables.
    pub fn affine(&self) -> Option<Affine> {
        match self {
            Expr::Num(v) => Some(Affine::constant(*v)),
            Expr::Var(v) => Some(Affine {
                coeffs: BTreeMap::from([(*v, 1.0)]),
                constant: 0.0,
            }),
            Expr::Unary(UnaryOp::Neg, e) => Some(e.affine()?.scale(-1.0)),
            Expr::Unary(op, e) => {
                let inner = e.affine()?;
                if !inner.coeffs.is_empty() {
                    return None;
                }
                let c = inner.constant;
                Some(Affine::constant(match op {
                    UnaryOp::Exp => c.exp(),
                    UnaryOp::Ind => f64::from(u8::from(c > 0.0)),
                    UnaryOp::Neg => unreachable!(),
                }))
            }
            Expr::Bin(op, l, r) => {
                let (l, r) = (l.affine()?, r.affine()?);
                match op {
                    BinOp::Add => Some(l.add(&r, 1.0)),
                    BinOp::Sub => Some(l.add(&r, -1.0)),
                    BinOp::Mul if l.coeffs.is_empty() => Some(r.scale(l.constant)),
                    BinOp::Mul if r.coeffs.is_empty() => Some(l.scale(r.constant)),
                    BinOp::Div if r.coeffs.is_empty() && r.constant != 0.0 => Some(l.scale(1.0 / r.constant)),
                    _ => None,
                }
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Num(v) if v.is_sign_negative() => 3,
            Expr::Num(_) | Expr::Var(_) => 4,
            Expr::Unary(UnaryOp::Neg, _) => 3,
            Expr::Unary(..) => 4,
            Expr::Bin(op, ..) => op.precedence(),
        }
    }
}

/// Serializes with the fewest parentheses that reparse to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, e: &Expr, paren: bool| {
            if paren {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Unary(UnaryOp::Neg, e) => {
                f.write_str("-")?;
                wrap(f, e, e.precedence() < 3)
            }
            Expr::Unary(op, e) => {
                let name = if *op == UnaryOp::Exp { "exp" } else { "ind" };
                write!(f, "{name}({e})")
            }
            Expr::Bin(op, l, r) => {
                let p = op.precedence();
                wrap(f, l, l.precedence() < p)?;
                write!(f, " {} ", op.symbol())?;
                wrap(f, r, r.precedence() <= p)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub coeffs: BTreeMap<Var, f64>,
    pub constant: f64,
}

impl Affine {
    fn constant(c: f64) -> Self {
        Self {
            coeffs: BTreeMap::new(),
            constant: c,
        }
    }

    fn scale(mut self, s: f64) -> Self {
        self.coeffs.values_mut().for_each(|c| *c *= s);
        self.constant *= s;
        self.coeffs.retain(|_, c| *c != 0.0);
        self
    }

    fn add(mut self, other: &Affine, sign: f64) -> Self {
        for (v, c) in &other.coeffs {
            *self.coeffs.entry(*v).or_insert(0.0) += sign * c;
        }
        self.constant += sign * other.constant;
        self.coeffs.retain(|_, c| *c != 0.0);
        self
    }

    pub fn coeff(&self, v: Var) -> f64 {
        self.coeffs.get(&v).copied().unwrap_or(0.0)
    }
}

/// Structural class of a mechanism with respect to its noise symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MechanismKind {
    /// Affine in parents plus the bare noise.
    LinearRow,
    /// `h(parents) + noise`.
    AdditiveNoise,
    /// Noise enters once through strictly monotone operations.
    MonotoneNoise { increasing: bool },
    Opaque,
}

impl MechanismKind {
    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::LinearRow => "linear_row",
            MechanismKind::AdditiveNoise => "additive_noise",
            MechanismKind::MonotoneNoise { .. } => "monotone_noise",
            MechanismKind::Opaque => "opaque",
        }
    }

    /// Noise can be recovered from the node value and its parents.
    pub fn invertible(self) -> bool {
        self != MechanismKind::Opaque
    }
}

pub fn classify_mechanism(ast: &Expr, noise: Var) -> MechanismKind {
    if ast.count(noise) != 1 {
        return MechanismKind::Opaque;
    }
    if let Some(aff) = ast.affine() {
        if aff.coeff(noise) == 1.0 {
            return MechanismKind::LinearRow;
        }
    }
    let mut terms = Vec::new();
    signed_terms(ast, true, &mut terms);
    if terms.iter().any(|(t, plus)| *plus && **t == Expr::Var(noise)) {
        return MechanismKind::AdditiveNoise;
    }
    match monotone_direction(ast, noise) {
        Some(increasing) => MechanismKind::MonotoneNoise { increasing },
        None => MechanismKind::Opaque,
    }
}

fn signed_terms<'a>(e: &'a Expr, plus: bool, out: &mut Vec<(&'a Expr, bool)>) {
    match e {
        Expr::Bin(BinOp::Add, l, r) => {
            signed_terms(l, plus, out);
            signed_terms(r, plus, out);
        }
        Expr::Bin(BinOp::Sub, l, r) => {
            signed_terms(l, plus, out);
            signed_terms(r, !plus, out);
        }
        _ => out.push((e, plus)),
    }
}

fn constant_sign(e: &Expr) -> Option<bool> {
    match e.affine() {
        Some(a) if a.coeffs.is_empty() && a.constant != 0.0 => Some(a.constant > 0.0),
        _ => None,
    }
}

/// `Some(true)` if increasing in `noise`, `Some(false)` if decreasing,
/// `None` if monotonicity cannot be established structurally.
fn monotone_direction(e: &Expr, noise: Var) -> Option<bool> {
    match e {
        Expr::Var(v) if *v == noise => Some(true),
        Expr::Num(_) | Expr::Var(_) => None,
        Expr::Unary(UnaryOp::Neg, inner) => monotone_direction(inner, noise).map(|d| !d),
        Expr::Unary(UnaryOp::Exp, inner) => monotone_direction(inner, noise),
        Expr::Unary(UnaryOp::Ind, _) => None,
        Expr::Bin(op, l, r) => {
            let in_left = l.mentions(noise);
            let (with, without) = if in_left { (l, r) } else { (r, l) };
            let inner = monotone_direction(with, noise)?;
            match op {
                BinOp::Add => Some(inner),
                BinOp::Sub => Some(if in_left { inner } else { !inner }),
                BinOp::Mul => constant_sign(without).map(|pos| inner == pos),
                BinOp::Div if in_left => constant_sign(without).map(|pos| inner == pos),
                BinOp::Div => None,
            }
        }
    }
}

/// True if an indicator sits on the path from the root to `noise`.
pub fn noise_under_indicator(e: &Expr, noise: Var) -> bool {
    match e {
        Expr::Num(_) | Expr::Var(_) => false,
        Expr::Unary(UnaryOp::Ind, inner) => inner.mentions(noise),
        Expr::Unary(_, inner) => noise_under_indicator(inner, noise),
        Expr::Bin(_, l, r) => noise_under_indicator(l, noise) || noise_under_indicator(r, noise),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DslError {
    #[error("line {line}, column {column}: {msg}")]
    Syntax { line: usize, column: usize, msg: String },
    #[error("line {line}: duplicate equation for {name}")]
    Duplicate { line: usize, name: String },
    #[error("line {line}, column {column}: undeclared symbol {name}")]
    Undeclared { line: usize, column: usize, name: String },
    #[error("line {line}: self-reference: {name} appears on its own right-hand side")]
    SelfReference { line: usize, name: String },
    #[error("line {line}: {msg}")]
    Noise { line: usize, msg: String },
    #[error("{0}")]
    Model(String),
}

/// An expression in the variables `X1..Xd` viewed as a map `R^d -> R`
/// per output, with `A` and noises fixed.
#[derive(Debug, Clone)]
pub struct ExprMap {
    outputs: Vec<Expr>,
    a: f64,
}

impl ExprMap {
    /// Output `i` is `outputs[i]` evaluated at `X = x`.
    pub fn new(outputs: Vec<Expr>, a: f64) -> Self {
        Self { outputs, a }
    }
}

impl PointMap<f64> for ExprMap {
    fn dim(&self) -> usize {
        self.outputs.len()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>, MapError> {
        check_dim(self.dim(), x)?;
        let env = Env {
            x,
            a: self.a,
            u: &[],
            ua: 0.0,
        };
        self.outputs
            .iter()
            .map(|e| e.eval(&env).map_err(|err| MapError::Evaluation(format!("{e}: {err}"))))
            .collect()
    }
}
