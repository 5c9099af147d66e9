//! Structural causal models with a single intervenable node `A`.
//!
//! A model has endogenous nodes `X1..Xd` and `A`, one independent noise per
//! node, and one mechanism per node given as an [`Expr`]. Fixing `A = a`
//! gives the subsolution map `g_a: u ↦ x`; counterfactuals are
//! `C_{a'←a} = g_{a'} ∘ g_a⁻¹`.

mod builtins;
mod kr_repr;
mod sample;
mod solve;

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DMatrix;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{classify_mechanism, Expr, MechanismKind, Var};

pub use builtins::{affine_rescale, builtin, reparameterize, Builtin, BUILTIN_NAMES};
pub use kr_repr::{kr_scm_from_marginals, KrModel};
pub use sample::{counterfactual_matching, interventional_sample, noise_sample};
pub use solve::{
    counterfactual_point, linear_counterfactual, recover_noise, solve_forward, CounterfactualMap, FixedPointOptions,
    InverseSubsolution, Subsolution, World,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScmError {
    #[error("{node} references {var}, which is not a node of the model")]
    Dangling { node: String, var: String },
    #[error("self-reference: {0} must enter its own mechanism linearly")]
    SelfReference(String),
    #[error("{node} uses the noise {var} of another node")]
    ForeignNoise { node: String, var: String },
    #[error("invalid noise law for {node}: {msg}")]
    Noise { node: String, msg: String },
    #[error("expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("Id - M is singular on {0}")]
    Singular(String),
    #[error("model is not linear: {0}")]
    NotLinear(String),
    #[error("fixed-point iteration on {nodes} did not converge in {iterations} iterations (residual {residual:e})")]
    FixedPoint {
        nodes: String,
        iterations: usize,
        residual: f64,
    },
    #[error("evaluating {node}: {msg}")]
    Evaluation { node: String, msg: String },
    #[error("cannot recover the noise of {node}: {reason}")]
    NotInvertible { node: String, reason: String },
    #[error("no noise value reproduces {node} = {target}: bracket search failed")]
    Bracket { node: String, target: f64 },
    #[error("only A can be intervened on, not {0}")]
    UnknownTarget(String),
    #[error("sample size must be positive")]
    EmptySample,
    #[error("{0}")]
    Kr(String),
    #[error("{0}")]
    Parameter(String),
}

/// Law of one exogenous variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum NoiseSpec {
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, sd: f64 },
    Point { value: f64 },
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::Uniform { lo: 0.0, hi: 1.0 }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            NoiseSpec::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            NoiseSpec::Gaussian { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
            NoiseSpec::Point { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("{self}"))
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            NoiseSpec::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            NoiseSpec::Gaussian { mean, sd } => Normal::new(mean, sd).expect("validated law").sample(rng),
            NoiseSpec::Point { value } => value,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            NoiseSpec::Uniform { lo, hi } => 0.5 * (lo + hi),
            NoiseSpec::Gaussian { mean, .. } => mean,
            NoiseSpec::Point { value } => value,
        }
    }

    pub fn sd(&self) -> f64 {
        match *self {
            NoiseSpec::Uniform { lo, hi } => (hi - lo) / 12f64.sqrt(),
            NoiseSpec::Gaussian { sd, .. } => sd,
            NoiseSpec::Point { .. } => 0.0,
        }
    }
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseSpec::Uniform { lo, hi } => write!(f, "uniform({lo}, {hi})"),
            NoiseSpec::Gaussian { mean, sd } => write!(f, "gaussian({mean}, {sd})"),
            NoiseSpec::Point { value } => write!(f, "point({value})"),
        }
    }
}

/// Mechanism of `A`: an equation, or a constant after `do(A, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AMechanism {
    Equation(Expr),
    Constant(f64),
}

/// Perfect intervention `do(target = value)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub target: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Equation {
    pub(crate) body: Expr,
    pub(crate) kind: MechanismKind,
    /// Referenced `X` indices (0-based), excluding the node itself.
    pub(crate) x_parents: Vec<usize>,
    pub(crate) uses_a: bool,
    pub(crate) self_loop: bool,
}

/// A structural causal model. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScmRepr", into = "ScmRepr")]
pub struct Scm {
    equations: Vec<Equation>,
    a: AMechanism,
    a_parents: Vec<usize>,
    noise: Vec<NoiseSpec>,
    noise_a: NoiseSpec,
    /// Strongly connected components of the `X` graph, in topological order.
    components: Vec<Vec<usize>>,
}

/// JSON mirror of a model.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScmRepr {
    x: Vec<EquationRepr>,
    a: AMechanism,
    #[serde(default)]
    noise_a: NoiseSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EquationRepr {
    node: String,
    body: Expr,
    #[serde(default, skip_deserializing)]
    text: String,
    #[serde(default, skip_deserializing)]
    kind: Option<MechanismKind>,
    #[serde(default)]
    noise: NoiseSpec,
}

impl From<Scm> for ScmRepr {
    fn from(m: Scm) -> Self {
        ScmRepr {
            x: m.equations
                .iter()
                .zip(&m.noise)
                .enumerate()
                .map(|(i, (eq, noise))| EquationRepr {
                    node: format!("X{}", i + 1),
                    text: eq.body.to_string(),
                    body: eq.body.clone(),
                    kind: Some(eq.kind),
                    noise: *noise,
                })
                .collect(),
            a: m.a,
            noise_a: m.noise_a,
        }
    }
}

impl TryFrom<ScmRepr> for Scm {
    type Error = ScmError;

    fn try_from(r: ScmRepr) -> Result<Self, ScmError> {
        for (i, eq) in r.x.iter().enumerate() {
            if eq.node != format!("X{}", i + 1) {
                return Err(ScmError::Parameter(format!("equation {} is labelled {}", i + 1, eq.node)));
            }
        }
        let noise = r.x.iter().map(|e| e.noise).collect();
        Scm::new(r.x.into_iter().map(|e| e.body).collect(), r.a, noise, r.noise_a)
    }
}

fn node_name(i: usize) -> String {
    format!("X{}", i + 1)
}

/// True if `e` is affine in `v`, with a coefficient that may depend on the
/// other variables.
fn linear_in(e: &Expr, v: Var) -> bool {
    use crate::dsl::{BinOp, UnaryOp};
    match e {
        Expr::Num(_) | Expr::Var(_) => true,
        Expr::Unary(UnaryOp::Neg, inner) => linear_in(inner, v),
        Expr::Unary(_, inner) => !inner.mentions(v),
        Expr::Bin(BinOp::Add | BinOp::Sub, l, r) => linear_in(l, v) && linear_in(r, v),
        Expr::Bin(BinOp::Mul, l, r) => {
            (linear_in(l, v) && !r.mentions(v)) || (!l.mentions(v) && linear_in(r, v))
        }
        Expr::Bin(BinOp::Div, l, r) => linear_in(l, v) && !r.mentions(v),
    }
}

impl Scm {
    /// Builds and checks a model. `x[i]` is the mechanism of `X{i+1}`.
    ///
    /// A node may appear in its own mechanism only linearly; the fixed point
    /// of such an equation is then part of the simultaneous solve.
    pub fn new(x: Vec<Expr>, a: AMechanism, noise: Vec<NoiseSpec>, noise_a: NoiseSpec) -> Result<Self, ScmError> {
        let d = x.len();
        if d == 0 {
            return Err(ScmError::Parameter("model needs at least one X node".into()));
        }
        if noise.len() != d {
            return Err(ScmError::Dimension {
                expected: d,
                got: noise.len(),
            });
        }
        for (i, spec) in noise.iter().enumerate() {
            spec.validate().map_err(|msg| ScmError::Noise {
                node: format!("U{}", i + 1),
                msg,
            })?;
        }
        noise_a.validate().map_err(|msg| ScmError::Noise {
            node: "UA".into(),
            msg,
        })?;

        let mut equations = Vec::with_capacity(d);
        for (i, body) in x.into_iter().enumerate() {
            let me = Var::X(i + 1);
            let mut parents = BTreeSet::new();
            let mut uses_a = false;
            let mut bad = None;
            body.visit_vars(&mut |v| match v {
                Var::X(j) if j == 0 || j > d => bad = Some(ScmError::Dangling {
                    node: node_name(i),
                    var: v.to_string(),
                }),
                Var::X(j) if j != i + 1 => {
                    parents.insert(j - 1);
                }
                Var::A => uses_a = true,
                Var::U(j) if j != i + 1 => bad = Some(ScmError::ForeignNoise {
                    node: node_name(i),
                    var: v.to_string(),
                }),
                Var::UA => bad = Some(ScmError::ForeignNoise {
                    node: node_name(i),
                    var: v.to_string(),
                }),
                _ => {}
            });
            if let Some(e) = bad {
                return Err(e);
            }
            let self_loop = body.mentions(me);
            if self_loop && !linear_in(&body, me) {
                return Err(ScmError::SelfReference(node_name(i)));
            }
            equations.push(Equation {
                kind: classify_mechanism(&body, Var::U(i + 1)),
                body,
                x_parents: parents.into_iter().collect(),
                uses_a,
                self_loop,
            });
        }

        let mut a_parents = BTreeSet::new();
        if let AMechanism::Equation(body) = &a {
            let mut bad = None;
            body.visit_vars(&mut |v| match v {
                Var::X(j) if j == 0 || j > d => bad = Some(ScmError::Dangling {
                    node: "A".into(),
                    var: v.to_string(),
                }),
                Var::X(j) => {
                    a_parents.insert(j - 1);
                }
                Var::A => bad = Some(ScmError::SelfReference("A".into())),
                Var::U(_) => bad = Some(ScmError::ForeignNoise {
                    node: "A".into(),
                    var: v.to_string(),
                }),
                Var::UA => {}
            });
            if let Some(e) = bad {
                return Err(e);
            }
        } else if let AMechanism::Constant(v) = a {
            if !v.is_finite() {
                return Err(ScmError::Parameter(format!("intervention value {v} is not finite")));
            }
        }

        let components = x_components(&equations);
        Ok(Self {
            equations,
            a,
            a_parents: a_parents.into_iter().collect(),
            noise,
            noise_a,
            components,
        })
    }

    /// Number of `X` nodes.
    pub fn dim(&self) -> usize {
        self.equations.len()
    }

    pub fn mechanism(&self, i: usize) -> &Expr {
        &self.equations[i].body
    }

    pub fn mechanism_kind(&self, i: usize) -> MechanismKind {
        self.equations[i].kind
    }

    pub fn a_mechanism(&self) -> &AMechanism {
        &self.a
    }

    pub fn noise(&self) -> &[NoiseSpec] {
        &self.noise
    }

    pub fn noise_a(&self) -> NoiseSpec {
        self.noise_a
    }

    pub(crate) fn equations(&self) -> &[Equation] {
        &self.equations
    }

    pub(crate) fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    /// Parents of `X{i+1}` by name, `A` last.
    pub fn parents(&self, i: usize) -> Vec<String> {
        let eq = &self.equations[i];
        let mut out: Vec<String> = eq.x_parents.iter().map(|&j| node_name(j)).collect();
        if eq.self_loop {
            out.push(node_name(i));
            out.sort_by_key(|s| s[1..].parse::<usize>().unwrap_or(0));
        }
        if eq.uses_a {
            out.push("A".into());
        }
        out
    }

    pub fn a_parents(&self) -> Vec<String> {
        self.a_parents.iter().map(|&j| node_name(j)).collect()
    }

    /// Replaces the mechanism of `X{i+1}` and its noise law.
    pub fn with_mechanism(&self, i: usize, body: Expr, noise: NoiseSpec) -> Result<Scm, ScmError> {
        if i >= self.dim() {
            return Err(ScmError::UnknownTarget(node_name(i)));
        }
        let mut x: Vec<Expr> = self.equations.iter().map(|e| e.body.clone()).collect();
        let mut laws = self.noise.clone();
        x[i] = body;
        laws[i] = noise;
        Scm::new(x, self.a.clone(), laws, self.noise_a)
    }

    /// Text form in the structural-equation format.
    pub fn to_dsl(&self) -> String {
        let mut out = String::new();
        match &self.a {
            AMechanism::Equation(e) => out.push_str(&format!("A = {e}\n")),
            AMechanism::Constant(c) => out.push_str(&format!("A = {c}\n")),
        }
        for (i, eq) in self.equations.iter().enumerate() {
            out.push_str(&format!("X{} = {}\n", i + 1, eq.body));
        }
        for (i, n) in self.noise.iter().enumerate() {
            out.push_str(&format!("U{} ~ {n}\n", i + 1));
        }
        if matches!(self.a, AMechanism::Equation(_)) {
            out.push_str(&format!("UA ~ {}\n", self.noise_a));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Scm, ScmError> {
        serde_json::from_str(text).map_err(|e| ScmError::Parameter(format!("invalid model JSON: {e}")))
    }
}

fn x_components(eqs: &[Equation]) -> Vec<Vec<usize>> {
    let mut g = DiGraph::<usize, ()>::new();
    let nodes: Vec<_> = (0..eqs.len()).map(|i| g.add_node(i)).collect();
    for (i, eq) in eqs.iter().enumerate() {
        for &j in &eq.x_parents {
            g.add_edge(nodes[j], nodes[i], ());
        }
    }
    // Tarjan emits components in reverse topological order.
    let mut comps: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|n| g[n]).collect();
            v.sort_unstable();
            v
        })
        .collect();
    comps.reverse();
    comps
}

/// Linear part `x = M x + m a + b + u` of a fully linear `X` block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBlock {
    pub m: Vec<Vec<f64>>,
    pub m_a: Vec<f64>,
    pub b: Vec<f64>,
    /// `(Id − M)⁻¹`, absent when singular.
    pub inverse: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub node: String,
    pub parents: Vec<String>,
    pub kind: Option<MechanismKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub acyclic: bool,
    /// Topological order including `A`, when acyclic.
    pub order: Option<Vec<String>>,
    /// Node sets of the directed cycles (strongly connected components with
    /// more than one node, or with a self-loop).
    pub cycles: Vec<Vec<String>>,
    pub nodes: Vec<NodeSummary>,
    pub linear: Option<LinearBlock>,
}

/// Graph structure and linear block of a model.
pub fn validate(m: &Scm) -> Result<GraphSummary, ScmError> {
    let d = m.dim();
    // Node d is A.
    let name = |i: usize| if i == d { "A".to_string() } else { node_name(i) };
    let mut g = DiGraph::<usize, ()>::new();
    let nodes: Vec<_> = (0..=d).map(|i| g.add_node(i)).collect();
    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); d + 1];
    for (i, eq) in m.equations.iter().enumerate() {
        parents[i] = eq.x_parents.clone();
        if eq.self_loop {
            parents[i].push(i);
        }
        if eq.uses_a {
            parents[i].push(d);
        }
    }
    parents[d] = m.a_parents.clone();
    for (i, ps) in parents.iter().enumerate() {
        for &p in ps {
            g.add_edge(nodes[p], nodes[i], ());
        }
    }

    let mut cycles: Vec<Vec<String>> = tarjan_scc(&g)
        .into_iter()
        .filter(|c| c.len() > 1 || parents[g[c[0]]].contains(&g[c[0]]))
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|n| g[n]).collect();
            v.sort_unstable();
            v.into_iter().map(name).collect()
        })
        .collect();
    cycles.sort();
    let acyclic = cycles.is_empty();

    let order = acyclic.then(|| {
        // Kahn's algorithm, smallest index first (A sorts after the X nodes).
        let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..=d).filter(|&i| indeg[i] == 0).collect();
        let mut out = Vec::new();
        while let Some(&i) = ready.iter().next() {
            ready.remove(&i);
            out.push(name(i));
            for (c, ps) in parents.iter().enumerate() {
                for &p in ps {
                    if p == i {
                        indeg[c] -= 1;
                        if indeg[c] == 0 {
                            ready.insert(c);
                        }
                    }
                }
            }
        }
        out
    });

    let mut summary_nodes: Vec<NodeSummary> = (0..d)
        .map(|i| NodeSummary {
            node: node_name(i),
            parents: m.parents(i),
            kind: Some(m.equations[i].kind),
        })
        .collect();
    summary_nodes.push(NodeSummary {
        node: "A".into(),
        parents: m.a_parents(),
        kind: None,
    });

    Ok(GraphSummary {
        acyclic,
        order,
        cycles,
        nodes: summary_nodes,
        linear: linear_block(m).ok(),
    })
}

/// `M`, `m`, `b` and `(Id − M)⁻¹` of a model whose `X` mechanisms are all
/// linear rows.
pub fn linear_block(m: &Scm) -> Result<LinearBlock, ScmError> {
    let d = m.dim();
    let mut mx = vec![vec![0.0; d]; d];
    let mut ma = vec![0.0; d];
    let mut b = vec![0.0; d];
    for (i, eq) in m.equations.iter().enumerate() {
        if eq.kind != MechanismKind::LinearRow {
            return Err(ScmError::NotLinear(format!("{} is {}", node_name(i), eq.kind.name())));
        }
        let aff = eq.body.affine().expect("linear rows are affine");
        for (j, row) in mx[i].iter_mut().enumerate() {
            *row = aff.coeff(Var::X(j + 1));
        }
        ma[i] = aff.coeff(Var::A);
        b[i] = aff.constant;
    }
    let id_minus = DMatrix::from_fn(d, d, |i, j| f64::from(u8::from(i == j)) - mx[i][j]);
    let inverse = id_minus
        .try_inverse()
        .filter(|inv| inv.iter().all(|v| v.is_finite()))
        .map(|inv| (0..d).map(|i| (0..d).map(|j| inv[(i, j)]).collect()).collect());
    Ok(LinearBlock {
        m: mx,
        m_a: ma,
        b,
        inverse,
    })
}

/// `do(A, value)`: `A`'s mechanism becomes the constant and loses its
/// parents. Everything else is unchanged.
pub fn intervene(m: &Scm, spec: &InterventionSpec) -> Result<Scm, ScmError> {
    if spec.target != "A" {
        return Err(ScmError::UnknownTarget(spec.target.clone()));
    }
    if !spec.value.is_finite() {
        return Err(ScmError::Parameter(format!("intervention value {} is not finite", spec.value)));
    }
    let mut out = m.clone();
    out.a = AMechanism::Constant(spec.value);
    out.a_parents.clear();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_scm;

    #[test]
    fn validate_gene_smoking() {
        let m = parse_scm("X1 = U1\nA = ind(X1 + UA)\nX2 = 0.5*X1 + 2*A + U2").unwrap();
        let s = validate(&m).unwrap();
        assert!(s.acyclic);
        assert_eq!(s.order.unwrap(), vec!["X1", "A", "X2"]);
        let lin = s.linear.unwrap();
        assert_eq!(lin.m, vec![vec![0.0, 0.0], vec![0.5, 0.0]]);
        assert_eq!(lin.m_a, vec![0.0, 2.0]);
        assert_eq!(lin.inverse.unwrap(), vec![vec![1.0, 0.0], vec![0.5, 1.0]]);
    }

    #[test]
    fn validate_cyclic() {
        let m = parse_scm("X2 = X1*X3 + U2\nX3 = A*X2 + U3\nX1 = U1\nA = UA").unwrap();
        let s = validate(&m).unwrap();
        assert!(!s.acyclic);
        assert_eq!(s.cycles, vec![vec!["X2".to_string(), "X3".to_string()]]);
        assert_eq!(s.nodes[1].kind, Some(MechanismKind::AdditiveNoise));
        assert!(s.linear.is_none());
        assert_eq!(m.components(), &[vec![0], vec![1, 2]]);
    }

    #[test]
    fn intervention() {
        let m = parse_scm("X1 = U1\nA = ind(X1 + UA)\nX2 = 0.5*X1 + 2*A + U2").unwrap();
        let spec = InterventionSpec {
            target: "A".into(),
            value: 0.0,
        };
        let once = intervene(&m, &spec).unwrap();
        assert_eq!(intervene(&once, &spec).unwrap(), once);
        assert!(once.a_parents().is_empty());
        assert_eq!(once.mechanism(1), m.mechanism(1));
        assert_eq!(*once.a_mechanism(), AMechanism::Constant(0.0));
        let bad = InterventionSpec {
            target: "X1".into(),
            value: 0.0,
        };
        assert!(matches!(intervene(&m, &bad), Err(ScmError::UnknownTarget(_))));
    }

    #[test]
    fn json_mirror_round_trip() {
        let m = parse_scm("X1 = U1\nA = ind(X1 + UA)\nX2 = 0.5*X1 + 2*A + exp(U2)\nU1 ~ gaussian(0, 2)").unwrap();
        let back = Scm::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert_eq!(parse_scm(&m.to_dsl()).unwrap(), m);
    }
}
