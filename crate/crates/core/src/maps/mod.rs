//! The three canonical transport maps between uniform discrete measures,
//! represented as permutations, plus composition and inversion.

mod kr;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checks::{check_dim, MapError, PointMap};
use crate::measures::DiscreteMeasure;
use crate::ot::{self, cost_matrix, CostSpec, OtError};
use crate::Real;

pub use kr::{kr_map, DEFAULT_TIE_TOL};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchingError {
    #[error("measure {0} does not carry uniform weights")]
    NonUniform(String),
    #[error("cardinality mismatch: {0}")]
    Cardinality(String),
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("cannot compose: inner target {inner} is not outer source {outer}")]
    Endpoint { inner: String, outer: String },
    #[error("epsilon must lie in (0, 1], got {0}")]
    Epsilon(f64),
    #[error(
        "conditional cardinality mismatch at coordinate {coordinate}: source class at value {value} cannot be matched monotonically ({detail})"
    )]
    Conditional {
        coordinate: usize,
        value: f64,
        detail: String,
    },
    #[error("not a permutation: {0}")]
    Permutation(String),
    #[error(transparent)]
    Ot(#[from] OtError),
}

/// Construction that produced a matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatchingKind {
    #[serde(rename = "CM")]
    Cm,
    #[serde(rename = "QP")]
    Qp,
    #[serde(rename = "KR")]
    Kr,
    #[serde(rename = "OTeps")]
    OtEps,
    #[serde(rename = "composed")]
    Composed,
    #[serde(rename = "identity")]
    Identity,
    #[serde(rename = "inverse")]
    Inverse,
    #[serde(rename = "counterfactual")]
    Counterfactual,
}

impl fmt::Display for MatchingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string tag"))
    }
}

/// Bijective pairing of the atoms of two uniform measures of equal size.
#[derive(Debug, Clone)]
pub struct DiscreteMatching<T> {
    source: Arc<DiscreteMeasure<T>>,
    target: Arc<DiscreteMeasure<T>>,
    perm: Vec<usize>,
    kind: MatchingKind,
}

/// Serialized form of a matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingRecord {
    pub source: String,
    pub target: String,
    pub pairs: Vec<[usize; 2]>,
    pub kind: MatchingKind,
    pub cost_sq_euclidean: f64,
}

fn require_uniform<T: Real>(m: &DiscreteMeasure<T>) -> Result<(), MatchingError> {
    if m.is_uniform() {
        Ok(())
    } else {
        Err(MatchingError::NonUniform(m.id().to_string()))
    }
}

fn require_pair<T: Real>(mu: &DiscreteMeasure<T>, nu: &DiscreteMeasure<T>) -> Result<(), MatchingError> {
    require_uniform(mu)?;
    require_uniform(nu)?;
    if mu.len() != nu.len() {
        return Err(MatchingError::Cardinality(format!(
            "{} has {} atoms, {} has {}",
            mu.id(),
            mu.len(),
            nu.id(),
            nu.len()
        )));
    }
    if mu.dim() != nu.dim() {
        return Err(MatchingError::Dimension(mu.dim(), nu.dim()));
    }
    Ok(())
}

impl<T: Real> DiscreteMatching<T> {
    /// Checked constructor.
    pub fn new(
        source: Arc<DiscreteMeasure<T>>,
        target: Arc<DiscreteMeasure<T>>,
        perm: Vec<usize>,
        kind: MatchingKind,
    ) -> Result<Self, MatchingError> {
        require_pair(&source, &target)?;
        let n = source.len();
        let mut seen = vec![false; n];
        for &j in &perm {
            if j >= n || std::mem::replace(&mut seen[j], true) {
                return Err(MatchingError::Permutation(format!("{perm:?}")));
            }
        }
        if perm.len() != n {
            return Err(MatchingError::Permutation(format!("length {} for {n} atoms", perm.len())));
        }
        Ok(Self {
            source,
            target,
            perm,
            kind,
        })
    }

    pub fn identity(m: Arc<DiscreteMeasure<T>>) -> Result<Self, MatchingError> {
        let n = m.len();
        Self::new(m.clone(), m, (0..n).collect(), MatchingKind::Identity)
    }

    pub fn source(&self) -> &Arc<DiscreteMeasure<T>> {
        &self.source
    }

    pub fn target(&self) -> &Arc<DiscreteMeasure<T>> {
        &self.target
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn kind(&self) -> MatchingKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// `(source point, target point)` per source atom.
    pub fn segments(&self) -> impl Iterator<Item = (&[T], &[T])> + '_ {
        self.perm
            .iter()
            .enumerate()
            .map(|(i, &j)| (self.source.point(i), self.target.point(j)))
    }

    pub fn record(&self) -> MatchingRecord {
        MatchingRecord {
            source: self.source.id().to_string(),
            target: self.target.id().to_string(),
            pairs: self.perm.iter().enumerate().map(|(i, &j)| [i, j]).collect(),
            kind: self.kind,
            cost_sq_euclidean: matching_cost(self, &CostSpec::SquaredEuclidean).f64(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.record()).expect("matching record serializes")
    }

    /// Evaluatable view defined on the source support.
    pub fn as_map(&self) -> MatchingMap<'_, T> {
        MatchingMap { matching: self }
    }
}

/// Exact squared-Euclidean optimal assignment: the cyclically monotone map.
pub fn cm_map<T: Real>(mu: &Arc<DiscreteMeasure<T>>, nu: &Arc<DiscreteMeasure<T>>) -> Result<DiscreteMatching<T>, MatchingError> {
    require_pair(mu, nu)?;
    let cost = cost_matrix(mu.points(), nu.points(), &CostSpec::SquaredEuclidean)?;
    let a = ot::solve_assignment(&cost)?;
    DiscreteMatching::new(mu.clone(), nu.clone(), a.perm, MatchingKind::Cm)
}

/// `CM(p0, nu) ∘ CM(p0, mu)^{-1}`: the `p0`-quantile-preserving matching.
pub fn qp_map<T: Real>(
    mu: &Arc<DiscreteMeasure<T>>,
    nu: &Arc<DiscreteMeasure<T>>,
    p0: &Arc<DiscreteMeasure<T>>,
) -> Result<DiscreteMatching<T>, MatchingError> {
    require_pair(mu, nu)?;
    require_pair(p0, mu)?;
    let to_mu = cm_map(p0, mu)?;
    let to_nu = cm_map(p0, nu)?;
    qp_from_reference(&to_mu, &to_nu)
}

/// QP matching from precomputed reference matchings `CM(p0, mu)`, `CM(p0, nu)`.
pub fn qp_from_reference<T: Real>(
    to_mu: &DiscreteMatching<T>,
    to_nu: &DiscreteMatching<T>,
) -> Result<DiscreteMatching<T>, MatchingError> {
    let composed = compose(to_nu, &invert(to_mu))?;
    Ok(DiscreteMatching {
        kind: MatchingKind::Qp,
        ..composed
    })
}

/// Exact optimal assignment under the hierarchical cost `Σ eps^k Δ_k²`.
pub fn kr_via_eps<T: Real>(
    mu: &Arc<DiscreteMeasure<T>>,
    nu: &Arc<DiscreteMeasure<T>>,
    eps: T,
) -> Result<DiscreteMatching<T>, MatchingError> {
    if !(eps > T::zero() && eps <= T::one()) {
        return Err(MatchingError::Epsilon(eps.f64()));
    }
    require_pair(mu, nu)?;
    let cost = ot::normalized_hierarchical_matrix(mu.points(), nu.points(), eps)?;
    let a = ot::solve_assignment(&cost)?;
    DiscreteMatching::new(mu.clone(), nu.clone(), a.perm, MatchingKind::OtEps)
}

/// `outer ∘ inner` for `inner: A → B`, `outer: B → C`.
pub fn compose<T: Real>(outer: &DiscreteMatching<T>, inner: &DiscreteMatching<T>) -> Result<DiscreteMatching<T>, MatchingError> {
    if inner.target.id() != outer.source.id() || inner.len() != outer.len() {
        return Err(MatchingError::Endpoint {
            inner: inner.target.id().to_string(),
            outer: outer.source.id().to_string(),
        });
    }
    let perm = inner.perm.iter().map(|&j| outer.perm[j]).collect();
    Ok(DiscreteMatching {
        source: inner.source.clone(),
        target: outer.target.clone(),
        perm,
        kind: MatchingKind::Composed,
    })
}

pub fn invert<T: Real>(t: &DiscreteMatching<T>) -> DiscreteMatching<T> {
    let mut perm = vec![0; t.len()];
    for (i, &j) in t.perm.iter().enumerate() {
        perm[j] = i;
    }
    DiscreteMatching {
        source: t.target.clone(),
        target: t.source.clone(),
        perm,
        kind: MatchingKind::Inverse,
    }
}

/// Mean pair cost `(1/n) Σ_i c(src_i, dst_perm(i))`.
pub fn matching_cost<T: Real>(t: &DiscreteMatching<T>, c: &CostSpec<T>) -> T {
    if t.is_empty() {
        return T::zero();
    }
    let total: T = t.segments().map(|(x, y)| c.pair(x, y)).sum();
    total / T::c(t.len() as f64)
}

/// A matching viewed as a map on its source support.
#[derive(Debug, Clone, Copy)]
pub struct MatchingMap<'a, T> {
    matching: &'a DiscreteMatching<T>,
}

impl<T: Real> PointMap<T> for MatchingMap<'_, T> {
    fn dim(&self) -> usize {
        self.matching.source.dim()
    }

    fn eval(&self, x: &[T]) -> Result<Vec<T>, MapError> {
        check_dim(self.dim(), x)?;
        let i = self
            .matching
            .source
            .find(x)
            .ok_or_else(|| MapError::Domain(format!("{x:?} not in support of {}", self.matching.source.id())))?;
        Ok(self.matching.target.point(self.matching.perm[i]).to_vec())
    }

    fn support(&self) -> Option<&[Vec<T>]> {
        Some(self.matching.source.points())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{pushforward, uniform_cube_sample, uniform_grid};

    fn arc(m: DiscreteMeasure<f64>) -> Arc<DiscreteMeasure<f64>> {
        Arc::new(m)
    }

    fn line(id: &str, vals: &[f64]) -> Arc<DiscreteMeasure<f64>> {
        arc(DiscreteMeasure::uniform(id, vals.iter().map(|v| vec![*v]).collect()).unwrap())
    }

    #[test]
    fn cm_identity_and_1d_rank_matching() {
        let mu = arc(uniform_cube_sample(2, 9, 1).unwrap());
        assert_eq!(cm_map(&mu, &mu).unwrap().perm(), &(0..9).collect::<Vec<_>>());

        let a = line("a", &[0.3, -1.0, 2.0, 0.9]);
        let b = line("b", &[10.0, 5.0, 7.0, 4.0]);
        // ranks: a = [1, 0, 3, 2]; b sorted = [3, 1, 2, 0]
        assert_eq!(cm_map(&a, &b).unwrap().perm(), &[1, 3, 0, 2]);
        assert_eq!(kr_map(&a, &b, DEFAULT_TIE_TOL).unwrap().perm(), &[1, 3, 0, 2]);
    }

    #[test]
    fn preconditions() {
        let a = line("a", &[0.0, 1.0]);
        let b = line("b", &[0.0, 1.0, 2.0]);
        assert!(matches!(cm_map(&a, &b), Err(MatchingError::Cardinality(_))));
        let w = arc(DiscreteMeasure::new("w", vec![vec![0.0], vec![1.0]], vec![0.3, 0.7]).unwrap());
        assert!(matches!(cm_map(&a, &w), Err(MatchingError::NonUniform(_))));
        assert!(matches!(qp_map(&a, &a, &b), Err(MatchingError::Cardinality(_))));
        assert!(matches!(kr_via_eps(&a, &a, 0.0), Err(MatchingError::Epsilon(_))));
        assert!(matches!(kr_via_eps(&a, &a, 1.5), Err(MatchingError::Epsilon(_))));
    }

    #[test]
    fn algebra_basics() {
        let mu = arc(uniform_cube_sample(2, 8, 3).unwrap());
        let nu = arc(uniform_cube_sample(2, 8, 4).unwrap());
        let t = cm_map(&mu, &nu).unwrap();
        let id = DiscreteMatching::identity(mu.clone()).unwrap();
        assert_eq!(compose(&t, &id).unwrap().perm(), t.perm());
        assert_eq!(compose(&invert(&t), &t).unwrap().perm(), id.perm());
        assert_eq!(invert(&invert(&t)).perm(), t.perm());
        assert_eq!(invert(&id).perm(), id.perm());
        assert_eq!(invert(&t).perm(), cm_map(&nu, &mu).unwrap().perm());
        assert!(matches!(compose(&t, &t), Err(MatchingError::Endpoint { .. })));
        assert_eq!(matching_cost(&id, &CostSpec::SquaredEuclidean), 0.0);
    }

    #[test]
    fn qp_is_composition_of_reference_matchings() {
        let mu = arc(uniform_cube_sample(2, 7, 5).unwrap());
        let nu = arc(uniform_cube_sample(2, 7, 6).unwrap());
        let p0 = arc(uniform_cube_sample(2, 7, 7).unwrap());
        let qp = qp_map(&mu, &nu, &p0).unwrap();
        let manual = compose(&cm_map(&p0, &nu).unwrap(), &invert(&cm_map(&p0, &mu).unwrap())).unwrap();
        assert_eq!(qp.perm(), manual.perm());
        assert_eq!(qp.kind(), MatchingKind::Qp);
        assert_eq!(qp_map(&mu, &mu, &p0).unwrap().perm(), &(0..7).collect::<Vec<_>>());
    }

    #[test]
    fn eps_one_is_cm() {
        let mu = arc(uniform_cube_sample(3, 12, 8).unwrap());
        let nu = arc(uniform_cube_sample(3, 12, 9).unwrap());
        assert_eq!(kr_via_eps(&mu, &nu, 1.0).unwrap().perm(), cm_map(&mu, &nu).unwrap().perm());
    }

    #[test]
    fn matching_pushforward_roundtrip() {
        let mu = arc(uniform_cube_sample(2, 10, 11).unwrap());
        let nu = arc(uniform_cube_sample(2, 10, 12).unwrap());
        let t = cm_map(&mu, &nu).unwrap();
        let pushed = pushforward(&mu, &t.as_map()).unwrap();
        assert!(pushed.same_distribution(&nu));
        let back = pushforward(&pushed, &invert(&t).as_map()).unwrap();
        assert_eq!(back.points(), mu.points());
        assert_eq!(back.weights(), mu.weights());
        assert!(t.as_map().eval(&[5.0, 5.0]).is_err());
    }

    #[test]
    fn json_record() {
        let g = arc(uniform_grid(1, 3, 0.0, 1.0).unwrap());
        let rec: MatchingRecord = serde_json::from_str(&DiscreteMatching::identity(g).unwrap().to_json()).unwrap();
        assert_eq!(rec.pairs, vec![[0, 0], [1, 1], [2, 2]]);
        assert_eq!(rec.kind, MatchingKind::Identity);
        assert_eq!(rec.cost_sq_euclidean, 0.0);
        assert_eq!(MatchingKind::OtEps.to_string(), "OTeps");
    }
}
