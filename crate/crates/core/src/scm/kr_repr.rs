//! Discrete conditional-quantile model realizing given interventional
//! marginals with Knothe–Rosenblatt counterfactuals.
//!
//! For every `a` and node `i`, the atoms of `P_a` are split into parent
//! classes by refining on each parent coordinate in turn (values chained
//! within the tie tolerance). A class stores its sorted `x_i` values, and
//! the mechanism is `x_i = values[⌊u_i·k⌋]`. Noise units are the mid-ranks
//! of the atoms of the first marginal.

use std::cmp::Ordering;
use std::sync::Arc;

use super::ScmError;
use crate::maps::{DiscreteMatching, MatchingKind};
use crate::measures::DiscreteMeasure;
use crate::Measure;

#[derive(Debug, Clone, PartialEq)]
struct Class {
    /// Range of each parent coordinate over the members.
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Members sorted by `(x_i, index)`.
    members: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrModel {
    a_values: Vec<f64>,
    marginals: Vec<Arc<Measure>>,
    parents: Vec<Vec<usize>>,
    /// `tables[a][i]`: parent classes of node `i` under the `a`-th value.
    tables: Vec<Vec<Vec<Class>>>,
    units: Vec<Vec<f64>>,
    /// `atom_of_unit[a][j]`: atom of `P_a` produced by noise unit `j`.
    atom_of_unit: Vec<Vec<usize>>,
    tol: f64,
}

fn kr_err(msg: String) -> ScmError {
    ScmError::Kr(msg)
}

fn by_coord(m: &Measure, idx: &mut [usize], k: usize) {
    idx.sort_by(|&a, &b| {
        m.point(a)[k]
            .partial_cmp(&m.point(b)[k])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
}

fn parent_classes(m: &Measure, node: usize, parents: &[usize], tol: f64) -> Vec<Class> {
    let mut groups = vec![(0..m.len()).collect::<Vec<usize>>()];
    for &p in parents {
        let mut next = Vec::new();
        for mut g in groups {
            by_coord(m, &mut g, p);
            let mut prev: Option<f64> = None;
            let start = next.len();
            for i in g {
                let v = m.point(i)[p];
                match prev {
                    Some(q) if v - q <= tol && next.len() > start => {
                        let last: &mut Vec<usize> = next.last_mut().expect("open class");
                        last.push(i);
                    }
                    _ => next.push(vec![i]),
                }
                prev = Some(v);
            }
        }
        groups = next;
    }
    groups
        .into_iter()
        .map(|mut members| {
            by_coord(m, &mut members, node);
            let range = |f: fn(f64, f64) -> f64, init: f64| {
                parents
                    .iter()
                    .map(|&p| members.iter().map(|&i| m.point(i)[p]).fold(init, f))
                    .collect()
            };
            Class {
                lo: range(f64::min, f64::INFINITY),
                hi: range(f64::max, f64::NEG_INFINITY),
                values: members.iter().map(|&i| m.point(i)[node]).collect(),
                members,
            }
        })
        .collect()
}

/// Builds the model. `marginals` lists `(a, P_a)`; `parents[i]` are the
/// parent coordinates of node `i`, all smaller than `i`.
pub fn kr_scm_from_marginals(
    marginals: Vec<(f64, Arc<Measure>)>,
    parents: Vec<Vec<usize>>,
    tol: f64,
) -> Result<KrModel, ScmError> {
    let Some((_, first)) = marginals.first() else {
        return Err(kr_err("no marginals given".into()));
    };
    let (n, d) = (first.len(), first.dim());
    for (a, m) in &marginals {
        if !a.is_finite() {
            return Err(kr_err(format!("a = {a} is not finite")));
        }
        if !m.is_uniform() || m.len() != n || m.dim() != d {
            return Err(kr_err(format!(
                "marginal at a={a} must be uniform with {n} atoms in dimension {d}"
            )));
        }
    }
    for (i, (a, _)) in marginals.iter().enumerate() {
        if marginals[..i].iter().any(|(b, _)| (a - b).abs() <= tol) {
            return Err(kr_err(format!("a = {a} listed twice")));
        }
    }
    if parents.len() != d {
        return Err(kr_err(format!("{} parent sets for {d} nodes", parents.len())));
    }
    let mut parents = parents;
    for (i, ps) in parents.iter_mut().enumerate() {
        ps.sort_unstable();
        ps.dedup();
        if ps.iter().any(|&p| p >= i) {
            return Err(kr_err(format!("parents of X{} must precede it: {ps:?}", i + 1)));
        }
    }

    let tables: Vec<Vec<Vec<Class>>> = marginals
        .iter()
        .map(|(_, m)| (0..d).map(|i| parent_classes(m, i, &parents[i], tol)).collect())
        .collect();
    let sizes = |a: usize, i: usize| tables[a][i].iter().map(|c| c.members.len()).collect::<Vec<_>>();
    for i in 0..d {
        for a in 1..marginals.len() {
            if sizes(a, i) != sizes(0, i) {
                return Err(kr_err(format!(
                    "parent-class cardinality mismatch at X{}: sizes {:?} at a={} vs {:?} at a={}",
                    i + 1,
                    sizes(a, i),
                    marginals[a].0,
                    sizes(0, i),
                    marginals[0].0
                )));
            }
        }
    }

    let mut units = vec![vec![0.0; d]; n];
    for (i, classes) in tables[0].iter().enumerate() {
        for c in classes {
            let k = c.members.len() as f64;
            for (r, &atom) in c.members.iter().enumerate() {
                units[atom][i] = (r as f64 + 0.5) / k;
            }
        }
    }

    let mut model = KrModel {
        a_values: marginals.iter().map(|(a, _)| *a).collect(),
        marginals: marginals.into_iter().map(|(_, m)| m).collect(),
        parents,
        tables,
        units,
        atom_of_unit: Vec::new(),
        tol,
    };
    model.atom_of_unit = (0..model.a_values.len())
        .map(|a| model.assign_atoms(a))
        .collect::<Result<_, _>>()?;
    Ok(model)
}

impl KrModel {
    pub fn a_values(&self) -> &[f64] {
        &self.a_values
    }

    pub fn dim(&self) -> usize {
        self.parents.len()
    }

    pub fn parents(&self) -> &[Vec<usize>] {
        &self.parents
    }

    /// The noise units, one per atom of each marginal.
    pub fn units(&self) -> &[Vec<f64>] {
        &self.units
    }

    pub fn marginal(&self, a: f64) -> Result<&Arc<Measure>, ScmError> {
        Ok(&self.marginals[self.a_index(a)?])
    }

    fn a_index(&self, a: f64) -> Result<usize, ScmError> {
        self.a_values
            .iter()
            .position(|&b| (a - b).abs() <= self.tol)
            .ok_or_else(|| kr_err(format!("a = {a} is not one of {:?}", self.a_values)))
    }

    fn forward_at(&self, a: usize, u: &[f64]) -> Result<Vec<f64>, ScmError> {
        let d = self.dim();
        if u.len() != d {
            return Err(ScmError::Dimension {
                expected: d,
                got: u.len(),
            });
        }
        let mut x = vec![0.0; d];
        for i in 0..d {
            let class = self.tables[a][i]
                .iter()
                .find(|c| {
                    self.parents[i]
                        .iter()
                        .enumerate()
                        .all(|(t, &p)| x[p] >= c.lo[t] - self.tol && x[p] <= c.hi[t] + self.tol)
                })
                .ok_or_else(|| ScmError::Evaluation {
                    node: format!("X{}", i + 1),
                    msg: format!("parent values {x:?} fall outside every class at a={}", self.a_values[a]),
                })?;
            let k = class.values.len();
            let r = ((u[i] * k as f64).floor().max(0.0) as usize).min(k - 1);
            x[i] = class.values[r];
        }
        Ok(x)
    }

    /// Mechanism evaluation `x = G(a, u)`.
    pub fn forward(&self, a: f64, u: &[f64]) -> Result<Vec<f64>, ScmError> {
        self.forward_at(self.a_index(a)?, u)
    }

    fn assign_atoms(&self, a: usize) -> Result<Vec<usize>, ScmError> {
        let m = &self.marginals[a];
        let mut used = vec![false; m.len()];
        self.units
            .iter()
            .map(|u| {
                let x = self.forward_at(a, u)?;
                let hit = (0..m.len()).find(|&j| !used[j] && m.point(j) == x.as_slice()).ok_or_else(|| {
                    kr_err(format!(
                        "interventional support at a={} does not reproduce the marginal (no atom left at {x:?})",
                        self.a_values[a]
                    ))
                })?;
                used[hit] = true;
                Ok(hit)
            })
            .collect()
    }

    /// Pushforward of the noise units under `G(a, ·)`.
    pub fn interventional_support(&self, a: f64) -> Result<Measure, ScmError> {
        let k = self.a_index(a)?;
        let points = self
            .units
            .iter()
            .map(|u| self.forward_at(k, u))
            .collect::<Result<Vec<_>, _>>()?;
        DiscreteMeasure::uniform(format!("kr-model:a={a}"), points).map_err(|e| kr_err(e.to_string()))
    }

    /// Unit-aligned matching between the input marginals at `a` and `a'`.
    pub fn counterfactual_matching(&self, a: f64, a_prime: f64) -> Result<DiscreteMatching<f64>, ScmError> {
        let (s, t) = (self.a_index(a)?, self.a_index(a_prime)?);
        let mut perm = vec![0; self.units.len()];
        for (unit, &atom) in self.atom_of_unit[s].iter().enumerate() {
            perm[atom] = self.atom_of_unit[t][unit];
        }
        DiscreteMatching::new(
            self.marginals[s].clone(),
            self.marginals[t].clone(),
            perm,
            MatchingKind::Counterfactual,
        )
        .map_err(|e| kr_err(e.to_string()))
    }
}
