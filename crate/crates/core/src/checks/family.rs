//! Identity, path independence and inversion of an indexed family of maps
//! `T_{b←a}`.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{to_f64, CheckError, PointMap, PropertyReport, Witness};
use crate::maps::DiscreteMatching;
use crate::{rng, Real};

/// Index triples beyond this count are subsampled.
pub const MAX_TRIPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    Identity,
    PathIndependence,
    Inversion,
}

impl Law {
    pub const ALL: [Law; 3] = [Law::Identity, Law::PathIndependence, Law::Inversion];

    pub fn name(self) -> &'static str {
        match self {
            Law::Identity => "identity",
            Law::PathIndependence => "path_independence",
            Law::Inversion => "inversion",
        }
    }
}

/// A square table of maps; entry `[a][b]` is `T_{b←a}`.
pub enum Family<'a, T> {
    /// Compared exactly at permutation level.
    Matchings(&'a [Vec<DiscreteMatching<T>>]),
    /// Compared pointwise; `points[a]` are evaluation points in the domain
    /// of the maps leaving index `a`.
    Maps {
        table: &'a [Vec<Box<dyn PointMap<T> + 'a>>],
        points: &'a [Vec<Vec<T>>],
        tol: f64,
    },
}

impl<T> Family<'_, T> {
    fn size(&self) -> usize {
        match self {
            Family::Matchings(t) => t.len(),
            Family::Maps { table, .. } => table.len(),
        }
    }

    fn square(&self) -> bool {
        let k = self.size();
        match self {
            Family::Matchings(t) => t.iter().all(|r| r.len() == k),
            Family::Maps { table, points, .. } => table.iter().all(|r| r.len() == k) && points.len() == k,
        }
    }
}

fn triples(k: usize, seed: u64) -> Vec<[usize; 3]> {
    let all = k * k * k;
    let pick: Vec<usize> = if all <= MAX_TRIPLES {
        (0..all).collect()
    } else {
        let mut v = index::sample(&mut rng::seeded(seed), all, MAX_TRIPLES).into_vec();
        v.sort_unstable();
        v
    };
    pick.into_iter().map(|t| [t / (k * k), (t / k) % k, t % k]).collect()
}

/// One report per requested law.
pub fn check_family_algebra<T: Real>(family: &Family<'_, T>, laws: &[Law], seed: u64) -> Result<Vec<PropertyReport>, CheckError> {
    if !family.square() {
        return Err(CheckError::Parameter("family table must be square".into()));
    }
    let k = family.size();
    let trip = triples(k, seed);
    laws.iter()
        .map(|&law| match family {
            Family::Matchings(table) => Ok(matching_law(table, law, &trip)),
            Family::Maps { table, points, tol } => map_law(table, points, *tol, law, &trip),
        })
        .collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn matching_law<T: Real>(table: &[Vec<DiscreteMatching<T>>], law: Law, trip: &[[usize; 3]]) -> PropertyReport {
    let k = table.len();
    let mut trials = 0;
    let mut witness = None;
    let mut record = |indices: Vec<usize>, x: &[T], want: &[T], got: &[T], what: &str| {
        if witness.is_none() {
            let (want, got) = (to_f64(want), to_f64(got));
            witness = Some(Witness {
                value: distance(&want, &got),
                points: vec![to_f64(x), want, got],
                indices,
                detail: what.to_string(),
            });
        }
    };
    match law {
        Law::Identity => {
            for (a, row) in table.iter().enumerate() {
                let t = &row[a];
                for (i, &j) in t.perm().iter().enumerate() {
                    trials += 1;
                    if i != j {
                        record(vec![a, i], t.source().point(i), t.source().point(i), t.target().point(j), "T_{a<-a} moves atom");
                    }
                }
            }
        }
        Law::PathIndependence => {
            for &[a, b, c] in trip {
                let (ab, bc, ac) = (&table[a][b], &table[b][c], &table[a][c]);
                for i in 0..ac.len() {
                    trials += 1;
                    let via = bc.perm()[ab.perm()[i]];
                    if via != ac.perm()[i] {
                        record(
                            vec![a, b, c, i],
                            ac.source().point(i),
                            ac.target().point(ac.perm()[i]),
                            bc.target().point(via),
                            "T_{c<-a} differs from T_{c<-b} o T_{b<-a}",
                        );
                    }
                }
            }
        }
        Law::Inversion => {
            for a in 0..k {
                for b in 0..k {
                    let (ab, ba) = (&table[a][b], &table[b][a]);
                    for i in 0..ab.len() {
                        trials += 1;
                        let back = ba.perm()[ab.perm()[i]];
                        if back != i {
                            record(
                                vec![a, b, i],
                                ab.source().point(i),
                                ab.source().point(i),
                                ba.target().point(back),
                                "T_{a<-b} o T_{b<-a} moves atom",
                            );
                        }
                    }
                }
            }
        }
    }
    PropertyReport::new(law.name(), trials, 0.0, witness)
}

fn map_law<T: Real>(
    table: &[Vec<Box<dyn PointMap<T> + '_>>],
    points: &[Vec<Vec<T>>],
    tol: f64,
    law: Law,
    trip: &[[usize; 3]],
) -> Result<PropertyReport, CheckError> {
    let k = table.len();
    let wrap = |from: usize, to: usize| move |e: super::MapError| CheckError::Family { from, to, msg: e.to_string() };
    let mut trials = 0;
    let mut worst: Option<Witness> = None;
    let mut compare = |indices: Vec<usize>, x: &[T], want: Vec<T>, got: Vec<T>, what: &str| {
        trials += 1;
        let dev = want.iter().zip(&got).map(|(p, q)| (*p - *q).abs().f64()).fold(0.0, f64::max);
        if dev > tol && worst.as_ref().is_none_or(|w| dev > w.value) {
            worst = Some(Witness {
                points: vec![to_f64(x), to_f64(&want), to_f64(&got)],
                indices,
                value: dev,
                detail: what.to_string(),
            });
        }
    };
    match law {
        Law::Identity => {
            for a in 0..k {
                for x in &points[a] {
                    let y = table[a][a].eval(x).map_err(wrap(a, a))?;
                    compare(vec![a], x, x.clone(), y, "T_{a<-a} is not the identity");
                }
            }
        }
        Law::PathIndependence => {
            for &[a, b, c] in trip {
                for x in &points[a] {
                    let direct = table[a][c].eval(x).map_err(wrap(a, c))?;
                    let mid = table[a][b].eval(x).map_err(wrap(a, b))?;
                    let via = table[b][c].eval(&mid).map_err(wrap(b, c))?;
                    compare(vec![a, b, c], x, direct, via, "T_{c<-a} differs from T_{c<-b} o T_{b<-a}");
                }
            }
        }
        Law::Inversion => {
            for a in 0..k {
                for b in 0..k {
                    for x in &points[a] {
                        let y = table[a][b].eval(x).map_err(wrap(a, b))?;
                        let back = table[b][a].eval(&y).map_err(wrap(b, a))?;
                        compare(vec![a, b], x, x.clone(), back, "T_{a<-b} o T_{b<-a} is not the identity");
                    }
                }
            }
        }
    }
    Ok(PropertyReport::new(law.name(), trials, tol, worst))
}
