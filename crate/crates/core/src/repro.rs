//! Seeded instances on which the three canonical matchings are compared:
//! a non-product pair of 2D clouds with a grid reference, and a triple of
//! measures on which the cyclically monotone family is not path independent.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checks::FnMap;
use crate::maps::{cm_map, kr_map, matching_cost, qp_from_reference, MatchingError, DEFAULT_TIE_TOL};
use crate::measures::{pushforward, uniform_cube_sample, uniform_grid, DiscreteMeasure, MeasureError};
use crate::ot::CostSpec;
use crate::{rng, Matching, Measure};

/// Side of the reference grid; the clouds have `GRID_SIDE²` atoms.
pub const GRID_SIDE: usize = 7;

#[derive(Debug, Error)]
pub enum ReproError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Matching(#[from] MatchingError),
}

/// Pairwise comparison of the three matchings of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureSummary {
    pub seed: u64,
    pub n: usize,
    pub cm_ne_qp: bool,
    pub cm_ne_kr: bool,
    pub qp_ne_kr: bool,
    pub pairwise_distinct: bool,
    pub cost_cm: f64,
    pub cost_qp: f64,
    pub cost_kr: f64,
    pub cm_le_qp: bool,
    pub cm_le_kr: bool,
}

#[derive(Debug, Clone)]
pub struct FigureInstance {
    pub mu: Arc<Measure>,
    pub nu: Arc<Measure>,
    pub p0: Arc<Measure>,
    pub cm: Matching,
    pub qp: Matching,
    pub kr: Matching,
    pub summary: FigureSummary,
}

/// Source: `(u, 0.6u + 0.4v)` with `u, v` uniform. Target: a correlated
/// Gaussian cloud centred at `(1.5, 0.5)`. Neither is a product measure.
pub fn figure_measures(seed: u64) -> Result<(Measure, Measure), MeasureError> {
    let n = GRID_SIDE * GRID_SIDE;
    let mut r = rng::substream(seed, 0);
    let mu = (0..n)
        .map(|_| {
            let (u, v): (f64, f64) = (r.random(), r.random());
            vec![u, 0.6 * u + 0.4 * v]
        })
        .collect();
    let mut r = rng::substream(seed, 1);
    let nu = (0..n)
        .map(|_| {
            let g1: f64 = StandardNormal.sample(&mut r);
            let g2: f64 = StandardNormal.sample(&mut r);
            vec![1.5 + 0.5 * g1, 0.5 - 0.4 * g1 + 0.3 * g2]
        })
        .collect();
    Ok((
        DiscreteMeasure::uniform(format!("mu:{seed}"), mu)?,
        DiscreteMeasure::uniform(format!("nu:{seed}"), nu)?,
    ))
}

pub fn figure_instance(seed: u64) -> Result<FigureInstance, ReproError> {
    let (mu, nu) = figure_measures(seed)?;
    let (mu, nu) = (Arc::new(mu), Arc::new(nu));
    let p0 = Arc::new(uniform_grid(2, GRID_SIDE, 0.0, 1.0)?);
    let cm = cm_map(&mu, &nu)?;
    let qp = qp_from_reference(&cm_map(&p0, &mu)?, &cm_map(&p0, &nu)?)?;
    let kr = kr_map(&mu, &nu, DEFAULT_TIE_TOL)?;
    let cost = |t: &Matching| matching_cost(t, &CostSpec::SquaredEuclidean);
    let (cost_cm, cost_qp, cost_kr) = (cost(&cm), cost(&qp), cost(&kr));
    // Mean costs are summed in different orders; allow for rounding.
    let le = |a: f64, b: f64| a <= b + 1e-12 * b.abs().max(1.0);
    let (cm_ne_qp, cm_ne_kr, qp_ne_kr) = (cm.perm() != qp.perm(), cm.perm() != kr.perm(), qp.perm() != kr.perm());
    let summary = FigureSummary {
        seed,
        n: mu.len(),
        cm_ne_qp,
        cm_ne_kr,
        qp_ne_kr,
        pairwise_distinct: cm_ne_qp && cm_ne_kr && qp_ne_kr,
        cost_cm,
        cost_qp,
        cost_kr,
        cm_le_qp: le(cost_cm, cost_qp),
        cm_le_kr: le(cost_cm, cost_kr),
    };
    Ok(FigureInstance {
        mu,
        nu,
        p0,
        cm,
        qp,
        kr,
        summary,
    })
}

/// One `x0;y0;x1;y1` row per matched pair, with a header.
pub fn plot_segments(t: &Matching) -> String {
    let mut out = String::from("x0;y0;x1;y1\n");
    for (x, y) in t.segments() {
        let row: Vec<String> = x.iter().chain(y).map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "{}", row.join(";"));
    }
    out
}

/// `(2x + e^{x+y²}, 2y·e^{x+y²})`, the gradient of `x² + e^{x+y²}`.
pub fn convex_gradient(p: &[f64]) -> Vec<f64> {
    let e = (p[0] + p[1] * p[1]).exp();
    vec![2.0 * p[0] + e, 2.0 * p[1] * e]
}

/// `(6x + e^{3x+y²}, 2y·e^{3x+y²})`: the convex gradient after the stretch
/// `(x, y) ↦ (3x, y)`. Its Jacobian is not symmetric.
pub fn stretched_gradient(p: &[f64]) -> Vec<f64> {
    convex_gradient(&[3.0 * p[0], p[1]])
}

/// `P0` i.i.d. uniform on the unit square, `P1 = (3x, y)♯P0`,
/// `P2 = ∇φ♯P1` with `∇φ` = [`convex_gradient`].
pub fn path_independence_triple(n: usize, seed: u64) -> Result<[Arc<Measure>; 3], MeasureError> {
    let p0 = uniform_cube_sample::<f64>(2, n, seed)?.with_id(format!("P0:{seed}"));
    let stretch = FnMap::new("stretch", 2, |p: &[f64]| vec![3.0 * p[0], p[1]]);
    let p1 = pushforward(&p0, &stretch)?.with_id(format!("P1:{seed}"));
    let grad = FnMap::new("convex-gradient", 2, convex_gradient);
    let p2 = pushforward(&p1, &grad)?.with_id(format!("P2:{seed}"));
    Ok([Arc::new(p0), Arc::new(p1), Arc::new(p2)])
}

/// Which canonical construction fills a family table.
#[derive(Debug, Clone)]
pub enum FamilyKind {
    Cm,
    Kr,
    /// Quantile-preserving with this reference measure.
    Qp(Arc<Measure>),
}

/// `table[a][b]` is the chosen matching from measure `a` to measure `b`.
pub fn matching_family(ms: &[Arc<Measure>], kind: &FamilyKind) -> Result<Vec<Vec<Matching>>, MatchingError> {
    let refs = match kind {
        FamilyKind::Qp(p0) => ms.iter().map(|m| cm_map(p0, m)).collect::<Result<Vec<_>, _>>()?,
        _ => Vec::new(),
    };
    ms.iter()
        .enumerate()
        .map(|(a, src)| {
            ms.iter()
                .enumerate()
                .map(|(b, dst)| match kind {
                    FamilyKind::Cm => cm_map(src, dst),
                    FamilyKind::Kr => kr_map(src, dst, DEFAULT_TIE_TOL),
                    FamilyKind::Qp(_) => qp_from_reference(&refs[a], &refs[b]),
                })
                .collect()
        })
        .collect()
}
