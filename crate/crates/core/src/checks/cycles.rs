use rand::seq::index;
use rand::Rng;

use super::{dot, to_f64, CheckError, PointMap, PropertyReport, Witness, DEFAULT_TOL};
use crate::{rng, Real};

/// Up to this many points all 2- and 3-cycles are enumerated.
pub const EXHAUSTIVE_MAX: usize = 25;
/// Same bound for maps that expose a finite support.
pub const EXHAUSTIVE_MAX_SUPPORT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleOptions {
    /// Longest random cycle.
    pub m_max: usize,
    /// Number of random cycles on top of the exhaustive pass.
    pub trials: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for CycleOptions {
    fn default() -> Self {
        Self {
            m_max: 6,
            trials: 2000,
            tol: DEFAULT_TOL,
            seed: rng::DEFAULT_SEED,
        }
    }
}

/// `Σ ⟨x_i − x_{i+1}, T(x_i)⟩` over the closed cycle `pts`.
pub fn cycle_sum_monotone<T: Real, M: PointMap<T> + ?Sized>(t: &M, pts: &[Vec<T>]) -> Result<T, CheckError> {
    let f = t.eval_all(pts)?;
    Ok(indexed_sum(&f, pts, &(0..pts.len()).collect::<Vec<_>>()))
}

/// `Σ ⟨f(x_i), g(x_i) − g(x_{i+1})⟩` over the closed cycle `pts`.
pub fn cycle_sum_comonotone<T: Real, F: PointMap<T> + ?Sized, G: PointMap<T> + ?Sized>(
    f: &F,
    g: &G,
    pts: &[Vec<T>],
) -> Result<T, CheckError> {
    let fv = f.eval_all(pts)?;
    let gv = g.eval_all(pts)?;
    Ok(indexed_sum(&fv, &gv, &(0..pts.len()).collect::<Vec<_>>()))
}

fn indexed_sum<T: Real>(f: &[Vec<T>], g: &[Vec<T>], cycle: &[usize]) -> T {
    let m = cycle.len();
    let mut acc = T::zero();
    let mut diff = Vec::new();
    for k in 0..m {
        let (i, j) = (cycle[k], cycle[(k + 1) % m]);
        diff.clear();
        diff.extend(g[i].iter().zip(&g[j]).map(|(a, b)| *a - *b));
        acc = acc + dot(&f[i], &diff);
    }
    acc
}

pub fn check_cyclically_monotone<T: Real, M: PointMap<T> + ?Sized>(
    t: &M,
    pts: &[Vec<T>],
    opts: CycleOptions,
) -> Result<PropertyReport, CheckError> {
    let f = t.eval_all(pts)?;
    let exhaustive_max = if t.support().is_some() {
        EXHAUSTIVE_MAX_SUPPORT
    } else {
        EXHAUSTIVE_MAX
    };
    run("cyclically_monotone", &f, pts, pts, exhaustive_max, opts)
}

pub fn check_cyclically_comonotone<T: Real, F: PointMap<T> + ?Sized, G: PointMap<T> + ?Sized>(
    f: &F,
    g: &G,
    pts: &[Vec<T>],
    opts: CycleOptions,
) -> Result<PropertyReport, CheckError> {
    let fv = f.eval_all(pts)?;
    let gv = g.eval_all(pts)?;
    let exhaustive_max = if f.support().is_some() && g.support().is_some() {
        EXHAUSTIVE_MAX_SUPPORT
    } else {
        EXHAUSTIVE_MAX
    };
    run("cyclically_comonotone", &fv, &gv, pts, exhaustive_max, opts)
}

struct Worst<T> {
    value: T,
    cycle: Vec<usize>,
}

fn run<T: Real>(
    name: &str,
    f: &[Vec<T>],
    g: &[Vec<T>],
    pts: &[Vec<T>],
    exhaustive_max: usize,
    opts: CycleOptions,
) -> Result<PropertyReport, CheckError> {
    if opts.m_max < 2 {
        return Err(CheckError::Parameter(format!("m_max must be at least 2, got {}", opts.m_max)));
    }
    let n = pts.len();
    let tol = T::c(opts.tol);
    let mut trials = 0usize;
    let mut worst: Option<Worst<T>> = None;
    let mut visit = |cycle: &[usize]| {
        trials += 1;
        let s = indexed_sum(f, g, cycle);
        // Shortest violating cycle first, then the most negative sum.
        if s < -tol && worst.as_ref().is_none_or(|w| (cycle.len(), s) < (w.cycle.len(), w.value)) {
            worst = Some(Worst {
                value: s,
                cycle: cycle.to_vec(),
            });
        }
    };

    if n <= exhaustive_max {
        for i in 0..n {
            for j in i + 1..n {
                visit(&[i, j]);
            }
        }
        // Fixing the smallest index first removes rotations; both
        // orientations are kept.
        for i in 0..n {
            for j in i + 1..n {
                for k in i + 1..n {
                    if k != j {
                        visit(&[i, j, k]);
                    }
                }
            }
        }
    }
    if n >= 2 {
        let mut rng = rng::seeded(opts.seed);
        let longest = opts.m_max.min(n);
        for _ in 0..opts.trials {
            let len = rng.random_range(2..=longest);
            let cycle = index::sample(&mut rng, n, len).into_vec();
            visit(&cycle);
        }
    }

    let witness = worst.map(|w| Witness {
        points: w.cycle.iter().map(|&i| to_f64(&pts[i])).collect(),
        indices: w.cycle.clone(),
        value: w.value.f64(),
        detail: format!("cycle of length {} has sum {:e}", w.cycle.len(), w.value.f64()),
    });
    Ok(PropertyReport::new(name, trials, opts.tol, witness))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checks::{FnMap, Identity};

    fn corners() -> Vec<Vec<f64>> {
        vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]
    }

    #[test]
    fn identity_passes() {
        let r = check_cyclically_monotone(&Identity { dim: 2 }, &corners(), CycleOptions::default()).unwrap();
        assert!(r.passed());
        // 6 two-cycles + 4*3*2 ordered triples / 3 rotations = 8 three-cycles.
        assert_eq!(r.trials, 6 + 8 + CycleOptions::default().trials);
    }

    #[test]
    fn rotation_fails_with_short_witness() {
        let rot = FnMap::new("rot", 2, |x: &[f64]| vec![x[1], -x[0]]);
        let opts = CycleOptions {
            trials: 0,
            ..Default::default()
        };
        let r = check_cyclically_monotone(&rot, &corners(), opts).unwrap();
        assert!(!r.passed());
        let w = r.witness.unwrap();
        assert!(w.points.len() == 2 || w.points.len() == 3);
        let again = cycle_sum_monotone(&rot, &w.points).unwrap();
        assert_eq!(again, w.value);
        assert!(again < -opts.tol);
    }

    #[test]
    fn comonotone_against_identity_agrees() {
        let rot = FnMap::new("rot", 2, |x: &[f64]| vec![x[1], -x[0]]);
        let id = Identity { dim: 2 };
        let opts = CycleOptions::default();
        let a = check_cyclically_monotone(&rot, &corners(), opts).unwrap();
        let b = check_cyclically_comonotone(&rot, &id, &corners(), opts).unwrap();
        assert_eq!(a.verdict, b.verdict);
        assert_eq!(a.witness.unwrap().value, b.witness.unwrap().value);
    }

    #[test]
    fn rejects_short_m_max() {
        let opts = CycleOptions {
            m_max: 1,
            ..Default::default()
        };
        assert!(check_cyclically_monotone(&Identity { dim: 2 }, &corners(), opts).is_err());
    }
}
