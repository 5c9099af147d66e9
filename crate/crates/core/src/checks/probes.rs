//! Coordinate-sweep checkers: each base point is moved along one axis at a
//! time and the outputs are compared.

use rand::Rng;

use super::{to_f64, CheckError, PointMap, PropertyReport, Witness, DEFAULT_TOL};
use crate::{rng, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeOptions {
    /// Extra sweep values per base point and axis.
    pub probes: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            probes: 8,
            tol: DEFAULT_TOL,
            seed: rng::DEFAULT_SEED,
        }
    }
}

/// Axis ranges of the base points; degenerate axes are widened to `±1`.
fn bounding_box<T: Real>(base: &[Vec<T>], d: usize) -> Vec<(T, T)> {
    (0..d)
        .map(|k| {
            let lo = base.iter().map(|p| p[k]).fold(T::infinity(), T::min);
            let hi = base.iter().map(|p| p[k]).fold(T::neg_infinity(), T::max);
            if hi > lo {
                (lo, hi)
            } else {
                (lo - T::one(), lo + T::one())
            }
        })
        .collect()
}

/// Sweep of `base` along axis `k`: the base point itself first, then the
/// seeded probes, sorted by the swept coordinate.
fn sweep<T: Real>(base: &[T], k: usize, range: (T, T), probes: usize, rng: &mut impl Rng) -> Vec<Vec<T>> {
    let mut out = vec![base.to_vec()];
    for _ in 0..probes {
        let u = T::c(rng.random::<f64>());
        let mut p = base.to_vec();
        p[k] = range.0 + u * (range.1 - range.0);
        out.push(p);
    }
    out.sort_by(|a, b| a[k].partial_cmp(&b[k]).expect("finite sweep"));
    out
}

fn require_dim<T: Real>(d: usize, base: &[Vec<T>]) -> Result<(), CheckError> {
    for p in base {
        super::check_dim(d, p)?;
    }
    Ok(())
}

struct Worst {
    score: f64,
    witness: Witness,
}

fn keep(worst: &mut Option<Worst>, score: f64, witness: impl FnOnce() -> Witness) {
    if worst.as_ref().is_none_or(|w| score > w.score) {
        *worst = Some(Worst {
            score,
            witness: witness(),
        });
    }
}

/// For each axis `i`, `f_i` and `g_i` move in the same direction when only
/// `x_i` changes.
pub fn check_diagonally_comonotone<T: Real, F: PointMap<T> + ?Sized, G: PointMap<T> + ?Sized>(
    f: &F,
    g: &G,
    base: &[Vec<T>],
    opts: ProbeOptions,
) -> Result<PropertyReport, CheckError> {
    let d = f.dim();
    if g.dim() != d {
        return Err(CheckError::Parameter(format!("maps have dimensions {d} and {}", g.dim())));
    }
    require_dim(d, base)?;
    let boxes = bounding_box(base, d);
    let tol = T::c(opts.tol);
    let mut rng = rng::seeded(opts.seed);
    let mut trials = 0;
    let mut worst = None;
    for x in base {
        for (i, range) in boxes.iter().enumerate() {
            let pts = sweep(x, i, *range, opts.probes, &mut rng);
            let fv = f.eval_all(&pts)?;
            let gv = g.eval_all(&pts)?;
            for s in 0..pts.len() {
                for t in s + 1..pts.len() {
                    trials += 1;
                    let prod = (fv[s][i] - fv[t][i]) * (gv[s][i] - gv[t][i]);
                    if prod < -tol {
                        keep(&mut worst, -prod.f64(), || Witness {
                            points: vec![to_f64(&pts[s]), to_f64(&pts[t])],
                            indices: vec![i],
                            value: prod.f64(),
                            detail: format!("coordinate {} increments have opposite signs", i + 1),
                        });
                    }
                }
            }
        }
    }
    Ok(PropertyReport::new(
        "diagonally_comonotone",
        trials,
        opts.tol,
        worst.map(|w| w.witness),
    ))
}

/// Output coordinate `i` does not react to input coordinates `j > i`.
pub fn check_triangular<T: Real, M: PointMap<T> + ?Sized>(
    t: &M,
    base: &[Vec<T>],
    opts: ProbeOptions,
) -> Result<PropertyReport, CheckError> {
    sweep_structure(t, base, opts, false)
}

/// Each output coordinate depends on its own input coordinate only, and is
/// non-decreasing in it.
pub fn check_diagonal_nondecreasing<T: Real, M: PointMap<T> + ?Sized>(
    t: &M,
    base: &[Vec<T>],
    opts: ProbeOptions,
) -> Result<PropertyReport, CheckError> {
    Ok(sweep_structure(t, base, opts, true)?
        .with_note("checked at sampled points only; null-set modifications are invisible"))
}

fn sweep_structure<T: Real, M: PointMap<T> + ?Sized>(
    t: &M,
    base: &[Vec<T>],
    opts: ProbeOptions,
    diagonal: bool,
) -> Result<PropertyReport, CheckError> {
    let d = t.dim();
    require_dim(d, base)?;
    let boxes = bounding_box(base, d);
    let tol = T::c(opts.tol);
    let mut rng = rng::seeded(opts.seed);
    let mut trials = 0;
    let mut worst = None;
    for x in base {
        let tx = t.eval(x)?;
        for (j, range) in boxes.iter().enumerate() {
            let pts = sweep(x, j, *range, opts.probes, &mut rng);
            let tv = t.eval_all(&pts)?;
            for (p, y) in pts.iter().zip(&tv) {
                for i in 0..d {
                    let off_axis = if diagonal { i != j } else { i < j };
                    if !off_axis {
                        continue;
                    }
                    trials += 1;
                    let dev = (y[i] - tx[i]).abs();
                    if dev > tol {
                        keep(&mut worst, dev.f64(), || Witness {
                            points: vec![to_f64(x), to_f64(p)],
                            indices: vec![i, j],
                            value: dev.f64(),
                            detail: format!("output {} moves when input {} changes", i + 1, j + 1),
                        });
                    }
                }
            }
            if diagonal {
                for s in 1..pts.len() {
                    trials += 1;
                    let inc = tv[s][j] - tv[s - 1][j];
                    if pts[s][j] > pts[s - 1][j] && inc < -tol {
                        keep(&mut worst, -inc.f64(), || Witness {
                            points: vec![to_f64(&pts[s - 1]), to_f64(&pts[s])],
                            indices: vec![j, j],
                            value: inc.f64(),
                            detail: format!("output {} decreases along its own axis", j + 1),
                        });
                    }
                }
            }
        }
    }
    let name = if diagonal { "diagonal_nondecreasing" } else { "triangular" };
    Ok(PropertyReport::new(name, trials, opts.tol, worst.map(|w| w.witness)))
}

/// `(f(x) − f(y))(g(x) − g(y)) ≥ −tol` over all sample pairs.
pub fn check_comonotone_1d<T: Real>(
    f: impl Fn(T) -> T,
    g: impl Fn(T) -> T,
    samples: &[T],
    tol: f64,
) -> PropertyReport {
    let fv: Vec<T> = samples.iter().map(|&x| f(x)).collect();
    let gv: Vec<T> = samples.iter().map(|&x| g(x)).collect();
    let mut trials = 0;
    let mut worst = None;
    for s in 0..samples.len() {
        for t in s + 1..samples.len() {
            trials += 1;
            let prod = (fv[s] - fv[t]) * (gv[s] - gv[t]);
            if prod.is_nan() || prod < -T::c(tol) {
                keep(&mut worst, -prod.f64(), || Witness {
                    points: vec![vec![samples[s].f64()], vec![samples[t].f64()]],
                    indices: vec![s, t],
                    value: prod.f64(),
                    detail: "increments have opposite signs".into(),
                });
            }
        }
    }
    PropertyReport::new("comonotone", trials, tol, worst.map(|w| w.witness))
}
