//! Discrete Knothe–Rosenblatt matching.
//!
//! Coordinates are processed in order. At coordinate `k` the source and
//! target atoms of the current block are grouped into value classes
//! (connected components of the "within `tie_tol`" relation on sorted
//! values). Source classes are assigned, in order, to consecutive target
//! classes so that the first-coordinate map stays a non-decreasing function
//! of the class value; a source class that would have to straddle two target
//! classes makes the conditional problem non-transportable at uniform
//! weights. Each target class then forms a block that is refined on the next
//! coordinate. The last coordinate is matched by sorted rank.

use std::cmp::Ordering;
use std::sync::Arc;

use super::{require_pair, DiscreteMatching, MatchingError, MatchingKind};
use crate::measures::DiscreteMeasure;
use crate::Real;

/// Default tie tolerance for grouping coordinate values.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

pub fn kr_map<T: Real>(
    mu: &Arc<DiscreteMeasure<T>>,
    nu: &Arc<DiscreteMeasure<T>>,
    tie_tol: T,
) -> Result<DiscreteMatching<T>, MatchingError> {
    require_pair(mu, nu)?;
    let n = mu.len();
    let mut perm = vec![usize::MAX; n];
    let src: Vec<usize> = (0..n).collect();
    let dst: Vec<usize> = (0..n).collect();
    match_block(mu, nu, src, dst, 0, tie_tol.abs(), &mut perm)?;
    DiscreteMatching::new(mu.clone(), nu.clone(), perm, MatchingKind::Kr)
}

fn sort_by_coord<T: Real>(m: &DiscreteMeasure<T>, idx: &mut [usize], k: usize) {
    idx.sort_by(|&a, &b| {
        m.point(a)[k]
            .partial_cmp(&m.point(b)[k])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
}

/// Splits sorted indices into value classes.
fn classes<T: Real>(m: &DiscreteMeasure<T>, sorted: &[usize], k: usize, tol: T) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut prev: Option<T> = None;
    for &i in sorted {
        let v = m.point(i)[k];
        match prev {
            Some(p) if v - p <= tol => out.last_mut().expect("open class").push(i),
            _ => out.push(vec![i]),
        }
        prev = Some(v);
    }
    out
}

fn match_block<T: Real>(
    mu: &DiscreteMeasure<T>,
    nu: &DiscreteMeasure<T>,
    mut src: Vec<usize>,
    mut dst: Vec<usize>,
    k: usize,
    tol: T,
    perm: &mut [usize],
) -> Result<(), MatchingError> {
    debug_assert_eq!(src.len(), dst.len());
    sort_by_coord(mu, &mut src, k);
    sort_by_coord(nu, &mut dst, k);
    if k + 1 == mu.dim() {
        for (s, t) in src.into_iter().zip(dst) {
            perm[s] = t;
        }
        return Ok(());
    }
    let src_classes = classes(mu, &src, k, tol);
    let dst_classes = classes(nu, &dst, k, tol);
    let mut src_iter = src_classes.into_iter().peekable();
    for target_class in dst_classes {
        let mut block: Vec<usize> = Vec::with_capacity(target_class.len());
        while block.len() < target_class.len() {
            let class = src_iter.next().expect("equal block sizes");
            if block.len() + class.len() > target_class.len() {
                return Err(MatchingError::Conditional {
                    coordinate: k + 1,
                    value: mu.point(class[0])[k].f64(),
                    detail: format!(
                        "{} source atoms would straddle a target class of {} atoms at value {}",
                        class.len(),
                        target_class.len(),
                        nu.point(target_class[0])[k].f64()
                    ),
                });
            }
            block.extend(class);
        }
        match_block(mu, nu, block, target_class, k + 1, tol, perm)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::uniform_grid;

    fn arc(points: Vec<Vec<f64>>) -> Arc<DiscreteMeasure<f64>> {
        Arc::new(DiscreteMeasure::uniform("m", points).unwrap())
    }

    #[test]
    fn translation_of_grid() {
        let g = uniform_grid(2, 2, 0.0, 1.0).unwrap();
        let mu = Arc::new(g.clone());
        let nu = Arc::new(
            DiscreteMeasure::uniform("shift", g.points().iter().map(|p| vec![p[0] + 1.0, p[1]]).collect()).unwrap(),
        );
        let t = kr_map(&mu, &nu, DEFAULT_TIE_TOL).unwrap();
        for (x, y) in t.segments() {
            assert_eq!(y, &[x[0] + 1.0, x[1]]);
        }
    }

    #[test]
    fn distinct_leading_coordinates_sort_lexicographically() {
        let mu = arc(vec![vec![0.5, 9.0], vec![0.1, -3.0], vec![0.9, 0.0]]);
        let nu = arc(vec![vec![3.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]]);
        assert_eq!(kr_map(&mu, &nu, 1e-9).unwrap().perm(), &[2, 1, 0]);
    }

    #[test]
    fn pooled_block_when_target_class_is_wide() {
        // Source leading values distinct, target has one class of two atoms
        // and one singleton: the two smallest sources share a block and are
        // then ordered by the second coordinate.
        let mu = arc(vec![vec![0.0, 5.0], vec![1.0, 0.0], vec![2.0, 1.0]]);
        let nu = arc(vec![vec![7.0, 1.0], vec![7.0, 2.0], vec![8.0, 0.0]]);
        assert_eq!(kr_map(&mu, &nu, 1e-9).unwrap().perm(), &[1, 0, 2]);
    }

    #[test]
    fn straddling_class_is_an_error() {
        let mu = arc(vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]);
        let nu = arc(vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 0.0]]);
        let err = kr_map(&mu, &nu, 1e-9).unwrap_err();
        assert!(matches!(err, MatchingError::Conditional { coordinate: 1, .. }), "{err}");
    }

    #[test]
    fn tie_tolerance_chains() {
        let mu = arc(vec![vec![0.0, 1.0], vec![1e-10, 0.0], vec![1.0, 0.0]]);
        let nu = arc(vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![5.0, 0.0]]);
        // 0 and 1e-10 form one class, so the pair is ordered by coordinate two.
        assert_eq!(kr_map(&mu, &nu, 1e-9).unwrap().perm(), &[1, 0, 2]);
        // With a tight tolerance the source classes are singletons; both fit
        // inside the wide target class and the result is the same.
        assert_eq!(kr_map(&mu, &nu, 1e-12).unwrap().perm(), &[1, 0, 2]);
    }
}
