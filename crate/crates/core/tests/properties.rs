use std::sync::Arc;

use mtl_core::checks::{
    check_cyclically_monotone, check_diagonal_nondecreasing, check_family_algebra, check_triangular, CycleOptions,
    Family, FnMap, Law, PointMap, ProbeOptions,
};
use mtl_core::dsl::{parse_expr, parse_scm, BinOp, Expr, UnaryOp, Var};
use mtl_core::maps::{
    cm_map, compose, invert, kr_map, kr_via_eps, matching_cost, qp_map, DiscreteMatching, MatchingKind,
    DEFAULT_TIE_TOL,
};
use mtl_core::measures::{
    parse_csv, parse_json, pushforward, quantile_1d, to_csv, to_json, uniform_cube_sample, DiscreteMeasure,
};
use mtl_core::ot::{brute_force_assignment, cost_matrix, solve_assignment, CostSpec};
use mtl_core::scm::{builtin, counterfactual_point, recover_noise, solve_forward, CounterfactualMap};
use mtl_core::{Matching, Measure};
use ndarray::Array2;
use proptest::prelude::*;

fn cloud(d: usize, n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0..2.0f64, d), n)
}

fn measure(pts: Vec<Vec<f64>>, id: &str) -> Arc<Measure> {
    Arc::new(DiscreteMeasure::uniform(id, pts).unwrap())
}

/// Continuous draws, so coordinates are distinct with probability one.
fn distinct_pair(d: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    (2usize..8).prop_flat_map(move |n| (cloud(d, n), cloud(d, n)))
}

fn cost_of(kind: bool) -> CostSpec<f64> {
    if kind {
        CostSpec::SquaredEuclidean
    } else {
        CostSpec::hierarchical(0.3).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, .. ProptestConfig::default() })]

    #[test]
    fn assignment_matches_brute_force((src, dst) in distinct_pair(2), sq in any::<bool>()) {
        let c = cost_matrix(&src, &dst, &cost_of(sq)).unwrap();
        let fast = solve_assignment(&c).unwrap();
        let slow = brute_force_assignment(&c).unwrap();
        prop_assert_eq!(&fast.perm, &slow.perm);
        prop_assert!((fast.objective - slow.objective).abs() <= 1e-9 * slow.objective.abs().max(1.0));
    }
}

proptest! {
    #[test]
    fn assignment_relabeling_and_shift((src, dst) in distinct_pair(2), shift in -5.0..5.0f64) {
        let c = cost_matrix(&src, &dst, &CostSpec::SquaredEuclidean).unwrap();
        let n = src.len();
        let base = solve_assignment(&c).unwrap();

        // Same permutation applied to rows and columns: the objective is unchanged.
        let sigma: Vec<usize> = (0..n).rev().collect();
        let relabeled = Array2::from_shape_fn((n, n), |(i, j)| c[[sigma[i], sigma[j]]]);
        let r = solve_assignment(&relabeled).unwrap();
        prop_assert!((r.objective - base.objective).abs() <= 1e-9 * base.objective.max(1.0));

        let shifted = c.mapv(|v| v + shift);
        let s = solve_assignment(&shifted).unwrap();
        prop_assert_eq!(&s.perm, &base.perm);
        prop_assert!((s.objective - base.objective - n as f64 * shift).abs() <= 1e-9 * (base.objective.abs() + n as f64 * shift.abs()).max(1.0));
    }

    #[test]
    fn measure_files_round_trip(pts in prop::collection::vec(prop::collection::vec(-1e6..1e6f64, 3), 1..20),
                                raw in prop::collection::vec(0.01..1.0f64, 20)) {
        let w: Vec<f64> = raw[..pts.len()].to_vec();
        let total: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|x| x / total).collect();
        let m = DiscreteMeasure::new("m", pts, w).unwrap();
        let csv: Measure = parse_csv("m", &to_csv(&m)).unwrap();
        let json: Measure = parse_json("m", &to_json(&m).unwrap()).unwrap();
        prop_assert_eq!(csv.points(), m.points());
        prop_assert_eq!(csv.weights(), m.weights());
        prop_assert_eq!(json.points(), m.points());
        prop_assert_eq!(json.weights(), m.weights());
    }

    #[test]
    fn quantile_is_monotone_and_pushforward_keeps_mass(vals in prop::collection::vec(-3.0..3.0f64, 1..15)) {
        let m: Measure = DiscreteMeasure::uniform("v", vals.iter().map(|&v| vec![v]).collect()).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 1..200 {
            let q = quantile_1d(&m, k as f64 / 200.0).unwrap();
            prop_assert!(q >= prev);
            prev = q;
        }
        let squash = FnMap::new("round", 1, |x: &[f64]| vec![x[0].round()]);
        let p = pushforward(&m, &squash).unwrap();
        prop_assert!((p.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn matching_algebra((a, b) in distinct_pair(2)) {
        let (mu, nu) = (measure(a, "mu"), measure(b, "nu"));
        let t = cm_map(&mu, &nu).unwrap();
        prop_assert_eq!(invert(&invert(&t)).perm().to_vec(), t.perm().to_vec());
        let round = compose(&invert(&t), &t).unwrap();
        prop_assert!(round.perm().iter().enumerate().all(|(i, &j)| i == j));
        let id = DiscreteMatching::identity(nu.clone()).unwrap();
        prop_assert_eq!(compose(&id, &t).unwrap().perm().to_vec(), t.perm().to_vec());
        // The reverse optimal matching is the inverse.
        prop_assert_eq!(cm_map(&nu, &mu).unwrap().perm().to_vec(), invert(&t).perm().to_vec());
        // Matching the source onto the target reproduces the target multiset.
        let pushed: Measure = pushforward(&mu, &t.as_map()).unwrap();
        prop_assert!(pushed.same_distribution(&nu));
    }

    #[test]
    fn cm_is_cheapest((a, b, r) in (2usize..7).prop_flat_map(|n| (cloud(2, n), cloud(2, n), cloud(2, n)))) {
        let (mu, nu, p0) = (measure(a, "mu"), measure(b, "nu"), measure(r, "p0"));
        let sq = CostSpec::SquaredEuclidean;
        let cm = matching_cost(&cm_map(&mu, &nu).unwrap(), &sq);
        let kr = matching_cost(&kr_map(&mu, &nu, DEFAULT_TIE_TOL).unwrap(), &sq);
        let qp = matching_cost(&qp_map(&mu, &nu, &p0).unwrap(), &sq);
        prop_assert!(cm <= kr + 1e-12 && cm <= qp + 1e-12, "cm {} kr {} qp {}", cm, kr, qp);
    }

    #[test]
    fn one_dimensional_collapse((a, b, r) in (2usize..10).prop_flat_map(|n| (cloud(1, n), cloud(1, n), cloud(1, n)))) {
        let (mu, nu, p0) = (measure(a, "mu"), measure(b, "nu"), measure(r, "p0"));
        let cm = cm_map(&mu, &nu).unwrap();
        prop_assert_eq!(qp_map(&mu, &nu, &p0).unwrap().perm().to_vec(), cm.perm().to_vec());
        prop_assert_eq!(kr_map(&mu, &nu, DEFAULT_TIE_TOL).unwrap().perm().to_vec(), cm.perm().to_vec());
    }

    #[test]
    fn small_eps_is_kr((a, b) in (2usize..7).prop_flat_map(|n| (cloud(2, n), cloud(2, n)))) {
        let (mu, nu) = (measure(a, "mu"), measure(b, "nu"));
        let eps = kr_via_eps(&mu, &nu, 1e-12).unwrap();
        prop_assert_eq!(eps.kind(), MatchingKind::OtEps);
        prop_assert_eq!(eps.perm().to_vec(), kr_map(&mu, &nu, DEFAULT_TIE_TOL).unwrap().perm().to_vec());
        prop_assert_eq!(kr_via_eps(&mu, &nu, 1.0).unwrap().perm().to_vec(), cm_map(&mu, &nu).unwrap().perm().to_vec());
    }

    #[test]
    fn kr_and_qp_families_are_lawful(n in 3usize..12, seed in any::<u64>()) {
        let ms: Vec<Arc<Measure>> = (0..3)
            .map(|k| Arc::new(uniform_cube_sample(2, n, seed.wrapping_add(k)).unwrap()))
            .collect();
        let p0 = Arc::new(uniform_cube_sample(2, n, seed.wrapping_add(7)).unwrap());
        let kr: Vec<Vec<Matching>> = ms.iter()
            .map(|s| ms.iter().map(|t| kr_map(s, t, DEFAULT_TIE_TOL).unwrap()).collect())
            .collect();
        let qp: Vec<Vec<Matching>> = ms.iter()
            .map(|s| ms.iter().map(|t| qp_map(s, t, &p0).unwrap()).collect())
            .collect();
        for table in [&kr, &qp] {
            let reports = check_family_algebra(&Family::Matchings(table), &Law::ALL, seed).unwrap();
            prop_assert!(reports.iter().all(|r| r.passed()), "{:?}", reports);
        }
    }

    #[test]
    fn forward_and_recover_are_inverse(u in prop::collection::vec(-0.4..0.4f64, 3), a in -0.5..0.5f64) {
        let m = builtin("cyclic-triangular").unwrap().model;
        let x = solve_forward(&m, a, &u).unwrap();
        let back = recover_noise(&m, a, &x).unwrap();
        for (p, q) in back.iter().zip(&u) {
            prop_assert!((p - q).abs() <= 1e-10);
        }
    }

    #[test]
    fn gene_smoking_round_trip(u in prop::collection::vec(-3.0..3.0f64, 2), a in 0.0..1.0f64) {
        let m = builtin("gene-smoking").unwrap().model;
        let back = recover_noise(&m, a, &solve_forward(&m, a, &u).unwrap()).unwrap();
        prop_assert!((back[0] - u[0]).abs() <= 1e-10 && (back[1] - u[1]).abs() <= 1e-10);
    }

    #[test]
    fn linear_counterfactuals_are_translations(x in prop::collection::vec(-2.0..2.0f64, 2),
                                               y in prop::collection::vec(-2.0..2.0f64, 2),
                                               a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let m = builtin("qp-linear").unwrap().model;
        let cx = counterfactual_point(&m, a, b, &x).unwrap();
        let cy = counterfactual_point(&m, a, b, &y).unwrap();
        for k in 0..2 {
            prop_assert!(((cx[k] - x[k]) - (cy[k] - y[k])).abs() <= 1e-10);
        }
    }
}

fn arb_var() -> impl Strategy<Value = Var> {
    prop_oneof![
        (1usize..4).prop_map(Var::X),
        Just(Var::A),
        (1usize..4).prop_map(Var::U),
        Just(Var::UA),
    ]
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    // Non-negative literals: a negative literal prints as unary minus.
    let leaf = prop_oneof![
        (0.0..100.0f64).prop_map(Expr::num),
        (0u32..20).prop_map(|k| Expr::num(f64::from(k))),
        arb_var().prop_map(Expr::var),
    ];
    leaf.prop_recursive(5, 40, 2, |inner| {
        prop_oneof![
            (prop_oneof![Just(UnaryOp::Neg), Just(UnaryOp::Exp), Just(UnaryOp::Ind)], inner.clone())
                .prop_map(|(op, e)| Expr::unary(op, e)),
            (
                prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div)],
                inner.clone(),
                inner
            )
                .prop_map(|(op, l, r)| Expr::bin(op, l, r)),
        ]
    })
}

proptest! {
    #[test]
    fn expressions_print_and_reparse(e in arb_expr()) {
        let text = e.to_string();
        let back = parse_expr(&text).unwrap();
        prop_assert_eq!(&back, &e, "{}", text);
        prop_assert_eq!(parse_expr(&back.to_string()).unwrap(), back);
    }
}

#[test]
fn model_text_is_a_fixed_point() {
    for src in [
        "X1 = U1\nA = ind(X1 + UA)\nX2 = 0.5*X1 + 2*A + U2",
        "X2 = X1*X3 + U2\nX3 = A*X2 + U3\nX1 = U1\nA = UA",
        "X1 = exp(U1) - A; X2 = X1 / 2 + U2\nU1 ~ gaussian(0, 2)",
    ] {
        let m = parse_scm(src).unwrap();
        let again = parse_scm(&m.to_dsl()).unwrap();
        assert_eq!(again, m, "{src}");
        assert_eq!(parse_scm(&again.to_dsl()).unwrap(), again);
    }
}

#[test]
fn diagonal_nondecreasing_implies_triangular_and_monotone() {
    let pts = uniform_cube_sample::<f64>(3, 20, 11).unwrap().points().to_vec();
    let maps: Vec<FnMap<f64>> = vec![
        FnMap::new("translation", 3, |x: &[f64]| vec![x[0] + 1.0, x[1] - 2.0, x[2]]),
        FnMap::new("cubes", 3, |x: &[f64]| vec![x[0].powi(3), x[1].exp(), 2.0 * x[2]]),
        FnMap::new("shear", 3, |x: &[f64]| vec![x[0], x[0] + x[1], x[2]]),
        FnMap::new("swap", 3, |x: &[f64]| vec![x[1], x[0], x[2]]),
    ];
    for t in &maps {
        let diag = check_diagonal_nondecreasing(t, &pts, ProbeOptions::default()).unwrap();
        if diag.passed() {
            assert!(check_triangular(t, &pts, ProbeOptions::default()).unwrap().passed(), "{}", t.name());
            assert!(check_cyclically_monotone(t, &pts, CycleOptions::default()).unwrap().passed(), "{}", t.name());
        }
    }
}

#[test]
fn counterfactual_families_are_lawful() {
    for name in ["gene-smoking", "cyclic-triangular", "qp-linear"] {
        let b = builtin(name).unwrap();
        let pts: Vec<Vec<Vec<f64>>> = b
            .a_values
            .iter()
            .map(|&a| mtl_core::scm::interventional_sample(&b.model, a, 30, 5).unwrap().points().to_vec())
            .collect();
        let table: Vec<Vec<Box<dyn PointMap<f64> + '_>>> = b
            .a_values
            .iter()
            .map(|&a| {
                b.a_values
                    .iter()
                    .map(|&c| Box::new(CounterfactualMap::new(&b.model, a, c)) as Box<dyn PointMap<f64>>)
                    .collect()
            })
            .collect();
        let fam = Family::Maps {
            table: &table,
            points: &pts,
            tol: 1e-9,
        };
        let reports = check_family_algebra(&fam, &Law::ALL, 1).unwrap();
        assert!(reports.iter().all(|r| r.passed()), "{name}: {reports:?}");
    }
}
