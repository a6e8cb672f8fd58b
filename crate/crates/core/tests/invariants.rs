use krylov_core::barriers::{compute_alpha, gamma_final, BarrierParams};
use krylov_core::constants::{FSConfig, Pipeline};
use krylov_core::pucci::{frame_min, pucci_minus, pucci_plus, sandwich_check};
use krylov_core::solver::{comparison_test, CoefficientField, FnBoundary, FnSource, Grid, GridOptions};
use krylov_core::{
    Coord, EllipticityPair, GridFunction, IndicatorSet, Lattice, LogValue, OperatorSpec, ParabolicCylinder, Role, SymMatrix,
};
use proptest::prelude::*;

fn ell() -> impl Strategy<Value = EllipticityPair> {
    (0.1f64..1.0, 1.0f64..3.0).prop_map(|(l, big)| EllipticityPair::new(l, big).unwrap())
}

fn sym(dim: usize) -> impl Strategy<Value = SymMatrix> {
    (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0)
        .prop_map(move |(a, b, c)| if dim == 1 { SymMatrix::scalar(a) } else { SymMatrix::two(a, b, c) })
}

fn psd() -> impl Strategy<Value = SymMatrix> {
    (0.0f64..3.0, 0.0f64..3.0, 0.0f64..3.2).prop_map(|(p, q, t)| SymMatrix::rotated_diag(p, q, t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pucci_duality_and_order(e in ell(), m in sym(2)) {
        prop_assert!((pucci_plus(&m, &e) + pucci_minus(&m.scale(-1.0), &e)).abs() < 1e-12);
        prop_assert!(pucci_minus(&m, &e) <= pucci_plus(&m, &e) + 1e-12);
    }

    #[test]
    fn pucci_is_positively_homogeneous(e in ell(), m in sym(2), s in 0.0f64..10.0) {
        let lhs = pucci_minus(&m.scale(s), &e);
        prop_assert!((lhs - s * pucci_minus(&m, &e)).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn pucci_sandwich(e in ell(), m in sym(2), k in psd()) {
        prop_assert!(sandwich_check(&m, &k, &e).unwrap());
    }

    #[test]
    fn frames_never_undershoot(e in ell(), m in sym(2), k in 1usize..80) {
        prop_assert!(frame_min(&m, &e, k) >= pucci_minus(&m, &e) - 1e-12);
    }

    #[test]
    fn log_values_multiply(a in 1e-300f64..1e300, b in 1e-300f64..1e300) {
        let p = LogValue::new(a) * LogValue::new(b);
        prop_assert!((p.ln() - (a.ln() + b.ln())).abs() < 1e-12 * (1.0 + p.ln().abs()));
    }

    #[test]
    fn gamma_decreases_in_alpha(theta in 0.05f64..0.95, frac in 0.05f64..1.0, a in 2.0f64..50.0, da in 0.0f64..10.0) {
        let delta = 0.5 * theta * frac;
        prop_assert!(gamma_final(theta, delta, a + da).ln() <= gamma_final(theta, delta, a).ln() + 1e-9);
    }

    #[test]
    fn alpha_grows_with_margin(theta in 0.1f64..0.9, tau in 0.2f64..2.0, m in 0.0f64..0.5) {
        let p = BarrierParams::new(theta, 0.5 * theta, 0.5, tau, tau, EllipticityPair::default(), 1).unwrap();
        prop_assert!(compute_alpha(&p, m) <= compute_alpha(&p, m + 0.1));
    }

    #[test]
    fn indicator_text_round_trips(bits in proptest::collection::vec(any::<bool>(), 9 * 4)) {
        let lattice = Lattice::unit(1, 9, 4).unwrap();
        // the end nodes sit on |x| = 1, outside the cylinder
        let bits: Vec<bool> = bits.iter().enumerate().map(|(i, &b)| b && i % 9 != 0 && i % 9 != 8).collect();
        let set = IndicatorSet::from_mask(lattice, bits).unwrap();
        let back = IndicatorSet::from_text(&set.to_text()).unwrap();
        prop_assert_eq!(back.mask(), set.mask());
    }

    #[test]
    fn operator_text_round_trips(seed in any::<u64>(), dim in 1usize..=2, e in ell()) {
        let op = OperatorSpec::linear(e, CoefficientField::dyadic(seed, 2, dim, &e)).unwrap();
        prop_assert_eq!(OperatorSpec::from_text(&op.to_text()).unwrap(), op);
    }

    #[test]
    fn grid_function_text_round_trips(vals in proptest::collection::vec(-1e3f64..1e3, 9)) {
        let op = OperatorSpec::pucci_minus(EllipticityPair::default());
        let grid = Grid::new(ParabolicCylinder::unit(), 1, 9, &op, GridOptions::for_dim(1)).unwrap();
        let mut g = GridFunction::new(&grid, Role::Supersolution, 1);
        g.push_level(-1.0, vals.clone());
        g.push_level(0.0, vals.iter().map(|v| 2.0 * v).collect());
        let back = GridFunction::from_text(&g.to_text()).unwrap();
        prop_assert_eq!(back.last(), g.last());
        prop_assert_eq!(back.times(), g.times());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scheme_preserves_order(dim in 1usize..=2, e in ell(), f in -1.0f64..1.0, df in 0.0f64..1.0, g in -1.0f64..1.0, dg in 0.0f64..1.0, w in 0.0f64..6.0) {
        let op = OperatorSpec::pucci_minus(e);
        let nodes = if dim == 1 { 17 } else { 9 };
        let grid = Grid::new(ParabolicCylinder::unit(), dim, nodes, &op, GridOptions::for_dim(dim)).unwrap();
        let su = FnSource(move |x: Coord, t: f64| f * (w * x[0] + t).sin());
        let sv = FnSource(move |x: Coord, t: f64| f * (w * x[0] + t).sin() + df);
        let bu = FnBoundary(move |x: Coord, _| g * x[0]);
        let bv = FnBoundary(move |x: Coord, _| g * x[0] + dg);
        let out = comparison_test(&grid, &op, (&su, &bu), (&sv, &bv)).unwrap();
        prop_assert!(out.hypothesis && out.max_violation <= 1e-12);
    }

    #[test]
    fn cylinder_bound_is_monotone_in_radius(kappa in 0.1f64..0.9, r in 0.05f64..0.9, dr in 0.0f64..0.1) {
        let pipe = Pipeline::new(kappa, EllipticityPair::default(), 1, FSConfig::default()).unwrap();
        let (a, b) = (pipe.prop_qlbnd(r).unwrap(), pipe.prop_qlbnd((r + dr).min(1.0)).unwrap());
        prop_assert!(a.bound.ln() <= b.bound.ln() + 1e-9);
    }

    #[test]
    fn measure_bound_is_linear_in_level(m in 0.01f64..1.0, level in 0.01f64..10.0) {
        let pipe = Pipeline::new(0.5, EllipticityPair::default(), 1, FSConfig::default()).unwrap();
        let one = pipe.thm_lb(m, 1.0).unwrap().bound.ln();
        let scaled = pipe.thm_lb(m, level).unwrap().bound.ln();
        prop_assert!((scaled - one - level.ln()).abs() < 1e-9 * (1.0 + one.abs()));
    }

    #[test]
    fn tsfs_bound_is_monotone_in_norm(f in 0.01f64..0.9, df in 0.0f64..0.09) {
        let pipe = Pipeline::new(0.5, EllipticityPair::default(), 1, FSConfig::default()).unwrap();
        prop_assert!(pipe.thm_tsfs(f).unwrap().bound.ln() <= pipe.thm_tsfs(f + df).unwrap().bound.ln() + 1e-9);
    }
}
