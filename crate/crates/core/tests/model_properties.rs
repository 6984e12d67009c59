use proptest::prelude::*;

use vpcc_rc::models::{
    fit_model, fit_rq, fit_weighted_least_squares, ColorRdModel, FittedModel, GeometryRdModel, ModelKind, RdSample,
    RqModel,
};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #[test]
    fn geometry_quality_rises_with_rate(a in -50.0..-0.01f64, b in 20.0..80.0f64, r in 0.01..100.0f64, dr in 0.001..10.0f64) {
        let m = GeometryRdModel::new(a, b).unwrap();
        prop_assert!(m.eval(r + dr).unwrap() > m.eval(r).unwrap());
        prop_assert!(m.eval(r).unwrap() < b);
    }

    #[test]
    fn color_quality_rises_with_rate(a in 0.01..200.0f64, b in -100.0..50.0f64, r in 0.01..100.0f64, dr in 0.001..10.0f64) {
        let m = ColorRdModel::new(a, b).unwrap();
        prop_assert!(m.eval(r + dr).unwrap() > m.eval(r).unwrap());
    }

    #[test]
    fn geometry_derivative_matches_central_difference(a in -50.0..-0.01f64, b in 20.0..80.0f64, r in 0.1..100.0f64) {
        let m = GeometryRdModel::new(a, b).unwrap();
        let h = r * 1e-5;
        let fd = (m.eval(r + h).unwrap() - m.eval(r - h).unwrap()) / (2.0 * h);
        prop_assert!(rel(m.deriv(r).unwrap(), fd) < 1e-6);
    }

    #[test]
    fn color_derivative_matches_central_difference(a in 0.01..200.0f64, b in -100.0..50.0f64, r in 0.1..100.0f64) {
        let m = ColorRdModel::new(a, b).unwrap();
        let h = r * 1e-5;
        let fd = (m.eval(r + h).unwrap() - m.eval(r - h).unwrap()) / (2.0 * h);
        prop_assert!(rel(m.deriv(r).unwrap(), fd) < 1e-6);
    }

    #[test]
    fn rq_bits_fall_with_qp(a in 1.0..1e9f64, b in -4.0..-0.1f64, qp in 1u8..51) {
        let m = RqModel::new(a, b).unwrap();
        prop_assert!(m.eval(qp + 1).unwrap() < m.eval(qp).unwrap());
    }

    #[test]
    fn rq_invert_round_trips_on_integer_qps(a in 1e3..1e9f64, b in -4.0..-0.5f64, qp in 1u8..=51) {
        let m = RqModel::new(a, b).unwrap();
        prop_assert_eq!(m.invert(m.eval(qp).unwrap()).unwrap(), qp);
    }

    #[test]
    fn noiseless_rq_samples_are_recovered(a in 1e3..1e9f64, b in -4.0..-0.5f64, start in 1u8..30, step in 1u8..5) {
        let samples: Vec<RdSample> = (0..4)
            .map(|i| {
                let qp = start + i * step;
                RdSample::new(qp, a * f64::from(qp).powf(b), None).unwrap()
            })
            .collect();
        let (m, fit) = fit_rq(&samples).unwrap();
        prop_assert!(rel(m.a(), a) < 1e-9);
        prop_assert!(rel(m.b(), b) < 1e-9);
        prop_assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_geometry_and_color_samples_are_recovered(
        ag in -50.0..-0.01f64, bg in 20.0..80.0f64, ac in 1.0..200.0f64, bc in -100.0..50.0f64,
    ) {
        let rates = [0.5, 1.0, 2.0, 4.0, 8.0];
        let g: Vec<(f64, f64)> = rates.iter().map(|&r| (r, ag / r + bg)).collect();
        let c: Vec<(f64, f64)> = rates.iter().map(|&r| (r, ac * r.powf(0.1) + bc)).collect();
        let fg = fit_model(ModelKind::GeometryRd, &g).unwrap();
        let fc = fit_model(ModelKind::ColorRd, &c).unwrap();
        match (fg.model, fc.model) {
            (FittedModel::Geometry(mg), FittedModel::Color(mc)) => {
                prop_assert!(rel(mg.a_g(), ag) < 1e-9);
                prop_assert!(rel(mg.b_g(), bg) < 1e-9);
                prop_assert!(rel(mc.a_c(), ac) < 1e-9);
                prop_assert!(rel(mc.b_c(), bc) < 1e-9);
            }
            other => prop_assert!(false, "wrong families: {other:?}"),
        }
        prop_assert!((fg.report.r_squared - 1.0).abs() < 1e-12);
        prop_assert!((fc.report.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn r_squared_never_exceeds_one(ys in prop::collection::vec(-100.0..100.0f64, 4..20)) {
        let xs: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
        let ws = vec![1.0; ys.len()];
        let fit = fit_weighted_least_squares(&xs, &ys, &ws).unwrap();
        prop_assert!(fit.r_squared <= 1.0);
        prop_assert!(fit.r_squared >= 0.0 || ys.iter().all(|y| *y == ys[0]));
    }
}

#[test]
fn dependency_fit_flags_unusual_slope() {
    let pts: Vec<(f64, f64)> = (0..5)
        .map(|i| (60.0 + i as f64, 0.9 * (60.0 + i as f64) - 10.0))
        .collect();
    let f = fit_model(ModelKind::QualityDependency, &pts).unwrap();
    assert!(f.warning);
    let pts: Vec<(f64, f64)> = (0..5)
        .map(|i| (60.0 + i as f64, 0.3 * (60.0 + i as f64) + 20.0))
        .collect();
    assert!(!fit_model(ModelKind::QualityDependency, &pts).unwrap().warning);
}
