use nalgebra::DMatrix;
use pllab_core::catalogue::{cylinder_lift, graph_residual, half_sq_dist_interval, quadratic_psd, sine, sq_dist_sphere};
use pllab_core::certify::{
    check_pl_claim_default, estimate_pl_constant, normalize, quadratic_growth_check, GrowthFactor,
    DEFAULT_EPS_GROWTH,
};
use pllab_core::{point, BoxBounds, Point, Region, ScalarField};
use proptest::prelude::*;

fn shifted_scaled(base: &ScalarField, alpha: f64, shift: f64) -> ScalarField {
    let (b1, b2) = (base.clone(), base.clone());
    ScalarField::new("scaled", base.dim(), move |x| alpha * b1.eval(x).unwrap() + shift)
        .with_gradient(move |x| b2.grad(x).unwrap() * alpha)
}

#[test]
fn quarter_square_constant_one() {
    let f = quadratic_psd(DMatrix::from_element(1, 1, 0.25)).unwrap();
    let r = estimate_pl_constant(&f, &Region::cube(1, -1.0, 1.0), 100, 0.0, 3).unwrap();
    assert!((r.c_hat - 1.0).abs() < 1e-9);
}

#[test]
fn sphere_local_claim_away_from_center() {
    let f = sq_dist_sphere(&[0.0, 0.0], 1.0).unwrap();
    let region = Region::Sublevel {
        threshold: 0.2,
        bounding_box: BoxBounds::cube(2, -1.5, 1.5),
    };
    let r = check_pl_claim_default(&f, &region, 4.0, 400, 0.0, 9).unwrap();
    assert_eq!(r.pass, Some(true));
}

#[test]
fn cylinder_lift_keeps_constant() {
    let base = half_sq_dist_interval(0.0, 1.0).unwrap();
    let lifted = cylinder_lift(&base, 2).unwrap();
    let a = estimate_pl_constant(&base, &Region::cube(1, -2.0, 3.0), 200, 0.0, 1).unwrap();
    let region = Region::Box(BoxBounds::new(vec![-2.0, -1.0, -1.0], vec![3.0, 1.0, 1.0]));
    let b = estimate_pl_constant(&lifted, &region, 200, 0.0, 1).unwrap();
    assert!((a.c_hat - b.c_hat).abs() < 1e-9);
}

#[test]
fn graph_growth_against_dense_sample() {
    let f = graph_residual(&sine());
    let n = 60_001;
    let model: Vec<Point> = (0..n)
        .map(|i| {
            let x = -3.0 + 6.0 * i as f64 / (n - 1) as f64;
            point(&[x, x.sin()])
        })
        .collect();
    let r = quadratic_growth_check(
        &f,
        &Region::cube(2, -2.0, 2.0),
        4.0,
        &model,
        500,
        42,
        GrowthFactor::Corrected,
        DEFAULT_EPS_GROWTH,
    )
    .unwrap();
    assert!(r.pass, "{:?}", r.violation);
    assert!(r.argmin_spacing.unwrap() < 1.5e-4);
}

#[test]
fn quarter_square_growth_equality() {
    let f = quadratic_psd(DMatrix::from_element(1, 1, 0.25)).unwrap();
    let r = quadratic_growth_check(
        &f,
        &Region::cube(1, -3.0, 3.0),
        1.0,
        &[point(&[0.0])],
        100,
        1,
        GrowthFactor::Corrected,
        DEFAULT_EPS_GROWTH,
    )
    .unwrap();
    assert!(r.pass);
    assert!(r.max_abs_residual <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scaling_covariance(alpha in 0.01f64..100.0, seed in 0u64..1000) {
        let base = graph_residual(&sine());
        let region = Region::cube(2, -2.0, 2.0);
        let a = estimate_pl_constant(&base, &region, 64, 0.0, seed).unwrap();
        let b = estimate_pl_constant(&shifted_scaled(&base, alpha, 0.0), &region, 64, 0.0, seed).unwrap();
        prop_assert!((b.c_hat - alpha * a.c_hat).abs() <= 1e-12 * alpha * a.c_hat * 10.0);
    }

    #[test]
    fn translation_invariance(shift in -5.0f64..5.0, seed in 0u64..1000) {
        let base = quadratic_psd(DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5])).unwrap();
        let region = Region::cube(2, -1.0, 1.0);
        let a = estimate_pl_constant(&base, &region, 64, 0.0, seed).unwrap();
        let b = estimate_pl_constant(&shifted_scaled(&base, 1.0, shift), &region, 64, shift, seed).unwrap();
        prop_assert!((a.c_hat - b.c_hat).abs() <= 1e-9 * a.c_hat, "{} vs {}", a.c_hat, b.c_hat);
    }

    #[test]
    fn normalized_constant_is_one(seed in 0u64..1000) {
        let f = graph_residual(&sine());
        let region = Region::cube(2, -2.0, 2.0);
        let c = estimate_pl_constant(&f, &region, 64, 0.0, seed).unwrap().c_hat;
        let g = normalize(&f, c, 0.0).unwrap();
        let c1 = estimate_pl_constant(&g, &region, 64, 0.0, seed).unwrap().c_hat;
        prop_assert!((c1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic_given_seed(seed in 0u64..1000) {
        let f = sq_dist_sphere(&[0.0, 0.0], 1.0).unwrap();
        let region = Region::Box(BoxBounds::new(vec![0.6, 0.6], vec![1.5, 1.5]));
        let a = estimate_pl_constant(&f, &region, 50, 0.0, seed).unwrap();
        let b = estimate_pl_constant(&f, &region, 50, 0.0, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
