use pllab_core::catalogue::half_sq_dist_interval;
use pllab_core::certify::check_pl_claim_default;
use pllab_core::distance::{
    dist_sq_field, flow_formula_check, ray_invariance_check, separation_convexity_test,
    ClosedSetRep, ConvexityVerdict, DEFAULT_S_GRID,
};
use pllab_core::sampling::sample_region;
use pllab_core::{point, FlowConfig, Point, Region};
use proptest::prelude::*;

fn fixtures() -> Vec<ClosedSetRep> {
    vec![
        ClosedSetRep::point_cloud(&[&[0.0, 0.0], &[2.0, 0.0], &[0.5, 1.5]]).unwrap(),
        ClosedSetRep::boxed(&[0.0, 0.0], &[1.0, 1.0]).unwrap(),
        ClosedSetRep::sphere(&[0.0, 0.0], 1.0).unwrap(),
        ClosedSetRep::affine(&[0.0, 1.0], &[&[0.6, 0.8]]).unwrap(),
        triangle(),
        ClosedSetRep::union(vec![
            ClosedSetRep::boxed(&[-2.0, -2.0], &[-1.0, -1.0]).unwrap(),
            ClosedSetRep::sphere(&[1.0, 1.0], 0.5).unwrap(),
        ])
        .unwrap(),
    ]
}

fn triangle() -> ClosedSetRep {
    ClosedSetRep::polytope(
        &[&[-1.0, 0.0], &[0.0, -1.0], &[1.0, 1.0]],
        &[0.0, 0.0, 1.0],
        &[0.2, 0.2],
    )
    .unwrap()
}

fn convex_fixtures() -> Vec<ClosedSetRep> {
    vec![
        ClosedSetRep::boxed(&[0.0, 0.0], &[1.0, 1.0]).unwrap(),
        ClosedSetRep::affine(&[0.0, 1.0], &[&[0.6, 0.8]]).unwrap(),
        triangle(),
    ]
}

#[test]
fn box_field_matches_interval_catalogue() {
    let set = ClosedSetRep::boxed(&[0.0], &[1.0]).unwrap();
    let a = dist_sq_field(&set).unwrap();
    let b = half_sq_dist_interval(0.0, 1.0).unwrap();
    for x in sample_region(&Region::cube(1, -3.0, 4.0), 100, 5, None).unwrap() {
        assert!((a.eval(&x).unwrap() - b.eval(&x).unwrap()).abs() <= 1e-14);
    }
}

#[test]
fn affine_field_hessian_constant() {
    let set = ClosedSetRep::affine(&[0.0, 0.0], &[&[1.0, 0.0]]).unwrap();
    let f = dist_sq_field(&set).unwrap();
    for x in sample_region(&Region::cube(2, -3.0, 3.0), 20, 1, None).unwrap() {
        assert_eq!(f.eval(&x).unwrap(), 0.5 * x[1] * x[1]);
        let h = f.fd_hessian(&x).unwrap();
        assert!((h[(0, 0)]).abs() < 1e-6 && (h[(1, 1)] - 1.0).abs() < 1e-6);
    }
}

#[test]
fn dist_field_pl_constant_two() {
    for set in fixtures() {
        let f = dist_sq_field(&set).unwrap();
        let r = check_pl_claim_default(&f, &Region::cube(2, -3.0, 3.0), 2.0, 200, 0.0, 7).unwrap();
        assert_eq!(r.pass, Some(true), "{}: {:?}", set.variant_name(), r.violation);
    }
}

#[test]
fn flow_formula_on_convex_fixtures() {
    let cfg = FlowConfig::default().with_max_time(10.0);
    for set in convex_fixtures() {
        let x = point(&[2.0, 2.5]);
        let r = flow_formula_check(&set, &x, &cfg).unwrap();
        assert!(r.pass, "{}: {} / {}", set.variant_name(), r.max_deviation, r.max_projection_drift);
    }
    let square = ClosedSetRep::boxed(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
    let r = flow_formula_check(&square, &point(&[2.0, 2.0]), &cfg).unwrap();
    assert_eq!(r.projection, vec![1.0, 1.0]);
    assert!(r.max_deviation <= 1e-6);
    assert_eq!(r.checkpoints.len(), 10);
}

#[test]
fn separation_verdicts() {
    let xs = sample_region(&Region::cube(2, -3.0, 3.0), 20, 11, None).unwrap();
    for set in convex_fixtures() {
        let r = separation_convexity_test(&set, &xs, 10, 3).unwrap();
        assert_eq!(r.verdict, ConvexityVerdict::ConsistentWithConvex, "{}", set.variant_name());
    }
    let two = ClosedSetRep::point_cloud(&[&[0.0, 0.0], &[2.0, 0.0]]).unwrap();
    let r = separation_convexity_test(&two, &[point(&[0.5, 1.0])], 2, 3).unwrap();
    assert_eq!(r.verdict, ConvexityVerdict::Nonconvex);
    // ⟨(0.5, 1), (2, 0)⟩ = 1
    assert_eq!(r.witness.unwrap().inner_product, 1.0);
}

#[test]
fn ray_through_zero_is_identity() {
    let set = ClosedSetRep::sphere(&[0.0, 0.0], 1.0).unwrap();
    let r = ray_invariance_check(&set, &point(&[3.0, 4.0]), &[0.0]).unwrap();
    assert!(r.pass);
    let r = ray_invariance_check(&triangle(), &point(&[2.0, 2.0]), &DEFAULT_S_GRID).unwrap();
    assert!(r.pass);
}

fn arb_point() -> impl Strategy<Value = Point> {
    (-4.0f64..4.0, -4.0f64..4.0).prop_map(|(a, b)| point(&[a, b]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn projection_idempotent(x in arb_point()) {
        for set in fixtures() {
            let r = set.project(&x).unwrap();
            for p in &r.nearest {
                prop_assert!(set.distance(p).unwrap() < 1e-12, "{}", set.variant_name());
                prop_assert!(((&x - p).norm() - r.distance).abs() <= 1e-10 * (1.0 + r.distance));
            }
        }
    }

    #[test]
    fn convex_projection_nonexpansive(x in arb_point(), y in arb_point()) {
        for set in convex_fixtures() {
            let px = set.project(&x).unwrap();
            let py = set.project(&y).unwrap();
            prop_assert!(px.unique && py.unique);
            prop_assert!((px.point() - py.point()).norm() <= (&x - &y).norm() * (1.0 + 1e-10));
        }
    }

    #[test]
    fn polytope_projection_is_optimal(x in arb_point()) {
        // no feasible point on a fine grid is closer than the projection
        let set = triangle();
        let d = set.distance(&x).unwrap();
        for i in 0..=20 {
            for j in 0..=(20 - i) {
                let q = point(&[i as f64 / 20.0, j as f64 / 20.0]);
                prop_assert!((&x - q).norm() >= d - 1e-12);
            }
        }
    }
}
