use nalgebra::DMatrix;
use pllab_core::catalogue::{graph_residual, quadratic_psd, sine};
use pllab_core::flow::{decay_check, length_check, retraction_check, DEFAULT_EPS_CHECK};
use pllab_core::sampling::{grid, sample_region};
use pllab_core::{integrate_flow, point, BoxBounds, FlowConfig, Region};
use proptest::prelude::*;

fn tight() -> FlowConfig {
    FlowConfig {
        abs_tol: 1e-14,
        ..FlowConfig::default()
    }
}

#[test]
fn half_square_decay_is_tight() {
    let f = quadratic_psd(DMatrix::from_element(1, 1, 0.5)).unwrap();
    let traj = integrate_flow(&f, &point(&[1.0]), &tight()).unwrap();
    let r = decay_check(&traj, 2.0, 0.0, DEFAULT_EPS_CHECK);
    assert!(r.pass);
    // closed form y(t) = e^{-t}
    for (t, y) in traj.times.iter().zip(&traj.states) {
        assert!((y[0] - (-t).exp()).abs() <= 1e-7 * (-t).exp() + 1e-15);
    }
}

#[test]
fn straight_line_length_equals_bound() {
    let f = quadratic_psd(DMatrix::identity(2, 2) * 0.5).unwrap();
    let x0 = point(&[3.0, 4.0]);
    let traj = integrate_flow(&f, &x0, &tight()).unwrap();
    let r = length_check(&traj, 2.0, 0.0, 12.5, DEFAULT_EPS_CHECK);
    assert!((traj.arclength - 5.0).abs() < 1e-6, "{}", traj.arclength);
    assert!((r.bound - 5.0).abs() < 1e-12);
    assert!(r.pass);
}

#[test]
fn graph_residual_decay_from_many_starts() {
    let f = graph_residual(&sine());
    let starts = sample_region(&Region::cube(2, -2.0, 2.0), 20, 42, None).unwrap();
    for x0 in starts {
        let traj = integrate_flow(&f, &x0, &FlowConfig::default()).unwrap();
        assert!(traj.converged);
        let r = decay_check(&traj, 4.0, 0.0, DEFAULT_EPS_CHECK);
        assert!(r.pass, "{x0:?}: {:?}", r.violation);
        let f0 = f.eval(&x0).unwrap();
        assert!(length_check(&traj, 4.0, 0.0, f0, DEFAULT_EPS_CHECK).pass);
    }
}

#[test]
fn retraction_on_grid() {
    let f = quadratic_psd(DMatrix::identity(2, 2) * 0.5).unwrap();
    let pts = grid(&BoxBounds::cube(2, -1.0, 1.0), 5);
    let r = retraction_check(&f, &pts, &tight(), 2.0, 0.0, DEFAULT_EPS_CHECK).unwrap();
    assert!(r.pass);
    for e in &r.entries {
        match e.ratio {
            Some(q) => assert!((q - 1.0).abs() < 1e-6, "{e:?}"),
            None => assert!(e.fixed_point && e.displacement <= 1e-8),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn quadratic_flow_obeys_bounds(
        a in 0.1f64..3.0,
        b in 0.1f64..3.0,
        x in -2.0f64..2.0,
        y in -2.0f64..2.0,
    ) {
        let f = quadratic_psd(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![a, b]))).unwrap();
        let c = f.known_pl_constant().unwrap();
        let x0 = point(&[x, y]);
        let traj = integrate_flow(&f, &x0, &tight()).unwrap();
        prop_assert!(decay_check(&traj, c, 0.0, DEFAULT_EPS_CHECK).pass);
        let f0 = f.eval(&x0).unwrap();
        prop_assert!(length_check(&traj, c, 0.0, f0, DEFAULT_EPS_CHECK).pass);
        for w in traj.f_values.windows(2) {
            prop_assert!(w[1] <= w[0] + 10.0 * 1e-8 * (f0 + 1e-14));
        }
        // arclength never below the chord from start to end
        prop_assert!(traj.arclength >= (&traj.terminal - &x0).norm() * (1.0 - 1e-9));
    }
}
