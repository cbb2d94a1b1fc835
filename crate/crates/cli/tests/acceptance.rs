//! Acceptance criteria 1-10, each against an analytic oracle computed here.
//! Prints one PASS/FAIL line per criterion and exits nonzero on any failure.

use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use pllab_core::catalogue::{
    graph_residual, half_sq_dist_interval, quadratic_psd, sine, sq_dist_sphere,
};
use pllab_core::certify::{quadratic_growth_check_at, GrowthFactor, DEFAULT_EPS_GROWTH};
use pllab_core::distance::{
    dist_sq_field, flow_formula_check, regularity_probe, separation_convexity_test, ClosedSetRep,
    ConvexityVerdict, ProbeOptions, RegularityClass,
};
use pllab_core::flow::{retraction_check, DEFAULT_EPS_CHECK};
use pllab_core::linalg::SortedEigen;
use pllab_core::minset::{
    build_model, constant_rank_check, hessian_gap_check, kernel_chart_probe, locate_minimizers,
    projection_collision, ModelOptions,
};
use pllab_core::sampling::{grid, sample_region};
use pllab_core::{integrate_flow, point, BoxBounds, FlowConfig, Point, Region};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn tight() -> FlowConfig {
    FlowConfig {
        abs_tol: 1e-14,
        ..FlowConfig::default()
    }
}

fn e<E: std::fmt::Display>(x: E) -> String {
    x.to_string()
}

fn c1_exponential_decay() -> Outcome {
    // f = x²/2 from 1: f(y_t) = e^{-2t}/2 exactly
    let f = quadratic_psd(DMatrix::from_element(1, 1, 0.5)).map_err(e)?;
    let traj = integrate_flow(&f, &point(&[1.0]), &tight()).map_err(e)?;
    let f0 = traj.f_values[0];
    let max_ratio = traj
        .times
        .iter()
        .zip(&traj.f_values)
        .map(|(t, v)| v * (2.0 * t).exp() / f0)
        .fold(0.0, f64::max);
    ensure((max_ratio - 1.0).abs() <= 1e-6, format!("tight ratio {max_ratio}"))?;

    let g = graph_residual(&sine());
    let starts = sample_region(&Region::cube(2, -2.0, 2.0), 20, 42, None).map_err(e)?;
    let mut worst: f64 = 0.0;
    for x0 in &starts {
        let traj = integrate_flow(&g, x0, &FlowConfig::default()).map_err(e)?;
        let g0 = (x0[1] - x0[0].sin()).powi(2);
        for (t, y) in traj.times.iter().zip(&traj.states) {
            let gy = (y[1] - y[0].sin()).powi(2);
            let bound = (-4.0 * t).exp() * g0;
            ensure(gy <= bound * (1.0 + 1e-6), format!("graph start {x0:?} at t={t}"))?;
            if bound > 0.0 {
                worst = worst.max(gy / bound);
            }
        }
    }
    Ok(format!("tight max ratio {max_ratio:.9}, graph max ratio {worst:.6} over {} starts", starts.len()))
}

fn c2_trajectory_length() -> Outcome {
    // straight ray to the origin: length |x0| = 5 = (2/√2)·√(25/2)
    let f = quadratic_psd(DMatrix::identity(2, 2) * 0.5).map_err(e)?;
    let x0 = point(&[3.0, 4.0]);
    let traj = integrate_flow(&f, &x0, &tight()).map_err(e)?;
    let bound = 2.0 / 2f64.sqrt() * (0.5 * x0.norm_squared()).sqrt();
    ensure((traj.arclength - 5.0).abs() <= 1e-6, format!("arclength {}", traj.arclength))?;
    ensure((traj.arclength - bound).abs() <= 1e-6, format!("bound {bound}"))?;
    Ok(format!("arclength {:.9}, bound {bound}", traj.arclength))
}

fn c3_quadratic_growth() -> Outcome {
    let f = quadratic_psd(DMatrix::from_element(1, 1, 0.25)).map_err(e)?;
    let argmin = [point(&[0.0])];
    let pts = sample_region(&Region::cube(1, -2.0, 2.0), 100, 42, None).map_err(e)?;
    let corrected = quadratic_growth_check_at(&f, &pts, 1.0, &argmin, GrowthFactor::Corrected, DEFAULT_EPS_GROWTH)
        .map_err(e)?;
    ensure(corrected.pass, "corrected factor rejected")?;
    // oracle: f(x) = x²/4 = (C/4)·dist² with C = 1
    let residual = pts
        .iter()
        .map(|x| (f.eval(x).unwrap() - 0.25 * x[0] * x[0]).abs())
        .fold(0.0, f64::max);
    ensure(residual <= 1e-12 && corrected.max_abs_residual <= 1e-12, "equality residual")?;
    let literal = quadratic_growth_check_at(&f, &[point(&[1.0])], 1.0, &argmin, GrowthFactor::Literal, DEFAULT_EPS_GROWTH)
        .map_err(e)?;
    ensure(!literal.pass, "literal factor accepted at x = 1")?;
    let v = literal.violation.ok_or("no violation recorded")?;
    ensure(v.f_gap == 0.25 && v.required == 1.0, "violation values")?;
    Ok(format!("100 points, residual {:.1e}; literal check fails at x=1 (1/4 < 1)", corrected.max_abs_residual))
}

fn graph_minimizers() -> Result<Vec<Point>, String> {
    let f = graph_residual(&sine());
    let k = locate_minimizers(&f, &Region::cube(2, -3.0, 3.0), 60, &FlowConfig::default(), 1e-5, 42).map_err(e)?;
    ensure(k.len() >= 30, format!("only {} minimizers", k.len()))?;
    Ok(k.into_iter().take(30).collect())
}

fn c4_hessian_gap() -> Outcome {
    let f = graph_residual(&sine());
    let k = graph_minimizers()?;
    let gap = hessian_gap_check(&f, &k, 4.0).map_err(e)?;
    ensure(gap.gap_ok, format!("{:?}", gap.failures))?;
    for (p, ev) in k.iter().zip(&gap.eigenvalues) {
        // on y = sin x the Hessian is 2·[cos²x, −cos x; −cos x, 1]: eigenvalues 0 and 2(1 + cos²x)
        let top = 2.0 * (1.0 + p[0].cos().powi(2));
        for v in ev {
            ensure(v.abs() < 1e-6 || *v >= 2.0 - 1e-6, format!("eigenvalue {v} at {p:?}"))?;
        }
        ensure((ev[1] - top).abs() < 1e-5, format!("top eigenvalue {} vs {top}", ev[1]))?;
    }
    let rank = constant_rank_check(&f, &k, 4.0).map_err(e)?;
    ensure(rank.common_rank == Some(1), format!("ranks {:?}", rank.ranks))?;
    Ok("30 minimizers, spectra in {0} U [2, inf), rank 1".into())
}

fn c5_singleton_verdict() -> Outcome {
    let q = quadratic_psd(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]))).map_err(e)?;
    let m = build_model(&q, &Region::cube(2, -1.0, 1.0), 4.0, &ModelOptions::default()).map_err(e)?;
    ensure(m.singleton && m.points.len() == 1, "diag(1,3) not a singleton")?;
    ensure(point(&m.points[0]).norm() <= 1e-6, "minimizer away from origin")?;

    let interval = half_sq_dist_interval(0.0, 1.0).map_err(e)?;
    let opts = ModelOptions {
        n_starts: 60,
        ..ModelOptions::default()
    };
    let mi = build_model(&interval, &Region::cube(1, -1.0, 2.0), 2.0, &opts).map_err(e)?;
    ensure(!mi.singleton && mi.components.len() == 1, "interval verdict")?;
    let d = mi.component_diameters[0];
    ensure((0.99..=1.01).contains(&d), format!("interval diameter {d}"))?;
    ensure(mi.theorem_tension.is_none(), "tension on a C11 field")?;

    let sphere = sq_dist_sphere(&[0.0, 0.0], 1.0).map_err(e)?;
    let region = Region::Sublevel {
        threshold: 0.2,
        bounding_box: BoxBounds::cube(2, -1.5, 1.5),
    };
    let opts = ModelOptions {
        n_starts: 60,
        r_link: Some(0.5),
        ..ModelOptions::default()
    };
    let ms = build_model(&sphere, &region, 4.0, &opts).map_err(e)?;
    ensure(!ms.singleton && ms.manifold_dim == Some(1), "sphere verdict")?;
    Ok(format!("diag(1,3) singleton; interval diameter {d:.4}; circle dim 1"))
}

/// Least-squares slope of log f(x + t u) against log t over t = 1e-2 / 2^k.
fn oracle_slope(f: &dyn Fn(f64) -> f64) -> f64 {
    let pts: Vec<(f64, f64)> = (0..8)
        .map(|k| {
            let t = 1e-2 / 2f64.powi(k);
            (t.ln(), f(t).ln())
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn c6_kernel_chart() -> Outcome {
    let f = graph_residual(&sine());
    let origin = point(&[0.0, 0.0]);
    let k = graph_minimizers()?;
    let chart = kernel_chart_probe(&f, &origin, &k, 0.5, 4.0, 1e-5).map_err(e)?;
    let slope = chart.min_slope.ok_or("no graph slope")?;
    ensure(slope >= 5.5, format!("graph slope {slope}"))?;
    // kernel at the origin is (1,1)/√2; (t/√2 − sin(t/√2))² ~ t⁶/72
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let oracle = oracle_slope(&|t| (t * s - (t * s).sin()).powi(2));
    ensure((slope - oracle).abs() < 0.05, format!("slope {slope} vs oracle {oracle}"))?;
    let kernel = SortedEigen::new(&f.hessian(&origin).map_err(e)?).select(|v| v < 1.0);
    ensure(
        projection_collision(&k, &origin, &kernel, 0.5, 1e-5).is_none(),
        "projection not injective within 0.5",
    )?;

    let sphere = sq_dist_sphere(&[0.0, 0.0], 1.0).map_err(e)?;
    let x = point(&[1.0, 0.0]);
    let sc = kernel_chart_probe(&sphere, &x, std::slice::from_ref(&x), 0.5, 4.0, 1e-5).map_err(e)?;
    let ss = sc.min_slope.ok_or("no sphere slope")?;
    // (√(1 + t²) − 1)² ~ t⁴/4
    let so = oracle_slope(&|t| ((1.0 + t * t).sqrt() - 1.0).powi(2));
    ensure(ss >= 3.5 && (ss - so).abs() < 0.05, format!("sphere slope {ss} vs {so}"))?;
    Ok(format!("graph slope {slope:.4}, sphere slope {ss:.4}, injective within 0.5"))
}

fn c7_projection_flow() -> Outcome {
    let square = ClosedSetRep::boxed(&[0.0, 0.0], &[1.0, 1.0]).map_err(e)?;
    let x = point(&[2.0, 2.0]);
    let cfg = FlowConfig::default().with_max_time(10.0);
    let r = flow_formula_check(&square, &x, &cfg).map_err(e)?;
    ensure(r.max_deviation <= 1e-6, format!("deviation {}", r.max_deviation))?;
    ensure(r.checkpoints.len() == 10 && r.max_projection_drift <= 1e-8, "re-projection drift")?;
    // oracle: (1,1) + e^{-t}(1,1) on [0, 10]
    let traj = integrate_flow(&dist_sq_field(&square).map_err(e)?, &x, &cfg).map_err(e)?;
    ensure(traj.final_time() >= 10.0, "flow stopped early")?;
    let own = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(t, y)| (y - point(&[1.0 + (-t).exp(), 1.0 + (-t).exp()])).norm())
        .fold(0.0, f64::max);
    ensure(own <= 1e-6, format!("oracle deviation {own}"))?;
    for c in &r.checkpoints {
        let p = square.project(&point(&c.state)).map_err(e)?;
        ensure((p.point() - point(&[1.0, 1.0])).norm() <= 1e-8, "checkpoint projection")?;
    }
    Ok(format!("max deviation {own:.2e} over t in [0, 10]"))
}

fn c8_convexity_dichotomy() -> Outcome {
    let convex = [
        ClosedSetRep::boxed(&[0.0, 0.0], &[1.0, 1.0]).map_err(e)?,
        ClosedSetRep::affine(&[0.0, 1.0], &[&[0.6, 0.8]]).map_err(e)?,
        ClosedSetRep::polytope(&[&[-1.0, 0.0], &[0.0, -1.0], &[1.0, 1.0]], &[0.0, 0.0, 1.0], &[0.2, 0.2])
            .map_err(e)?,
    ];
    for set in &convex {
        let xs: Vec<Point> = sample_region(&Region::cube(2, -3.0, 3.0), 60, 42, None)
            .map_err(e)?
            .into_iter()
            .filter(|x| set.distance(x).unwrap() > 1e-6)
            .take(20)
            .collect();
        let r = separation_convexity_test(set, &xs, 10, 42).map_err(e)?;
        ensure(r.n_pairs == 200, format!("{}: {} pairs", set.variant_name(), r.n_pairs))?;
        ensure(
            r.witness.is_none() && r.verdict == ConvexityVerdict::ConsistentWithConvex,
            format!("{}: spurious witness", set.variant_name()),
        )?;
    }

    let sphere = ClosedSetRep::sphere(&[0.0, 0.0], 1.0).map_err(e)?;
    let x = point(&[0.5, 0.0]);
    let r = separation_convexity_test(&sphere, std::slice::from_ref(&x), 10, 42).map_err(e)?;
    let w = r.witness.ok_or("no witness on the sphere")?;
    ensure(w.inner_product >= 0.5, format!("witness {}", w.inner_product))?;
    // oracle: proj (1,0), y = (−1,0): ⟨(−0.5,0), (−2,0)⟩ = 1
    let p = sphere.project(&x).map_err(e)?;
    let oracle = (&x - p.point()).dot(&(point(&[-1.0, 0.0]) - p.point()));
    ensure((oracle - 1.0).abs() < 1e-12, "analytic witness")?;

    let opts = ProbeOptions::default();
    let line = ClosedSetRep::affine(&[0.0, 0.0], &[&[1.0, 0.0]]).map_err(e)?;
    let affine = regularity_probe(&line, &[point(&[0.3, 1.0]), point(&[-2.0, -0.5]), point(&[1.0, 3.0])], &opts)
        .map_err(e)?;
    ensure(affine.classification == RegularityClass::C2Candidate, "affine class")?;
    let square = ClosedSetRep::boxed(&[0.0, 0.0], &[1.0, 1.0]).map_err(e)?;
    let boxed = regularity_probe(&square, &[point(&[-0.01, 1.5]), point(&[0.01, 1.5])], &opts).map_err(e)?;
    ensure(boxed.classification == RegularityClass::C11Candidate, "box class")?;
    // Hessian of ½dist² is diag(1, 1) left of x = 0 and diag(0, 1) above the top edge
    ensure((boxed.jump_magnitude - 1.0).abs() <= 0.05, format!("jump {}", boxed.jump_magnitude))?;
    Ok(format!("3 convex fixtures clean over 200 pairs; sphere witness {:.3}; jump {:.4}", w.inner_product, boxed.jump_magnitude))
}

fn c9_retraction_bound() -> Outcome {
    let f = quadratic_psd(DMatrix::identity(2, 2) * 0.5).map_err(e)?;
    let pts = grid(&BoxBounds::cube(2, -1.0, 1.0), 5);
    let r = retraction_check(&f, &pts, &tight(), 2.0, 0.0, DEFAULT_EPS_CHECK).map_err(e)?;
    ensure(r.pass, "retraction check failed")?;
    for (y, entry) in pts.iter().zip(&r.entries) {
        // φ_∞ = 0, so the displacement |y| meets the bound (2/√2)·√(|y|²/2) = |y|
        if y.norm() == 0.0 {
            ensure(entry.displacement <= 1e-8, "origin moved")?;
        } else {
            let ratio = entry.displacement / y.norm();
            ensure((ratio - 1.0).abs() <= 1e-6, format!("ratio {ratio} at {y:?}"))?;
        }
    }
    Ok("25 grid points at ratio 1, origin fixed".into())
}

fn c10_determinism() -> Outcome {
    let tmp = std::env::temp_dir().join(format!("pllab-acceptance-{}", std::process::id()));
    let start = Instant::now();
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_pllab"))
            .args(["suite", "--out"])
            .arg(&out)
            .output()
            .map_err(e)?;
        ensure(status.status.code() == Some(0), format!("suite exit {:?}", status.status.code()))?;
        reports.push(std::fs::read(out.join("report.json")).map_err(e)?);
    }
    let elapsed = start.elapsed();
    let _ = std::fs::remove_dir_all(&tmp);
    ensure(reports[0] == reports[1], "report.json differs between runs")?;
    ensure(elapsed < Duration::from_secs(300), format!("took {elapsed:?}"))?;
    Ok(format!("byte-identical reports, two suite runs in {:.2}s", elapsed.as_secs_f64()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("C1 exponential decay", c1_exponential_decay),
        ("C2 trajectory length", c2_trajectory_length),
        ("C3 quadratic growth", c3_quadratic_growth),
        ("C4 Hessian gap", c4_hessian_gap),
        ("C5 singleton verdict", c5_singleton_verdict),
        ("C6 kernel chart", c6_kernel_chart),
        ("C7 projection flow", c7_projection_flow),
        ("C8 convexity dichotomy", c8_convexity_dichotomy),
        ("C9 retraction bound", c9_retraction_bound),
        ("C10 determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        match run() {
            Ok(msg) => println!("PASS {name}: {msg} ({:.2}s)", start.elapsed().as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
