//! The built-in acceptance suite: ten fixed-seed experiments with exact
//! analytic oracles.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use pllab_core::catalogue::{
    graph_residual, half_sq_dist_interval, quadratic_psd, sine, sq_dist_sphere,
};
use pllab_core::certify::{quadratic_growth_check_at, GrowthFactor, DEFAULT_EPS_GROWTH};
use pllab_core::distance::{
    flow_formula_check, regularity_probe, separation_convexity_test, ClosedSetRep,
    ConvexityVerdict, ProbeOptions, RegularityClass,
};
use pllab_core::flow::{decay_check, length_check, retraction_check};
use pllab_core::linalg::SortedEigen;
use pllab_core::minset::{
    build_model, constant_rank_check, hessian_gap_check, kernel_chart_probe, locate_minimizers,
    projection_collision, ModelOptions, DEFAULT_DEDUP_RADIUS,
};
use pllab_core::sampling::{grid, sample_region};
use pllab_core::{integrate_flow, point, BoxBounds, FlowConfig, Point, Region, Result};

use crate::report::{json_bytes, SCHEMA_VERSION};
use crate::tasks::off_set_samples;

pub const SUITE_SEED: u64 = 42;
/// Wall-time budget for the whole suite, determinism rerun included.
pub const TIME_BUDGET: Duration = Duration::from_secs(300);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CriterionInfo {
    pub id: u8,
    pub key: &'static str,
    pub title: &'static str,
}

pub const CRITERIA: [CriterionInfo; 10] = [
    CriterionInfo { id: 1, key: "exponential_decay", title: "f(y_t) - inf f <= exp(-Ct)(f(y_0) - inf f)" },
    CriterionInfo { id: 2, key: "trajectory_length", title: "arclength <= (2/sqrt C) sqrt(f(y_0) - inf f)" },
    CriterionInfo { id: 3, key: "quadratic_growth", title: "f - inf f >= (C/4) dist^2, literal factor C fails" },
    CriterionInfo { id: 4, key: "hessian_gap", title: "Hessian spectrum on argmin in {0} U [C/2, inf), constant rank" },
    CriterionInfo { id: 5, key: "singleton_verdict", title: "C2 PL fields with bounded argmin have one minimizer" },
    CriterionInfo { id: 6, key: "kernel_chart", title: "argmin is a graph over Ker H, tangent to second order" },
    CriterionInfo { id: 7, key: "projection_flow", title: "flow of d_F is proj(x) + exp(-t)(x - proj(x))" },
    CriterionInfo { id: 8, key: "convexity_dichotomy", title: "separation and regularity evidence match convexity" },
    CriterionInfo { id: 9, key: "retraction_bound", title: "|phi_inf(y) - y| <= (2/sqrt C) sqrt(f(y) - inf f)" },
    CriterionInfo { id: 10, key: "determinism", title: "identical reports on rerun, within the time budget" },
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub key: String,
    pub pass: bool,
    pub detail: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub task: String,
    pub seed: u64,
    pub eps_check: f64,
    pub criteria: Vec<CriterionOutcome>,
    pub all_pass: bool,
}

/// Wall times, kept out of the report.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteTiming {
    pub criterion_seconds: Vec<f64>,
    pub total_seconds: f64,
}

fn tight() -> FlowConfig {
    FlowConfig {
        abs_tol: 1e-14,
        ..FlowConfig::default()
    }
}

fn within(v: f64, target: f64, tol: f64) -> bool {
    (v - target).abs() <= tol
}

fn coords(p: &Point) -> Vec<f64> {
    p.iter().copied().collect()
}

fn exponential_decay(eps: f64) -> Result<(bool, Value)> {
    let half_square = quadratic_psd(DMatrix::from_element(1, 1, 0.5))?;
    let traj = integrate_flow(&half_square, &point(&[1.0]), &tight())?;
    let tight_case = decay_check(&traj, 2.0, 0.0, eps);
    let max_ratio = tight_case.max_ratio.unwrap_or(f64::NAN);
    let tight_ok = tight_case.pass && within(max_ratio, 1.0, 1e-6);

    let f = graph_residual(&sine());
    let starts = sample_region(&Region::cube(2, -2.0, 2.0), 20, SUITE_SEED, None)?;
    let runs: Vec<(Vec<f64>, bool, Option<f64>)> = starts
        .par_iter()
        .map(|x0| {
            let traj = integrate_flow(&f, x0, &FlowConfig::default())?;
            let r = decay_check(&traj, 4.0, 0.0, eps);
            Ok((coords(x0), r.pass, r.max_ratio))
        })
        .collect::<Result<_>>()?;
    let graph_ok = runs.iter().all(|r| r.1);
    let worst = runs.iter().filter_map(|r| r.2).fold(0.0, f64::max);
    Ok((
        tight_ok && graph_ok,
        json!({
            "half_square": { "max_ratio": max_ratio, "n_steps": tight_case.n_steps, "pass": tight_ok },
            "graph_residual": { "n_starts": runs.len(), "max_ratio": worst, "pass": graph_ok },
        }),
    ))
}

fn trajectory_length(eps: f64) -> Result<(bool, Value)> {
    let f = quadratic_psd(DMatrix::identity(2, 2) * 0.5)?;
    let x0 = point(&[3.0, 4.0]);
    let traj = integrate_flow(&f, &x0, &tight())?;
    let f0 = f.eval(&x0)?;
    let r = length_check(&traj, 2.0, 0.0, f0, eps);
    let pass = within(traj.arclength, 5.0, 1e-6) && within(traj.arclength, r.bound, 1e-6) && r.pass;
    Ok((
        pass,
        json!({ "arclength": traj.arclength, "bound": r.bound, "chord_length": traj.chord_length, "check": r.pass }),
    ))
}

fn quadratic_growth() -> Result<(bool, Value)> {
    let f = quadratic_psd(DMatrix::from_element(1, 1, 0.25))?;
    let argmin = [point(&[0.0])];
    let pts = sample_region(&Region::cube(1, -2.0, 2.0), 100, SUITE_SEED, None)?;
    let corrected = quadratic_growth_check_at(&f, &pts, 1.0, &argmin, GrowthFactor::Corrected, DEFAULT_EPS_GROWTH)?;
    let literal =
        quadratic_growth_check_at(&f, &[point(&[1.0])], 1.0, &argmin, GrowthFactor::Literal, DEFAULT_EPS_GROWTH)?;
    let pass = corrected.pass && corrected.max_abs_residual <= 1e-12 && !literal.pass;
    Ok((
        pass,
        json!({
            "corrected": { "pass": corrected.pass, "n_points": corrected.n_points, "max_abs_residual": corrected.max_abs_residual },
            "literal": { "pass": literal.pass, "violation": literal.violation },
        }),
    ))
}

/// Minimizers of `(y − sin x)²` from multistart on `[−3, 3]²`.
fn graph_minimizers(n: usize) -> Result<Vec<Point>> {
    let f = graph_residual(&sine());
    let k = locate_minimizers(&f, &Region::cube(2, -3.0, 3.0), 2 * n, &FlowConfig::default(), DEFAULT_DEDUP_RADIUS, SUITE_SEED)?;
    Ok(k.into_iter().take(n).collect())
}

fn hessian_gap() -> Result<(bool, Value)> {
    let f = graph_residual(&sine());
    let k = graph_minimizers(30)?;
    let gap = hessian_gap_check(&f, &k, 4.0)?;
    let rank = constant_rank_check(&f, &k, 4.0)?;
    let spectra_ok = gap
        .eigenvalues
        .iter()
        .flatten()
        .all(|v| v.abs() < 1e-6 || *v >= 2.0 - 1e-6);
    let pass = k.len() == 30 && gap.gap_ok && spectra_ok && rank.common_rank == Some(1);
    Ok((
        pass,
        json!({ "n_points": k.len(), "gap_ok": gap.gap_ok, "spectra_ok": spectra_ok, "common_rank": rank.common_rank }),
    ))
}

fn sphere_region() -> Region {
    // {(|x| − 1)² ≤ 0.2} leaves out the ball of radius 1 − √0.2 ≈ 0.55
    Region::Sublevel {
        threshold: 0.2,
        bounding_box: BoxBounds::cube(2, -1.5, 1.5),
    }
}

fn singleton_verdict() -> Result<(bool, Value)> {
    let q = quadratic_psd(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0])))?;
    let mq = build_model(&q, &Region::cube(2, -1.0, 1.0), 4.0, &ModelOptions::default())?;
    let q_ok = mq.singleton && mq.points.len() == 1 && point(&mq.points[0]).norm() <= 1e-6;

    let interval = half_sq_dist_interval(0.0, 1.0)?;
    let opts = ModelOptions {
        n_starts: 60,
        ..ModelOptions::default()
    };
    let mi = build_model(&interval, &Region::cube(1, -1.0, 2.0), 2.0, &opts)?;
    let i_ok = !mi.singleton
        && mi.component_diameters.len() == 1
        && within(mi.component_diameters[0], 1.0, 0.01)
        && mi.theorem_tension.is_none();

    let sphere = sq_dist_sphere(&[0.0, 0.0], 1.0)?;
    let opts = ModelOptions {
        n_starts: 60,
        r_link: Some(0.5),
        ..ModelOptions::default()
    };
    let ms = build_model(&sphere, &sphere_region(), 4.0, &opts)?;
    let s_ok = !ms.singleton && ms.manifold_dim == Some(1);
    Ok((
        q_ok && i_ok && s_ok,
        json!({
            "quadratic": { "singleton": mq.singleton, "points": mq.points, "pass": q_ok },
            "interval": { "singleton": mi.singleton, "component_diameters": mi.component_diameters, "theorem_tension": mi.theorem_tension, "pass": i_ok },
            "sphere": { "singleton": ms.singleton, "manifold_dim": ms.manifold_dim, "n_components": ms.components.len(), "pass": s_ok },
        }),
    ))
}

fn kernel_chart() -> Result<(bool, Value)> {
    let f = graph_residual(&sine());
    let origin = point(&[0.0, 0.0]);
    let k = graph_minimizers(30)?;
    let chart = kernel_chart_probe(&f, &origin, &k, 0.5, 4.0, DEFAULT_DEDUP_RADIUS)?;
    let kernel = SortedEigen::new(&f.hessian(&origin)?).select(|v| v < 1.0);
    let collision = projection_collision(&k, &origin, &kernel, 0.5, DEFAULT_DEDUP_RADIUS);
    let graph_slope = chart.min_slope.unwrap_or(f64::NAN);

    let sphere = sq_dist_sphere(&[0.0, 0.0], 1.0)?;
    let x = point(&[1.0, 0.0]);
    let sphere_chart = kernel_chart_probe(&sphere, &x, std::slice::from_ref(&x), 0.5, 4.0, DEFAULT_DEDUP_RADIUS)?;
    let sphere_slope = sphere_chart.min_slope.unwrap_or(f64::NAN);
    let pass = graph_slope >= 5.5 && collision.is_none() && sphere_slope >= 3.5;
    Ok((
        pass,
        json!({
            "graph_slope": graph_slope,
            "graph_injective_within_half": collision.is_none(),
            "sphere_slope": sphere_slope,
        }),
    ))
}

fn projection_flow() -> Result<(bool, Value)> {
    let square = ClosedSetRep::boxed(&[0.0, 0.0], &[1.0, 1.0])?;
    let r = flow_formula_check(&square, &point(&[2.0, 2.0]), &FlowConfig::default().with_max_time(10.0))?;
    let pass = r.max_deviation <= 1e-6
        && r.max_projection_drift <= 1e-8
        && r.checkpoints.len() == 10
        && r.final_time >= 10.0;
    Ok((
        pass,
        json!({
            "max_deviation": r.max_deviation,
            "max_projection_drift": r.max_projection_drift,
            "n_checkpoints": r.checkpoints.len(),
            "final_time": r.final_time,
        }),
    ))
}

fn triangle() -> Result<ClosedSetRep> {
    ClosedSetRep::polytope(&[&[-1.0, 0.0], &[0.0, -1.0], &[1.0, 1.0]], &[0.0, 0.0, 1.0], &[0.2, 0.2])
}

fn convexity_dichotomy() -> Result<(bool, Value)> {
    let region = Region::cube(2, -3.0, 3.0);
    let convex = [
        ClosedSetRep::boxed(&[0.0, 0.0], &[1.0, 1.0])?,
        ClosedSetRep::affine(&[0.0, 1.0], &[&[0.6, 0.8]])?,
        triangle()?,
    ];
    let mut convex_ok = true;
    let mut convex_detail = Vec::new();
    for set in &convex {
        let xs = off_set_samples(set, &region, 20, SUITE_SEED)
            .map_err(|e| pllab_core::Error::Sampling(e.to_string()))?;
        let r = separation_convexity_test(set, &xs, 10, SUITE_SEED)?;
        let ok = r.n_pairs == 200
            && r.witness.is_none()
            && r.verdict == ConvexityVerdict::ConsistentWithConvex;
        convex_ok &= ok;
        convex_detail.push(json!({ "set": set.variant_name(), "n_pairs": r.n_pairs, "max_inner_product": r.max_inner_product, "pass": ok }));
    }

    let sphere = ClosedSetRep::sphere(&[0.0, 0.0], 1.0)?;
    let r = separation_convexity_test(&sphere, &[point(&[0.5, 0.0])], 10, SUITE_SEED)?;
    let witness = r.witness.as_ref().map(|w| w.inner_product).unwrap_or(f64::NAN);
    let sphere_ok = r.verdict == ConvexityVerdict::Nonconvex && witness >= 0.5;

    let opts = ProbeOptions::default();
    let line = ClosedSetRep::affine(&[0.0, 0.0], &[&[1.0, 0.0]])?;
    let affine = regularity_probe(&line, &[point(&[0.3, 1.0]), point(&[-2.0, -0.5]), point(&[1.0, 3.0])], &opts)?;
    let square = ClosedSetRep::boxed(&[0.0, 0.0], &[1.0, 1.0])?;
    let boxed = regularity_probe(&square, &[point(&[-0.01, 1.5]), point(&[0.01, 1.5])], &opts)?;
    let regularity_ok = affine.classification == RegularityClass::C2Candidate
        && boxed.classification == RegularityClass::C11Candidate
        && within(boxed.jump_magnitude, 1.0, 0.05);
    Ok((
        convex_ok && sphere_ok && regularity_ok,
        json!({
            "convex_fixtures": convex_detail,
            "sphere": { "witness": r.witness, "pass": sphere_ok },
            "affine_class": affine.classification,
            "box_class": boxed.classification,
            "box_jump": boxed.jump_magnitude,
        }),
    ))
}

fn retraction_bound(eps: f64) -> Result<(bool, Value)> {
    let f = quadratic_psd(DMatrix::identity(2, 2) * 0.5)?;
    let pts = grid(&BoxBounds::cube(2, -1.0, 1.0), 5);
    let r = retraction_check(&f, &pts, &tight(), 2.0, 0.0, eps)?;
    let mut ratios_ok = true;
    let mut origin_ok = false;
    let mut worst: f64 = 0.0;
    for e in &r.entries {
        match e.ratio {
            Some(q) => {
                worst = worst.max((q - 1.0).abs());
                ratios_ok &= within(q, 1.0, 1e-6);
            }
            None => origin_ok = e.fixed_point && e.displacement <= 1e-8,
        }
    }
    Ok((
        r.pass && ratios_ok && origin_ok,
        json!({ "n_points": r.entries.len(), "max_ratio_deviation": worst, "origin_fixed": origin_ok, "check": r.pass }),
    ))
}

fn outcome(info: &CriterionInfo, result: Result<(bool, Value)>) -> CriterionOutcome {
    let (pass, detail) = match result {
        Ok(v) => v,
        Err(e) => (false, json!({ "error": e.to_string() })),
    };
    CriterionOutcome {
        id: info.id,
        key: info.key.to_string(),
        pass,
        detail,
    }
}

/// Runs one of criteria 1–9.
pub fn run_criterion(id: u8, eps: f64) -> CriterionOutcome {
    let info = &CRITERIA[usize::from(id) - 1];
    let result = match id {
        1 => exponential_decay(eps),
        2 => trajectory_length(eps),
        3 => quadratic_growth(),
        4 => hessian_gap(),
        5 => singleton_verdict(),
        6 => kernel_chart(),
        7 => projection_flow(),
        8 => convexity_dichotomy(),
        9 => retraction_bound(eps),
        _ => panic!("criterion {id} is not a single experiment"),
    };
    outcome(info, result)
}

fn run_experiments(eps: f64) -> (Vec<CriterionOutcome>, Vec<f64>) {
    (1..=9u8)
        .into_par_iter()
        .map(|id| {
            let start = Instant::now();
            let o = run_criterion(id, eps);
            (o, start.elapsed().as_secs_f64())
        })
        .unzip()
}

/// Runs every criterion. The determinism criterion repeats criteria 1–9
/// and compares the serialized outcomes byte for byte.
pub fn run_suite(eps: f64) -> (SuiteReport, SuiteTiming) {
    let start = Instant::now();
    let (mut criteria, criterion_seconds) = run_experiments(eps);
    let (again, _) = run_experiments(eps);
    let identical = json_bytes(&criteria) == json_bytes(&again);
    let in_budget = start.elapsed() < TIME_BUDGET;
    criteria.push(CriterionOutcome {
        id: 10,
        key: CRITERIA[9].key.to_string(),
        pass: identical && in_budget,
        detail: json!({ "identical_rerun": identical, "within_time_budget": in_budget }),
    });
    let all_pass = criteria.iter().all(|c| c.pass);
    let report = SuiteReport {
        schema_version: SCHEMA_VERSION,
        task: "suite".into(),
        seed: SUITE_SEED,
        eps_check: eps,
        criteria,
        all_pass,
    };
    let timing = SuiteTiming {
        criterion_seconds,
        total_seconds: start.elapsed().as_secs_f64(),
    };
    (report, timing)
}

/// `PASS C1 exponential_decay: ...` lines, one per criterion.
pub fn summary_lines(report: &SuiteReport) -> Vec<String> {
    report
        .criteria
        .iter()
        .map(|c| {
            let info = &CRITERIA[usize::from(c.id) - 1];
            format!(
                "{} C{} {}: {}",
                if c.pass { "PASS" } else { "FAIL" },
                c.id,
                c.key,
                info.title
            )
        })
        .collect()
}

pub fn list_lines() -> Vec<String> {
    CRITERIA
        .iter()
        .map(|c| format!("C{} {}: {}", c.id, c.key, c.title))
        .collect()
}
