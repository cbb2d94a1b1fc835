//! Task runners: each turns a validated config into a report and any
//! auxiliary files in the output directory.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde_json::json;

use pllab_core::certify::{check_pl_claim, estimate_pl_constant, quadratic_growth_check, quadratic_growth_check_at};
use pllab_core::distance::{
    flow_formula_check, ray_invariance_check, regularity_probe, separation_convexity_test,
    ConvexityVerdict, MIN_OFFSET,
};
use pllab_core::flow::{decay_check, length_check, retraction_check};
use pllab_core::minset::{build_model, kernel_chart_probe, locate_minimizers, ModelOptions};
use pllab_core::sampling::{grid, sample_region};
use pllab_core::{integrate_flow, point, Error, Point, Region, ScalarField};

use crate::config::{
    CertifyParams, DistfieldParams, ExperimentConfig, FlowParams, GrowthParams, MinsetParams,
    TaskParams,
};
use crate::error::CliError;
use crate::report::{Check, Report};

fn points(raw: &[Vec<f64>], dim: usize, key: &str) -> Result<Vec<Point>, CliError> {
    raw.iter()
        .enumerate()
        .map(|(i, p)| {
            if p.len() != dim {
                Err(CliError::Config(format!(
                    "key `task_params.{key}[{i}]`: expected {dim} coordinates, got {}",
                    p.len()
                )))
            } else {
                Ok(point(p))
            }
        })
        .collect()
}

fn require_region<'a>(cfg: &'a ExperimentConfig, why: &str) -> Result<&'a Region, CliError> {
    cfg.region
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("key `region`: required {why}")))
}

fn check_region_dim(region: &Region, dim: usize) -> Result<(), CliError> {
    if region.dim() != dim {
        return Err(CliError::Config(format!(
            "key `region`: dimension {} does not match the field dimension {dim}",
            region.dim()
        )));
    }
    Ok(())
}

fn constant(given: Option<f64>, f: &ScalarField, key: &str) -> Result<f64, CliError> {
    let c = given.or(f.known_pl_constant()).ok_or_else(|| {
        CliError::Config(format!(
            "key `task_params.{key}`: the field has no known PL constant; give one"
        ))
    })?;
    if !(c > 0.0) || !c.is_finite() {
        return Err(CliError::Config(format!("key `task_params.{key}`: must be positive")));
    }
    Ok(c)
}

fn infimum(given: Option<f64>, f: &ScalarField) -> Result<f64, CliError> {
    given.or(f.known_inf()).ok_or_else(|| {
        CliError::Config("key `task_params.inf_f`: the field has no known infimum; give one".into())
    })
}

/// Runs the configured task and writes its auxiliary files into `out`.
/// The report itself is written by the caller.
pub fn run_task(cfg: &ExperimentConfig, out: &Path) -> Result<Report, CliError> {
    let eps = cfg.eps_check();
    match &cfg.params {
        TaskParams::Flow(p) => run_flow(cfg, p, eps, out),
        TaskParams::Certify(p) => run_certify(cfg, p, eps),
        TaskParams::Growth(p) => run_growth(cfg, p, eps),
        TaskParams::Minset(p) => run_minset(cfg, p, eps),
        TaskParams::Distfield(p) => run_distfield(cfg, p, eps),
        TaskParams::Suite(_) => unreachable!("the suite task is dispatched separately"),
    }
}

fn field(cfg: &ExperimentConfig) -> Result<ScalarField, CliError> {
    let spec = cfg
        .field_spec
        .as_ref()
        .ok_or_else(|| CliError::Config("key `field_spec`: required".into()))?;
    spec.build().map_err(|e| CliError::Config(format!("key `field_spec`: {e}")))
}

fn run_flow(cfg: &ExperimentConfig, p: &FlowParams, eps: f64, out: &Path) -> Result<Report, CliError> {
    let f = field(cfg)?;
    let c = constant(p.c, &f, "c")?;
    let inf_f = infimum(p.inf_f, &f)?;
    if p.starts.is_empty() {
        return Err(CliError::Config("key `task_params.starts`: needs at least one point".into()));
    }
    p.integrator
        .validate()
        .map_err(|e| CliError::Config(format!("key `task_params.integrator`: {e}")))?;
    let starts = points(&p.starts, f.dim(), "starts")?;
    let integrator = p.integrator.clone().with_inf(p.integrator.inf_f.unwrap_or(inf_f));
    let mut report = Report::new("flow", Some(f.name().to_string()), cfg.seed, eps);
    let mut summaries = Vec::new();
    std::fs::create_dir_all(out)?;
    for (i, x0) in starts.iter().enumerate() {
        let traj = integrate_flow(&f, x0, &integrator)?;
        let f0 = traj.f_values[0];
        let decay = decay_check(&traj, c, inf_f, eps);
        let length = length_check(&traj, c, inf_f, f0, eps);
        report.check(Check::new(format!("decay[{i}]"), decay.pass, &decay));
        report.check(Check::new(format!("length[{i}]"), length.pass, &length));
        summaries.push(json!({
            "x0": p.starts[i],
            "terminal": traj.terminal.iter().copied().collect::<Vec<f64>>(),
            "final_time": traj.final_time(),
            "n_steps": traj.len(),
            "converged": traj.converged,
            "stop_reason": traj.stop_reason.to_string(),
            "arclength": traj.arclength,
            "chord_length": traj.chord_length,
        }));
        if p.write_csv {
            let file = File::create(out.join(format!("trajectory_{i:03}.csv")))?;
            traj.write_csv(BufWriter::new(file))?;
        }
    }
    report.estimate("c", c);
    report.estimate("inf_f", inf_f);
    report.estimate("trajectories", summaries);
    if let Some(per_axis) = p.retraction_grid {
        let region = require_region(cfg, "for `task_params.retraction_grid`")?;
        check_region_dim(region, f.dim())?;
        let pts = grid(&region.bounding_box(), per_axis);
        let r = retraction_check(&f, &pts, &integrator, c, inf_f, eps)?;
        report.check(Check::new("retraction", r.pass, &r));
    }
    Ok(report)
}

fn run_certify(cfg: &ExperimentConfig, p: &CertifyParams, eps: f64) -> Result<Report, CliError> {
    let f = field(cfg)?;
    let region = require_region(cfg, "for certify")?;
    check_region_dim(region, f.dim())?;
    let inf_f = infimum(p.inf_f, &f)?;
    let mut report = Report::new("certify", Some(f.name().to_string()), cfg.seed, eps);
    match p.claimed_c {
        Some(c) => {
            let r = check_pl_claim(&f, region, c, p.n_samples, inf_f, cfg.seed, eps)?;
            report.estimate("c_hat", r.c_hat);
            report.estimate("c_hat_label", &r.c_hat_label);
            report.estimate("c_hat_point", &r.c_hat_point);
            report.check(Check::new("pl_claim", r.pass == Some(true), &r));
        }
        None => {
            let r = estimate_pl_constant(&f, region, p.n_samples, inf_f, cfg.seed)?;
            report.estimate("c_hat", r.c_hat);
            report.estimate("c_hat_label", &r.c_hat_label);
            report.estimate("estimate", &r);
        }
    }
    if let Some(k) = f.known_pl_constant() {
        report.estimate("known_pl_constant", k);
    }
    Ok(report)
}

fn run_growth(cfg: &ExperimentConfig, p: &GrowthParams, eps: f64) -> Result<Report, CliError> {
    let f = field(cfg)?;
    let c = constant(p.c, &f, "c")?;
    let mut report = Report::new("growth", Some(f.name().to_string()), cfg.seed, eps);
    let argmin = match &p.argmin_points {
        Some(raw) => points(raw, f.dim(), "argmin_points")?,
        None => {
            let region = require_region(cfg, "to locate the minimizing set")?;
            check_region_dim(region, f.dim())?;
            let k = locate_minimizers(&f, region, p.n_starts, &p.integrator, 1e-5, cfg.seed)?;
            report.estimate("located_argmin_points", k.len());
            k
        }
    };
    let r = match &p.points {
        Some(raw) => {
            let pts = points(raw, f.dim(), "points")?;
            quadratic_growth_check_at(&f, &pts, c, &argmin, p.factor, p.eps_growth)?
        }
        None => {
            let region = require_region(cfg, "to sample growth points")?;
            check_region_dim(region, f.dim())?;
            quadratic_growth_check(&f, region, c, &argmin, p.n_samples, cfg.seed, p.factor, p.eps_growth)?
        }
    };
    report.estimate("min_ratio", r.min_ratio);
    report.check(Check::new("quadratic_growth", r.pass, &r));
    Ok(report)
}

fn run_minset(cfg: &ExperimentConfig, p: &MinsetParams, eps: f64) -> Result<Report, CliError> {
    let f = field(cfg)?;
    let region = require_region(cfg, "for minset")?;
    check_region_dim(region, f.dim())?;
    let c = constant(p.c, &f, "c")?;
    let opts = ModelOptions {
        n_starts: p.n_starts,
        dedup_radius: p.dedup_radius,
        r_link: p.r_link,
        seed: cfg.seed,
        flow: p.integrator.clone(),
    };
    let model = build_model(&f, region, c, &opts)?;
    let mut report = Report::new("minset", Some(f.name().to_string()), cfg.seed, eps);
    report.check(Check::new(
        "hessian_gap",
        model.gap_ok,
        json!({ "eigenvalues": model.eigenvalues, "gap": [c / 4.0, c / 2.0] }),
    ));
    report.check(Check::new(
        "constant_rank",
        model.constant_rank,
        json!({ "ranks": model.ranks, "threshold": model.rank_threshold }),
    ));
    report.check(Check::new(
        "singleton_consistency",
        model.theorem_tension.is_none(),
        json!({
            "singleton": model.singleton,
            "singleton_expected": model.singleton_expected,
            "theorem_tension": model.theorem_tension,
        }),
    ));
    let kset: Vec<Point> = model.points.iter().map(|q| point(q)).collect();
    let mut empty_kernel = Vec::new();
    for (i, x) in points(&p.chart_points, f.dim(), "chart_points")?.iter().enumerate() {
        match kernel_chart_probe(&f, x, &kset, p.chart_radius, c, p.dedup_radius) {
            Ok(chart) => report.check(Check::new(format!("kernel_chart[{i}]"), chart.pass, &chart)),
            Err(Error::KernelEmpty) => empty_kernel.push(i),
            Err(e) => return Err(e.into()),
        }
    }
    if !empty_kernel.is_empty() {
        report.estimate("chart_points_with_empty_kernel", empty_kernel);
    }
    report.estimate("model", &model);
    Ok(report)
}

fn run_distfield(cfg: &ExperimentConfig, p: &DistfieldParams, eps: f64) -> Result<Report, CliError> {
    let set = &p.set;
    set.validate()
        .map_err(|e| CliError::Config(format!("key `task_params.set`: {e}")))?;
    let dim = set.dim();
    let mut report = Report::new("distfield", Some(set.variant_name().to_string()), cfg.seed, eps);
    report.estimate("convex", set.is_convex());

    for (i, x) in points(&p.flow_points, dim, "flow_points")?.iter().enumerate() {
        let r = flow_formula_check(set, x, &p.integrator)?;
        report.check(Check::new(format!("projection_flow[{i}]"), r.pass, &r));
    }

    let mut rays = Vec::new();
    for (i, x) in points(&p.ray_points, dim, "ray_points")?.iter().enumerate() {
        let r = ray_invariance_check(set, x, &p.s_grid)?;
        // rays fail only off convex sets; there the failure is evidence
        if set.is_convex() {
            report.check(Check::new(format!("ray_invariance[{i}]"), r.pass, &r));
        } else {
            rays.push(r);
        }
    }
    if !rays.is_empty() {
        report.estimate("ray_invariance", rays);
    }

    if let Some(sep) = &p.separation {
        let region = require_region(cfg, "for `task_params.separation`")?;
        check_region_dim(region, dim)?;
        let xs = off_set_samples(set, region, sep.x_samples, cfg.seed)?;
        let r = separation_convexity_test(set, &xs, sep.y_per_x, cfg.seed)?;
        let expected = if set.is_convex() {
            ConvexityVerdict::ConsistentWithConvex
        } else {
            ConvexityVerdict::Nonconvex
        };
        report.check(Check::new(
            "convexity_dichotomy",
            r.verdict == expected,
            json!({ "expected": expected, "report": r }),
        ));
    }

    if !p.probes.is_empty() {
        let probes = points(&p.probes, dim, "probes")?;
        let r = regularity_probe(set, &probes, &p.probe_options)?;
        report.check(Check::new("regularity", r.matches_expectation, &r));
    }
    Ok(report)
}

/// First `n` low-discrepancy points of `region` lying off `set`.
pub fn off_set_samples(
    set: &pllab_core::distance::ClosedSetRep,
    region: &Region,
    n: usize,
    seed: u64,
) -> Result<Vec<Point>, CliError> {
    let mut draw = n.max(1);
    for _ in 0..8 {
        let xs: Vec<Point> = sample_region(region, draw, seed, None)?
            .into_iter()
            .filter(|x| set.distance(x).is_ok_and(|d| d > MIN_OFFSET))
            .take(n)
            .collect();
        if xs.len() == n {
            return Ok(xs);
        }
        draw *= 2;
    }
    Err(CliError::Config(
        "key `region`: too few sample points lie off the set".into(),
    ))
}
