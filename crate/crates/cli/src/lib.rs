//! Experiment harness: JSON configs in, deterministic JSON/CSV reports out.
//!
//! Exit codes: 0 when every bound check passes, 1 when one fails, 2 for
//! usage and configuration errors, 3 for numerical failures.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod report;
pub mod suite;
pub mod tasks;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime};

use nalgebra::DMatrix;
use serde_json::json;

use pllab_core::catalogue::{
    cylinder_lift, graph_residual, half_sq_dist_interval, half_sq_dist_set, parameter_schemas,
    quadratic_psd, sine, sq_dist_sphere,
};
use pllab_core::distance::ClosedSetRep;
use pllab_core::ScalarField;

pub use config::{load_config, parse_config, ExperimentConfig, Task, TaskParams};
pub use error::CliError;
pub use report::{Check, Report};

/// Where a finished run left its files.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub exit_code: i32,
    pub report_path: PathBuf,
    pub n_checks: usize,
    pub n_failed: usize,
    /// Lines for stdout (suite runs only).
    pub lines: Vec<String>,
}

impl RunOutput {
    pub fn summary_json(&self, task: Task) -> String {
        json!({
            "task": task.name(),
            "exit_code": self.exit_code,
            "checks": self.n_checks,
            "failed": self.n_failed,
            "report": self.report_path.display().to_string(),
        })
        .to_string()
    }
}

/// Runs a parsed config, writing `report.json` and `meta.json` under `out`.
pub fn execute(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutput, CliError> {
    let started = SystemTime::now();
    let clock = Instant::now();
    if cfg.task == Task::Suite {
        return run_suite_to(out, cfg.eps_check());
    }
    let report = tasks::run_task(cfg, out)?;
    let report_path = report::write_json(out, "report.json", &report)?;
    report::write_json(out, "meta.json", &report::Meta::new(cfg.task.name(), started, clock.elapsed()))?;
    Ok(RunOutput {
        exit_code: report.exit_code(),
        report_path,
        n_checks: report.paper_bound_checks.len(),
        n_failed: report.n_failed(),
        lines: Vec::new(),
    })
}

/// Runs the acceptance suite and writes its report under `out`.
pub fn run_suite_to(out: &Path, eps: f64) -> Result<RunOutput, CliError> {
    let started = SystemTime::now();
    let (report, timing) = suite::run_suite(eps);
    let report_path = report::write_json(out, "report.json", &report)?;
    let meta = json!({
        "meta": report::Meta::new("suite", started, std::time::Duration::from_secs_f64(timing.total_seconds)),
        "criterion_seconds": timing.criterion_seconds,
    });
    report::write_json(out, "meta.json", &meta)?;
    Ok(RunOutput {
        exit_code: if report.all_pass { 0 } else { 1 },
        report_path,
        n_checks: report.criteria.len(),
        n_failed: report.criteria.iter().filter(|c| !c.pass).count(),
        lines: suite::summary_lines(&report),
    })
}

fn example_instance(name: &str) -> (String, ScalarField) {
    let built = match name {
        "quadratic_psd" => ("q=I(2)", quadratic_psd(DMatrix::identity(2, 2))),
        "half_sq_dist_interval" => ("a=0,b=1", half_sq_dist_interval(0.0, 1.0)),
        "half_sq_dist_set" => (
            "set=box[0,1]^2",
            ClosedSetRep::boxed(&[0.0, 0.0], &[1.0, 1.0]).and_then(|s| half_sq_dist_set(&s)),
        ),
        "graph_residual" => ("g=sin", Ok(graph_residual(&sine()))),
        "cylinder_lift" => ("base=graph_residual(sin),k=1", cylinder_lift(&graph_residual(&sine()), 1)),
        "sq_dist_sphere" => ("center=(0,0),radius=1", sq_dist_sphere(&[0.0, 0.0], 1.0)),
        _ => unreachable!("listed names are catalogue names"),
    };
    (built.0.to_string(), built.1.expect("catalogue examples are valid"))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "unknown".to_string(), |v| v.to_string())
}

/// One tab-separated line per catalogue entry: name, parameter schema, and
/// the smoothness tag and known constants of an example instance.
pub fn catalogue_lines() -> Vec<String> {
    parameter_schemas()
        .iter()
        .map(|(name, schema)| {
            let (example, f) = example_instance(name);
            format!(
                "{name}\tparams={schema}\texample={example}\tsmoothness={}\tknown_pl_constant={}\tknown_inf={}",
                f.smoothness().label(),
                fmt_opt(f.known_pl_constant()),
                fmt_opt(f.known_inf()),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalogue_listing() {
        let lines = catalogue_lines();
        assert_eq!(lines.len(), 6);
        assert!(lines[0].starts_with("quadratic_psd\t"));
        assert!(lines[0].contains("known_pl_constant=4\t"), "{}", lines[0]);
        assert!(lines.iter().any(|l| l.starts_with("half_sq_dist_interval")));
        assert_eq!(lines, catalogue_lines());
    }
}
