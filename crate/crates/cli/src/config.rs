//! Experiment configuration files.
//!
//! A config names a field (catalogue entry or expression), an optional
//! region, a task and a per-task parameter table. Unknown keys are rejected
//! at every level; errors carry the key path and, where available, the line
//! and column.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use pllab_core::catalogue::FieldSpec;
use pllab_core::certify::{GrowthFactor, DEFAULT_EPS_GROWTH};
use pllab_core::distance::{ClosedSetRep, ProbeOptions, DEFAULT_S_GRID};
use pllab_core::flow::DEFAULT_EPS_CHECK;
use pllab_core::minset::DEFAULT_DEDUP_RADIUS;
use pllab_core::{FlowConfig, Region};

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_OUTPUT_DIR: &str = "pllab-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Flow,
    Certify,
    Growth,
    Minset,
    Distfield,
    Suite,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Flow => "flow",
            Task::Certify => "certify",
            Task::Growth => "growth",
            Task::Minset => "minset",
            Task::Distfield => "distfield",
            Task::Suite => "suite",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    field_spec: Option<FieldSpec>,
    region: Option<Region>,
    task: Task,
    #[serde(default)]
    task_params: Option<serde_json::Value>,
    output_dir: Option<PathBuf>,
    #[serde(default = "default_seed")]
    seed: u64,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowParams {
    pub starts: Vec<Vec<f64>>,
    /// PŁ constant used by the bounds; the field's known constant when unset.
    pub c: Option<f64>,
    pub inf_f: Option<f64>,
    pub eps_check: Option<f64>,
    #[serde(default)]
    pub integrator: FlowConfig,
    /// Points per axis of a retraction grid over the region's bounding box.
    pub retraction_grid: Option<usize>,
    #[serde(default = "yes")]
    pub write_csv: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyParams {
    #[serde(default = "default_certify_samples")]
    pub n_samples: usize,
    /// Constant to check; without it only the estimate is reported.
    pub claimed_c: Option<f64>,
    pub inf_f: Option<f64>,
    pub eps_check: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthParams {
    pub c: Option<f64>,
    /// Finite model of the minimizing set; located by multistart when unset.
    pub argmin_points: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_growth_starts")]
    pub n_starts: usize,
    /// Points to check; low-discrepancy samples of the region when unset.
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_growth_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub factor: GrowthFactor,
    #[serde(default = "default_eps_growth")]
    pub eps_growth: f64,
    #[serde(default)]
    pub integrator: FlowConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinsetParams {
    pub c: Option<f64>,
    #[serde(default = "default_minset_starts")]
    pub n_starts: usize,
    #[serde(default = "default_dedup")]
    pub dedup_radius: f64,
    pub r_link: Option<f64>,
    #[serde(default)]
    pub integrator: FlowConfig,
    /// Minimizers (or nearby points) at which to probe the kernel chart.
    #[serde(default)]
    pub chart_points: Vec<Vec<f64>>,
    #[serde(default = "default_chart_radius")]
    pub chart_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparationParams {
    #[serde(default = "default_x_samples")]
    pub x_samples: usize,
    #[serde(default = "default_y_per_x")]
    pub y_per_x: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistfieldParams {
    pub set: ClosedSetRep,
    #[serde(default)]
    pub flow_points: Vec<Vec<f64>>,
    #[serde(default)]
    pub integrator: FlowConfig,
    #[serde(default)]
    pub ray_points: Vec<Vec<f64>>,
    #[serde(default = "default_s_grid")]
    pub s_grid: Vec<f64>,
    /// Separation test on samples of the region.
    pub separation: Option<SeparationParams>,
    #[serde(default)]
    pub probes: Vec<Vec<f64>>,
    #[serde(default)]
    pub probe_options: ProbeOptions,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteParams {
    pub eps_check: Option<f64>,
}

fn yes() -> bool {
    true
}
fn default_certify_samples() -> usize {
    1024
}
fn default_growth_starts() -> usize {
    50
}
fn default_growth_samples() -> usize {
    256
}
fn default_eps_growth() -> f64 {
    DEFAULT_EPS_GROWTH
}
fn default_minset_starts() -> usize {
    20
}
fn default_dedup() -> f64 {
    DEFAULT_DEDUP_RADIUS
}
fn default_chart_radius() -> f64 {
    0.5
}
fn default_x_samples() -> usize {
    20
}
fn default_y_per_x() -> usize {
    10
}
fn default_s_grid() -> Vec<f64> {
    DEFAULT_S_GRID.to_vec()
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskParams {
    Flow(FlowParams),
    Certify(CertifyParams),
    Growth(GrowthParams),
    Minset(MinsetParams),
    Distfield(DistfieldParams),
    Suite(SuiteParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub field_spec: Option<FieldSpec>,
    pub region: Option<Region>,
    pub task: Task,
    pub params: TaskParams,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Slack for the continuum bounds requested by the task parameters.
    pub fn eps_check(&self) -> f64 {
        let eps = match &self.params {
            TaskParams::Flow(p) => p.eps_check,
            TaskParams::Certify(p) => p.eps_check,
            TaskParams::Suite(p) => p.eps_check,
            _ => None,
        };
        eps.unwrap_or(DEFAULT_EPS_CHECK)
    }

    /// Overrides the slack of tasks that have one.
    pub fn set_eps_check(&mut self, eps: f64) {
        match &mut self.params {
            TaskParams::Flow(p) => p.eps_check = Some(eps),
            TaskParams::Certify(p) => p.eps_check = Some(eps),
            TaskParams::Suite(p) => p.eps_check = Some(eps),
            _ => {}
        }
    }
}

fn with_path<T: DeserializeOwned>(text: &str, prefix: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let out = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Config(format!(
            "line {} column {}, key `{}{}`: {}",
            inner.line(),
            inner.column(),
            prefix,
            path,
            strip_position(&inner.to_string())
        ))
    })?;
    Ok(out)
}

/// serde_json appends " at line L column C"; the caller reports those itself.
fn strip_position(msg: &str) -> &str {
    match msg.rfind(" at line ") {
        Some(i) => &msg[..i],
        None => msg,
    }
}

fn params<T: DeserializeOwned>(value: &serde_json::Value) -> Result<T, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!(
            "key `task_params.{path}`: {}",
            strip_position(&e.into_inner().to_string())
        ))
    })
}

/// Parses and validates a config from JSON text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let raw: RawConfig = with_path(text, "")?;
    let tp = raw
        .task_params
        .unwrap_or_else(|| serde_json::Value::Object(Default::default()));
    let params = match raw.task {
        Task::Flow => TaskParams::Flow(params(&tp)?),
        Task::Certify => TaskParams::Certify(params(&tp)?),
        Task::Growth => TaskParams::Growth(params(&tp)?),
        Task::Minset => TaskParams::Minset(params(&tp)?),
        Task::Distfield => TaskParams::Distfield(params(&tp)?),
        Task::Suite => TaskParams::Suite(params(&tp)?),
    };
    match raw.task {
        Task::Distfield => {
            if raw.field_spec.is_some() {
                return Err(CliError::Config(
                    "key `field_spec`: distfield takes its field from `task_params.set`; omit `field_spec`"
                        .into(),
                ));
            }
        }
        Task::Suite => {}
        _ => {
            if raw.field_spec.is_none() {
                return Err(CliError::Config(format!(
                    "key `field_spec`: required for task `{}`",
                    raw.task.name()
                )));
            }
        }
    }
    if matches!(raw.task, Task::Certify | Task::Minset) && raw.region.is_none() {
        return Err(CliError::Config(format!(
            "key `region`: required for task `{}`",
            raw.task.name()
        )));
    }
    if let Some(r) = &raw.region {
        r.validate()
            .map_err(|e| CliError::Config(format!("key `region`: {e}")))?;
    }
    Ok(ExperimentConfig {
        field_spec: raw.field_spec,
        region: raw.region,
        task: raw.task,
        params,
        output_dir: raw
            .output_dir
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        seed: raw.seed,
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}
