//! Report assembly and output files.
//!
//! `report.json` holds only values derived from the config and seed, so two
//! runs of the same config are byte-identical. Timing and host details go
//! to `meta.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// A check whose failure contradicts a proven bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: Value,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Serialize) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: to_value(detail),
        }
    }
}

pub fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub task: String,
    pub field: Option<String>,
    pub seed: u64,
    pub eps_check: f64,
    /// Checks that gate the exit code.
    pub paper_bound_checks: Vec<Check>,
    /// Estimates reported for information only.
    pub informational_estimates: Map<String, Value>,
    pub all_checks_pass: bool,
}

impl Report {
    pub fn new(task: &str, field: Option<String>, seed: u64, eps_check: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            task: task.to_string(),
            field,
            seed,
            eps_check,
            paper_bound_checks: Vec::new(),
            informational_estimates: Map::new(),
            all_checks_pass: true,
        }
    }

    pub fn check(&mut self, c: Check) {
        self.all_checks_pass &= c.pass;
        self.paper_bound_checks.push(c);
    }

    pub fn estimate(&mut self, key: impl Into<String>, v: impl Serialize) {
        self.informational_estimates.insert(key.into(), to_value(v));
    }

    pub fn n_failed(&self) -> usize {
        self.paper_bound_checks.iter().filter(|c| !c.pass).count()
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_checks_pass {
            0
        } else {
            1
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes(v: &impl Serialize) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("report values serialize");
    out.push(b'\n');
    out
}

pub fn write_json(dir: &Path, name: &str, v: &impl Serialize) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, json_bytes(v))?;
    Ok(path)
}

#[derive(Debug, Serialize)]
pub struct Meta {
    pub tool_version: &'static str,
    pub task: String,
    pub started_unix_seconds: u64,
    pub wall_seconds: f64,
    pub worker_threads: usize,
}

impl Meta {
    pub fn new(task: &str, started: SystemTime, wall: Duration) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION"),
            task: task.to_string(),
            started_unix_seconds: started
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            wall_seconds: wall.as_secs_f64(),
            worker_threads: rayon::current_num_threads(),
        }
    }
}
