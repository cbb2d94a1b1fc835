//! Gradient flow `ẏ = −∇f(y)` integrated with an adaptive Dormand-Prince
//! 5(4) pair, the limit map `φ_∞`, and the decay, length and retraction
//! checks along trajectories.

mod checks;
mod dopri;

pub use checks::{
    basin_witness, decay_check, length_check, retraction_check, ArclengthMethod, DecayReport,
    LengthReport, RetractionEntry, RetractionReport, DEFAULT_EPS_CHECK,
};
pub use dopri::DenseSegment;

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Point, ScalarField};

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

/// 5-point Gauss-Legendre nodes and weights on [0, 1].
const GL5: [(f64, f64); 5] = [
    (0.046_910_077_030_668_004, 0.118_463_442_528_094_54),
    (0.230_765_344_947_158_45, 0.239_314_335_249_683_23),
    (0.5, 0.284_444_444_444_444_44),
    (0.769_234_655_052_841_6, 0.239_314_335_249_683_23),
    (0.953_089_922_969_332, 0.118_463_442_528_094_54),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_time: f64,
    pub max_steps: usize,
    pub stop_grad_norm: f64,
    pub stop_f_gap: f64,
    /// Infimum used by the f-gap stop; the field's known infimum when unset.
    pub inf_f: Option<f64>,
    /// Integrate ‖∇f‖ along the dense output for the arclength.
    pub dense_arclength: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_time: 50.0,
            max_steps: 1_000_000,
            stop_grad_norm: 1e-10,
            stop_f_gap: 1e-16,
            inf_f: None,
            dense_arclength: true,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.rel_tol,
            self.abs_tol,
            self.max_time,
            self.stop_grad_norm,
            self.stop_f_gap,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || self.max_steps < 1 {
            return Err(Error::InvalidParams(
                "flow tolerances, max_time and stop thresholds must be positive; max_steps >= 1"
                    .into(),
            ));
        }
        Ok(())
    }

    pub fn with_max_time(mut self, t: f64) -> Self {
        self.max_time = t;
        self
    }

    pub fn with_inf(mut self, inf: f64) -> Self {
        self.inf_f = Some(inf);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradSmall,
    FGapSmall,
    MaxTime,
    MaxSteps,
}

impl StopReason {
    pub fn converged(self) -> bool {
        matches!(self, StopReason::GradSmall | StopReason::FGapSmall)
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::GradSmall => "grad_small",
            StopReason::FGapSmall => "f_gap_small",
            StopReason::MaxTime => "max_time",
            StopReason::MaxSteps => "max_steps",
        })
    }
}

/// A discretized gradient-flow solution, one entry per accepted step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub x0: Point,
    pub times: Vec<f64>,
    pub states: Vec<Point>,
    pub f_values: Vec<f64>,
    pub grad_norms: Vec<f64>,
    /// Cumulative arclength at each accepted step.
    pub cumulative_arclength: Vec<f64>,
    /// Total length: dense-output quadrature of ‖∇f‖ when enabled, chord sum otherwise.
    pub arclength: f64,
    /// Σ‖y_{k+1} − y_k‖, a lower bound on the true length.
    pub chord_length: f64,
    pub arclength_method: ArclengthMethod,
    pub terminal: Point,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub dense: Vec<DenseSegment>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least the initial point")
    }

    /// State at time `t` from the dense output; clamped to `[0, final_time]`.
    pub fn state_at(&self, t: f64) -> Point {
        if self.dense.is_empty() || t <= 0.0 {
            return if t <= 0.0 {
                self.x0.clone()
            } else {
                self.terminal.clone()
            };
        }
        let idx = self
            .dense
            .partition_point(|s| s.t0 + s.h < t)
            .min(self.dense.len() - 1);
        self.dense[idx].eval(t)
    }

    /// CSV dump: `t,x0,...,x{n-1},f,gradnorm,arclen`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.x0.len();
        let mut header = String::from("t");
        for i in 0..n {
            header.push_str(&format!(",x{i}"));
        }
        header.push_str(",f,gradnorm,arclen");
        writeln!(w, "{header}")?;
        for k in 0..self.len() {
            let mut row = format!("{:.16e}", self.times[k]);
            for v in self.states[k].iter() {
                row.push_str(&format!(",{v:.16e}"));
            }
            row.push_str(&format!(
                ",{:.16e},{:.16e},{:.16e}",
                self.f_values[k], self.grad_norms[k], self.cumulative_arclength[k]
            ));
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

/// Integrates `ẏ = −∇f(y)` from `x0` until a stop criterion fires.
pub fn integrate_flow(f: &ScalarField, x0: &Point, cfg: &FlowConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if x0.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: x0.len(),
        });
    }
    let inf_f = cfg.inf_f.or(f.known_inf());
    let rhs = |y: &Point| -> Result<Point> { Ok(-f.grad(y)?) };

    let f0 = f.eval(x0)?;
    let mut k1 = rhs(x0)?;
    let mut traj = Trajectory {
        x0: x0.clone(),
        times: vec![0.0],
        states: vec![x0.clone()],
        f_values: vec![f0],
        grad_norms: vec![k1.norm()],
        cumulative_arclength: vec![0.0],
        arclength: 0.0,
        chord_length: 0.0,
        arclength_method: if cfg.dense_arclength {
            ArclengthMethod::DenseQuadrature
        } else {
            ArclengthMethod::Chord
        },
        terminal: x0.clone(),
        converged: false,
        stop_reason: StopReason::MaxTime,
        dense: Vec::new(),
    };
    let monotone_slack = 10.0 * cfg.rel_tol * (f0.abs() + cfg.abs_tol);
    let stop_check = |fv: f64, gn: f64| -> Option<StopReason> {
        if gn < cfg.stop_grad_norm {
            Some(StopReason::GradSmall)
        } else if inf_f.is_some_and(|inf| fv - inf < cfg.stop_f_gap) {
            Some(StopReason::FGapSmall)
        } else {
            None
        }
    };
    if let Some(reason) = stop_check(f0, traj.grad_norms[0]) {
        traj.stop_reason = reason;
        traj.converged = true;
        return Ok(traj);
    }

    let mut t: f64 = 0.0;
    let mut y = x0.clone();
    let mut f_prev = f0;
    let mut h = dopri::initial_step(&rhs, &y, &k1, cfg.rel_tol, cfg.abs_tol, cfg.max_time)?;
    let mut fac_old: f64 = 1e-4;
    let mut rejected_last = false;
    let mut steps = 0usize;
    let expo = 0.2 - BETA * 0.75;

    loop {
        if steps >= cfg.max_steps {
            traj.stop_reason = StopReason::MaxSteps;
            break;
        }
        if h.abs() <= 10.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        let last = t + h >= cfg.max_time;
        if last {
            h = cfg.max_time - t;
        }
        let out = dopri::step(&rhs, t, &y, &k1, h)?;
        steps += 1;
        let err = dopri::error_norm(&out.err, &y, &out.y_new, cfg.rel_tol, cfg.abs_tol);
        if !err.is_finite() {
            return Err(Error::NonFiniteValue(format!("error estimate at t = {t}")));
        }
        let fac11 = err.powf(expo);
        if err <= 1.0 {
            let t_new = if last { cfg.max_time } else { t + h };
            let f_new = f.eval(&out.y_new)?;
            if f_new > f_prev + monotone_slack {
                return Err(Error::NonMonotoneFlow {
                    t: t_new,
                    before: f_prev,
                    after: f_new,
                });
            }
            let chord = (&out.y_new - &y).norm();
            let piece = if cfg.dense_arclength {
                let mut acc = 0.0;
                for (node, weight) in GL5 {
                    acc += weight * f.grad(&out.dense.eval_theta(node))?.norm();
                }
                acc * h
            } else {
                chord
            };
            traj.chord_length += chord;
            traj.arclength += piece;
            let grad_norm = out.k_new.norm();

            traj.times.push(t_new);
            traj.states.push(out.y_new.clone());
            traj.f_values.push(f_new);
            traj.grad_norms.push(grad_norm);
            traj.cumulative_arclength.push(traj.arclength);
            traj.dense.push(out.dense);

            let mut fac = fac11 / fac_old.powf(BETA);
            fac_old = err.max(1e-4);
            fac = (1.0 / FAC_MAX).max((1.0 / FAC_MIN).min(fac / SAFETY));
            let mut h_new = h / fac;
            if rejected_last {
                h_new = h_new.min(h);
            }
            rejected_last = false;

            t = t_new;
            y = out.y_new;
            k1 = out.k_new;
            f_prev = f_new;

            if let Some(reason) = stop_check(f_new, grad_norm) {
                traj.stop_reason = reason;
                break;
            }
            if last || t >= cfg.max_time {
                traj.stop_reason = StopReason::MaxTime;
                break;
            }
            h = h_new;
        } else {
            h /= (1.0 / FAC_MIN).min(fac11 / SAFETY);
            rejected_last = true;
        }
    }
    traj.terminal = y;
    traj.converged = traj.stop_reason.converged();
    Ok(traj)
}

/// `φ_∞(x0)`: the terminal point of a converged trajectory.
pub fn flow_limit(f: &ScalarField, x0: &Point, cfg: &FlowConfig) -> Result<Point> {
    let traj = integrate_flow(f, x0, cfg)?;
    if !traj.converged {
        return Err(Error::NotConverged {
            reason: traj.stop_reason.to_string(),
            grad_norm: *traj.grad_norms.last().unwrap_or(&f64::NAN),
        });
    }
    Ok(traj.terminal)
}
