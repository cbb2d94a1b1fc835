//! Checks of the exponential-decay, finite-length and retraction bounds
//! along integrated trajectories.
//!
//! The length and displacement bounds are used in their general-constant
//! form `(2/√C)·√(f − inf f)`, obtained from `d/dt √(f − inf f) ≤ −(√C/2)‖ẏ‖`.
//! Reports carry `derived_normalization = true` for those.

use rayon::prelude::*;
use serde::Serialize;

use super::{flow_limit, FlowConfig, Trajectory};
use crate::error::{Error, Result};
use crate::field::{Point, ScalarField};
use crate::linalg::SortedEigen;

/// Relative slack on every continuum bound.
pub const DEFAULT_EPS_CHECK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ArclengthMethod {
    Chord,
    DenseQuadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub c: f64,
    pub inf_f: f64,
    pub eps_check: f64,
    pub n_steps: usize,
    /// Extremes of `(f(y_t) − inf) / (e^{−Ct}(f(y_0) − inf))` over steps with t > 0.
    pub max_ratio: Option<f64>,
    pub min_ratio: Option<f64>,
    /// First `(t, f)` exceeding the bound.
    pub violation: Option<(f64, f64)>,
    pub pass: bool,
}

/// Checks `f(y_t) − inf ≤ e^{−Ct}(f(y_0) − inf)·(1 + ε)` at every accepted step.
pub fn decay_check(traj: &Trajectory, c: f64, inf_f: f64, eps_check: f64) -> DecayReport {
    let gap0 = traj.f_values[0] - inf_f;
    let mut report = DecayReport {
        c,
        inf_f,
        eps_check,
        n_steps: traj.len(),
        max_ratio: None,
        min_ratio: None,
        violation: None,
        pass: true,
    };
    for (t, fv) in traj.times.iter().zip(&traj.f_values) {
        let bound = (-c * t).exp() * gap0;
        let gap = fv - inf_f;
        if gap > bound * (1.0 + eps_check) && report.violation.is_none() {
            report.violation = Some((*t, *fv));
            report.pass = false;
        }
        if *t > 0.0 && bound > 0.0 {
            let ratio = gap / bound;
            report.max_ratio = Some(report.max_ratio.map_or(ratio, |m| m.max(ratio)));
            report.min_ratio = Some(report.min_ratio.map_or(ratio, |m| m.min(ratio)));
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthReport {
    pub arclength: f64,
    pub chord_length: f64,
    pub method: ArclengthMethod,
    pub bound: f64,
    /// arclength / bound, when the bound is positive.
    pub ratio: Option<f64>,
    pub derived_normalization: bool,
    pub pass: bool,
}

/// Checks `length ≤ (2/√C)·√(f0 − inf)·(1 + ε)`.
pub fn length_check(traj: &Trajectory, c: f64, inf_f: f64, f0: f64, eps_check: f64) -> LengthReport {
    let bound = 2.0 / c.sqrt() * (f0 - inf_f).max(0.0).sqrt();
    LengthReport {
        arclength: traj.arclength,
        chord_length: traj.chord_length,
        method: traj.arclength_method,
        bound,
        ratio: (bound > 0.0).then(|| traj.arclength / bound),
        derived_normalization: c != 1.0,
        pass: traj.arclength <= bound * (1.0 + eps_check),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetractionEntry {
    pub y: Vec<f64>,
    pub limit: Vec<f64>,
    pub displacement: f64,
    pub bound: f64,
    pub ratio: Option<f64>,
    /// The point is itself a minimizer and must be fixed by the limit map.
    pub fixed_point: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetractionReport {
    pub c: f64,
    pub inf_f: f64,
    pub entries: Vec<RetractionEntry>,
    pub max_ratio: Option<f64>,
    pub violations: Vec<usize>,
    pub derived_normalization: bool,
    pub pass: bool,
}

/// Tolerance on `φ_∞(y) = y` for minimizers.
pub const FIXED_POINT_TOL: f64 = 1e-8;

/// Checks `‖φ_∞(y) − y‖ ≤ (2/√C)·√(f(y) − inf)` on each grid point, and that
/// minimizers are fixed by `φ_∞`. Grid points are processed in parallel;
/// entries keep input order.
pub fn retraction_check(
    f: &ScalarField,
    grid: &[Point],
    cfg: &FlowConfig,
    c: f64,
    inf_f: f64,
    eps_check: f64,
) -> Result<RetractionReport> {
    let entries: Vec<RetractionEntry> = grid
        .par_iter()
        .map(|y| -> Result<RetractionEntry> {
            let limit = flow_limit(f, y, cfg)?;
            let gap = f.eval(y)? - inf_f;
            let displacement = (&limit - y).norm();
            let bound = 2.0 / c.sqrt() * gap.max(0.0).sqrt();
            let fixed_point = gap < cfg.stop_f_gap;
            let mut pass = displacement <= bound * (1.0 + eps_check);
            if fixed_point {
                pass &= displacement <= FIXED_POINT_TOL;
            }
            Ok(RetractionEntry {
                y: y.iter().copied().collect(),
                limit: limit.iter().copied().collect(),
                displacement,
                bound,
                ratio: (bound > 0.0).then(|| displacement / bound),
                fixed_point,
                pass,
            })
        })
        .collect::<Result<_>>()?;
    let violations: Vec<usize> = entries
        .iter()
        .enumerate()
        .filter(|(_, e)| !e.pass)
        .map(|(i, _)| i)
        .collect();
    let max_ratio = entries
        .iter()
        .filter_map(|e| e.ratio)
        .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))));
    Ok(RetractionReport {
        c,
        inf_f,
        pass: violations.is_empty(),
        entries,
        max_ratio,
        violations,
        derived_normalization: c != 1.0,
    })
}

/// Smallest sphere radius tried by [`basin_witness`].
pub const WITNESS_MIN_RADIUS: f64 = 1e-5;
const WITNESS_REFINEMENTS: usize = 25;

/// Finds `y ≠ minimizer`, off the minimizing set, with `φ_∞(y) = minimizer`.
///
/// Candidates are placed on spheres of radius r, r/2, … ≥ 1e-5 around the
/// minimizer, first along normal (Hessian range) directions, then along the
/// coordinate axes. A candidate whose limit lands near but not on the
/// minimizer is corrected along the Hessian kernel until it does.
pub fn basin_witness(
    f: &ScalarField,
    minimizer: &Point,
    search_radius: f64,
    cfg: &FlowConfig,
) -> Result<Point> {
    let n = f.dim();
    let inf_f = f.eval(minimizer)?;
    let tol = (2.0 * cfg.stop_grad_norm).max(1e-6);
    let cfg = FlowConfig {
        inf_f: Some(cfg.inf_f.unwrap_or(inf_f).min(inf_f)),
        ..cfg.clone()
    };

    let eig = SortedEigen::new(&f.hessian(minimizer)?);
    let lambda_max = eig.values.last().copied().unwrap_or(0.0).max(0.0);
    let zero_cut = match f.known_pl_constant() {
        Some(c) => c / 4.0,
        None => 1e-3 * lambda_max.max(1e-12),
    };
    let kernel = eig.select(|v| v < zero_cut);
    let normal = eig.select(|v| v >= zero_cut);

    let mut directions: Vec<Point> = Vec::new();
    for col in normal.column_iter() {
        directions.push(col.into_owned());
        directions.push(-col.into_owned());
    }
    for i in 0..n {
        let mut e = Point::zeros(n);
        e[i] = 1.0;
        directions.push(e.clone());
        directions.push(-e);
    }

    let mut r = search_radius;
    while r >= WITNESS_MIN_RADIUS {
        for d in &directions {
            let mut y = minimizer + d * r;
            for _ in 0..WITNESS_REFINEMENTS {
                let offset = (&y - minimizer).norm();
                if offset == 0.0 || offset > search_radius {
                    break;
                }
                if f.eval(&y)? - inf_f < cfg.stop_f_gap {
                    break;
                }
                let limit = match flow_limit(f, &y, &cfg) {
                    Ok(p) => p,
                    Err(Error::NotConverged { .. }) => break,
                    Err(e) => return Err(e),
                };
                let miss = &limit - minimizer;
                if miss.norm() <= tol {
                    return Ok(y);
                }
                if kernel.ncols() == 0 {
                    break;
                }
                let along_kernel = &kernel * (kernel.transpose() * &miss);
                if along_kernel.norm() < 1e-3 * miss.norm() {
                    break;
                }
                y -= along_kernel;
            }
        }
        r /= 2.0;
    }
    Err(Error::NoWitnessFound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::point;
    use crate::flow::integrate_flow;
    use nalgebra::DMatrix;

    fn half_sq(dim: usize) -> ScalarField {
        ScalarField::new("half_sq", dim, |x| 0.5 * x.norm_squared())
            .with_gradient(|x| x.clone())
            .with_hessian(move |x| DMatrix::identity(x.len(), x.len()))
            .with_known_inf(0.0)
            .with_pl_constant(2.0)
    }

    #[test]
    fn decay_tight_for_linear_flow() {
        let f = half_sq(1);
        let traj = integrate_flow(&f, &point(&[1.0]), &FlowConfig { abs_tol: 1e-14, ..FlowConfig::default() }).unwrap();
        let r = decay_check(&traj, 2.0, 0.0, DEFAULT_EPS_CHECK);
        assert!(r.pass, "{r:?} {:?}", traj.stop_reason);
        assert!((r.max_ratio.unwrap() - 1.0).abs() < 1e-6);
        assert!((r.min_ratio.unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn decay_overclaimed_constant_fails_early() {
        let f = half_sq(1);
        let traj = integrate_flow(&f, &point(&[1.0]), &FlowConfig::default()).unwrap();
        let r = decay_check(&traj, 3.0, 0.0, DEFAULT_EPS_CHECK);
        assert!(!r.pass);
        let (t, _) = r.violation.unwrap();
        assert!(t > 0.0 && t < 1.0);
    }

    #[test]
    fn decay_constant_field_passes() {
        let f = ScalarField::constant(1, 0.0);
        let traj = integrate_flow(&f, &point(&[1.0]), &FlowConfig::default()).unwrap();
        assert!(decay_check(&traj, 5.0, 0.0, DEFAULT_EPS_CHECK).pass);
        let l = length_check(&traj, 5.0, 0.0, 0.0, DEFAULT_EPS_CHECK);
        assert!(l.pass);
        assert_eq!(l.bound, 0.0);
    }

    #[test]
    fn straight_line_length_is_tight() {
        let f = half_sq(1);
        let traj = integrate_flow(&f, &point(&[1.0]), &FlowConfig::default()).unwrap();
        let r = length_check(&traj, 2.0, 0.0, 0.5, DEFAULT_EPS_CHECK);
        assert!(r.pass);
        assert!((r.arclength - 1.0).abs() < 1e-6);
        assert!((r.bound - 1.0).abs() < 1e-15);
    }

    #[test]
    fn retraction_on_quadratic() {
        let f = half_sq(2);
        let grid = vec![point(&[0.5, -1.0]), point(&[0.0, 0.0]), point(&[1.0, 1.0])];
        let r = retraction_check(&f, &grid, &FlowConfig::default(), 2.0, 0.0, DEFAULT_EPS_CHECK)
            .unwrap();
        assert!(r.pass);
        assert!(r.entries[1].fixed_point);
        assert_eq!(r.entries[1].displacement, 0.0);
        assert!((r.max_ratio.unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn witness_for_isolated_minimizer() {
        let f = half_sq(2);
        let y = basin_witness(&f, &point(&[0.0, 0.0]), 1.0, &FlowConfig::default()).unwrap();
        assert!((y.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn no_witness_for_constant_field() {
        let f = ScalarField::constant(2, 0.0);
        assert_eq!(
            basin_witness(&f, &point(&[0.0, 0.0]), 1.0, &FlowConfig::default()),
            Err(Error::NoWitnessFound)
        );
    }
}
