//! Sampled PŁ constants, claim checks, quadratic growth, and normalization.
//!
//! The PŁ ratio at `x` is `‖∇f(x)‖² / (f(x) − inf f)`. Its minimum over a
//! sample is an empirical upper bound on the best constant for the region.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Point, Region, ScalarField};
use crate::flow::DEFAULT_EPS_CHECK;
use crate::sampling::sample_region;

/// Relative slack on the growth inequality.
pub const DEFAULT_EPS_GROWTH: f64 = 1e-3;

/// Required f-gap of points supplied as a minimizing-set model.
pub const ARGMIN_GAP_TOL: f64 = 1e-10;

/// Label attached to `c_hat` in reports.
pub const C_HAT_LABEL: &str = "empirical upper bound on the best C";

/// Points with `f − inf` below this are skipped: the ratio is 0/0 there.
pub fn skip_threshold(inf_f: f64) -> f64 {
    1e-12 * (1.0 + inf_f.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlViolation {
    pub point: Vec<f64>,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PLReport {
    pub region: Region,
    pub inf_f_used: f64,
    pub c_hat: f64,
    pub c_hat_label: String,
    /// Sample attaining `c_hat`.
    pub c_hat_point: Vec<f64>,
    pub n_samples: usize,
    pub n_skipped: usize,
    pub sampler_seed: u64,
    pub claimed: Option<f64>,
    pub eps_check: Option<f64>,
    pub violation: Option<PlViolation>,
    pub pass: Option<bool>,
}

/// Sampled PŁ ratios over a region; `None` marks a skipped sample.
fn sampled_ratios(
    f: &ScalarField,
    region: &Region,
    n_samples: usize,
    inf_f: f64,
    seed: u64,
) -> Result<(Vec<Point>, Vec<Option<f64>>)> {
    if n_samples < 1 {
        return Err(Error::InvalidParams("n_samples must be >= 1".into()));
    }
    if region.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: region.dim(),
        });
    }
    let points = sample_region(region, n_samples, seed, Some(f))?;
    let eps_gap = skip_threshold(inf_f);
    let ratios: Vec<Option<f64>> = points
        .par_iter()
        .map(|x| -> Result<Option<f64>> {
            let v = f.eval(x)?;
            let gap = v - inf_f;
            if gap < -1e-12 * (1.0 + inf_f.abs() + v.abs()) {
                return Err(Error::InfBelowSamples { inf_f, value: v });
            }
            if gap < eps_gap {
                return Ok(None);
            }
            Ok(Some(f.grad(x)?.norm_squared() / gap))
        })
        .collect::<Result<_>>()?;
    Ok((points, ratios))
}

fn minimum(points: &[Point], ratios: &[Option<f64>]) -> Result<(f64, Vec<f64>, usize)> {
    let mut best: Option<(f64, usize)> = None;
    let mut skipped = 0;
    for (i, r) in ratios.iter().enumerate() {
        match r {
            None => skipped += 1,
            Some(r) => {
                if best.is_none_or(|(b, _)| *r < b) {
                    best = Some((*r, i));
                }
            }
        }
    }
    let (c_hat, i) = best.ok_or(Error::AllPointsSkipped)?;
    Ok((c_hat, points[i].iter().copied().collect(), skipped))
}

/// Minimum sampled PŁ ratio over `n_samples` low-discrepancy points of `region`.
pub fn estimate_pl_constant(
    f: &ScalarField,
    region: &Region,
    n_samples: usize,
    inf_f: f64,
    seed: u64,
) -> Result<PLReport> {
    let (points, ratios) = sampled_ratios(f, region, n_samples, inf_f, seed)?;
    let (c_hat, c_hat_point, n_skipped) = minimum(&points, &ratios)?;
    Ok(PLReport {
        region: region.clone(),
        inf_f_used: inf_f,
        c_hat,
        c_hat_label: C_HAT_LABEL.to_string(),
        c_hat_point,
        n_samples,
        n_skipped,
        sampler_seed: seed,
        claimed: None,
        eps_check: None,
        violation: None,
        pass: None,
    })
}

/// Checks `‖∇f‖² ≥ C·(1 − ε)·(f − inf)` at every sampled point. On failure
/// the violation is the sample with the smallest ratio.
pub fn check_pl_claim(
    f: &ScalarField,
    region: &Region,
    c_claimed: f64,
    n_samples: usize,
    inf_f: f64,
    seed: u64,
    eps_check: f64,
) -> Result<PLReport> {
    if !(c_claimed > 0.0) || !c_claimed.is_finite() {
        return Err(Error::InvalidParams("claimed constant must be positive".into()));
    }
    let mut report = estimate_pl_constant(f, region, n_samples, inf_f, seed)?;
    let pass = report.c_hat >= c_claimed * (1.0 - eps_check);
    report.claimed = Some(c_claimed);
    report.eps_check = Some(eps_check);
    report.pass = Some(pass);
    if !pass {
        report.violation = Some(PlViolation {
            point: report.c_hat_point.clone(),
            ratio: report.c_hat,
        });
    }
    Ok(report)
}

/// [`check_pl_claim`] with the default slack.
pub fn check_pl_claim_default(
    f: &ScalarField,
    region: &Region,
    c_claimed: f64,
    n_samples: usize,
    inf_f: f64,
    seed: u64,
) -> Result<PLReport> {
    check_pl_claim(f, region, c_claimed, n_samples, inf_f, seed, DEFAULT_EPS_CHECK)
}

/// Multiplier of `dist²` in the growth inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GrowthFactor {
    /// `C/4`, the factor implied by the trajectory-length bound.
    #[default]
    Corrected,
    /// `C`, as in the unnormalized literal statement.
    Literal,
}

impl GrowthFactor {
    pub fn multiplier(self, c: f64) -> f64 {
        match self {
            GrowthFactor::Corrected => c / 4.0,
            GrowthFactor::Literal => c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthViolation {
    pub point: Vec<f64>,
    pub f_gap: f64,
    pub required: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub c: f64,
    pub factor: GrowthFactor,
    pub multiplier: f64,
    pub inf_f: f64,
    pub eps_growth: f64,
    pub n_points: usize,
    pub n_argmin_points: usize,
    /// Median nearest-neighbor spacing of the argmin model; distances to a
    /// finite model overestimate distances to the true set by up to about
    /// half of this.
    pub argmin_spacing: Option<f64>,
    /// Minimum of `(f − inf) / dist²` over points off the model.
    pub min_ratio: Option<f64>,
    /// Maximum of `|(f − inf) − multiplier·dist²|`.
    pub max_abs_residual: f64,
    pub violation: Option<GrowthViolation>,
    pub pass: bool,
}

/// Flat coordinate buffer for fast nearest-point queries.
struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    fn new(points: &[Point]) -> Self {
        let dim = points[0].len();
        Self {
            dim,
            coords: points.iter().flat_map(|p| p.iter().copied()).collect(),
        }
    }

    fn nearest_sq(&self, x: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for p in self.coords.chunks_exact(self.dim) {
            let d: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            best = best.min(d);
        }
        best
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// Median nearest-neighbor distance, by a sweep over points sorted on
    /// the first coordinate.
    fn median_spacing(&self) -> Option<f64> {
        let n = self.coords.len() / self.dim;
        if n < 2 {
            return None;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|a, b| self.point(*a)[0].total_cmp(&self.point(*b)[0]));
        let dist_sq = |a: usize, b: usize| -> f64 {
            self.point(a)
                .iter()
                .zip(self.point(b))
                .map(|(u, v)| (u - v) * (u - v))
                .sum()
        };
        let mut nn: Vec<f64> = (0..n)
            .map(|k| {
                let i = order[k];
                let x0 = self.point(i)[0];
                let mut best = f64::INFINITY;
                for &j in order[k + 1..].iter() {
                    let dx = self.point(j)[0] - x0;
                    if dx * dx >= best {
                        break;
                    }
                    best = best.min(dist_sq(i, j));
                }
                for &j in order[..k].iter().rev() {
                    let dx = x0 - self.point(j)[0];
                    if dx * dx >= best {
                        break;
                    }
                    best = best.min(dist_sq(i, j));
                }
                best.sqrt()
            })
            .collect();
        nn.sort_by(f64::total_cmp);
        Some(nn[n / 2])
    }
}

/// Checks `f(x) − inf ≥ m·dist(x, K)²·(1 − ε)` at the given points, where
/// `K` is the finite argmin model and `m` the chosen multiplier of `C`.
pub fn quadratic_growth_check_at(
    f: &ScalarField,
    points: &[Point],
    c: f64,
    argmin_points: &[Point],
    factor: GrowthFactor,
    eps_growth: f64,
) -> Result<GrowthReport> {
    if argmin_points.is_empty() {
        return Err(Error::EmptyArgminModel);
    }
    let mut inf_f = f64::INFINITY;
    for p in argmin_points {
        inf_f = inf_f.min(f.eval(p)?);
    }
    if let Some(known) = f.known_inf() {
        inf_f = inf_f.min(known);
    }
    for p in argmin_points {
        let gap = f.eval(p)? - inf_f;
        if gap >= ARGMIN_GAP_TOL {
            return Err(Error::InvalidParams(format!(
                "argmin model point has f-gap {gap:e} >= {ARGMIN_GAP_TOL:e}"
            )));
        }
    }
    let model = PointSet::new(argmin_points);
    let multiplier = factor.multiplier(c);
    let rows: Vec<(f64, f64)> = points
        .par_iter()
        .map(|x| -> Result<(f64, f64)> {
            let gap = f.eval(x)? - inf_f;
            let d2 = model.nearest_sq(x.as_slice());
            Ok((gap, d2))
        })
        .collect::<Result<_>>()?;

    let mut report = GrowthReport {
        c,
        factor,
        multiplier,
        inf_f,
        eps_growth,
        n_points: points.len(),
        n_argmin_points: argmin_points.len(),
        argmin_spacing: model.median_spacing(),
        min_ratio: None,
        max_abs_residual: 0.0,
        violation: None,
        pass: true,
    };
    for (x, (gap, d2)) in points.iter().zip(rows) {
        let required = multiplier * d2;
        report.max_abs_residual = report.max_abs_residual.max((gap - required).abs());
        if d2 > 0.0 {
            let ratio = gap / d2;
            report.min_ratio = Some(report.min_ratio.map_or(ratio, |m| m.min(ratio)));
        }
        if gap < required * (1.0 - eps_growth) && report.violation.is_none() {
            report.pass = false;
            report.violation = Some(GrowthViolation {
                point: x.iter().copied().collect(),
                f_gap: gap,
                required,
            });
        }
    }
    Ok(report)
}

/// [`quadratic_growth_check_at`] on `n_samples` low-discrepancy points of `region`.
#[allow(clippy::too_many_arguments)]
pub fn quadratic_growth_check(
    f: &ScalarField,
    region: &Region,
    c: f64,
    argmin_points: &[Point],
    n_samples: usize,
    seed: u64,
    factor: GrowthFactor,
    eps_growth: f64,
) -> Result<GrowthReport> {
    if argmin_points.is_empty() {
        return Err(Error::EmptyArgminModel);
    }
    let points = sample_region(region, n_samples, seed, Some(f))?;
    quadratic_growth_check_at(f, &points, c, argmin_points, factor, eps_growth)
}

/// `g = (f − inf_f)/C`, which satisfies `‖∇g‖² ≥ g` whenever `f` satisfies
/// the PŁ inequality with constant `C`.
pub fn normalize(f: &ScalarField, c: f64, inf_f: f64) -> Result<ScalarField> {
    if !(c > 0.0) || !c.is_finite() || !inf_f.is_finite() {
        return Err(Error::InvalidParams(
            "normalize needs C > 0 and a finite infimum".into(),
        ));
    }
    let value = f.value_fn();
    let scale = 1.0 / c;
    let gradient = f.gradient_fn().map(|g| {
        let g: crate::field::GradientFn = std::sync::Arc::new(move |x: &Point| g(x) * scale);
        g
    });
    let hessian = f.hessian_fn().map(|h| {
        let h: crate::field::HessianFn =
            std::sync::Arc::new(move |x: &Point| -> DMatrix<f64> { h(x) * scale });
        h
    });
    let mut g = ScalarField::new(format!("normalized({})", f.name()), f.dim(), move |x| {
        (value(x) - inf_f) * scale
    })
    .with_gradient_arc(gradient)
    .with_hessian_arc(hessian)
    .with_smoothness(f.smoothness())
    .with_nonsmooth(f.nonsmooth_loci().to_vec())
    .with_known_inf(0.0)
    .with_pl_constant(1.0)
    .with_fd_steps(f.fd_steps());
    if let Some(a) = f.known_argmin() {
        g = g.with_known_argmin(a);
    }
    if let Some(d) = f.dist_factor() {
        g = g.with_dist_factor(d * scale);
    }
    Ok(g)
}
