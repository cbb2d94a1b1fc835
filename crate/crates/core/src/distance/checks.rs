//! Checks on `d_F = ½·dist²(·, F)`: the closed-form projection flow, ray
//! invariance of the projection, the separation inequality, and a
//! finite-difference regularity probe.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dist_sq_field, ClosedSetRep};
use crate::error::{Error, Result};
use crate::field::{point, BoxBounds, Point};
use crate::flow::{integrate_flow, FlowConfig};
use crate::sampling::Halton;

pub const DEFAULT_S_GRID: [f64; 7] = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
pub const DEFAULT_H_GRID: [f64; 3] = [1e-2, 1e-3, 1e-4];
/// Tolerance on re-projected flow states and ray points.
pub const PROJECTION_TOL: f64 = 1e-8;
pub const FLOW_CHECKPOINTS: usize = 10;
/// Sample points closer than this to F are not used by the separation test
/// or the regularity probe.
pub const MIN_OFFSET: f64 = 1e-6;

fn vec_of(p: &Point) -> Vec<f64> {
    p.iter().copied().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowCheckpoint {
    pub t: f64,
    pub state: Vec<f64>,
    pub projection_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowFormulaReport {
    pub x: Vec<f64>,
    pub projection: Vec<f64>,
    pub final_time: f64,
    pub n_steps: usize,
    pub max_deviation: f64,
    pub worst_time: f64,
    pub deviation_tol: f64,
    pub checkpoints: Vec<FlowCheckpoint>,
    pub max_projection_drift: f64,
    pub pass: bool,
}

/// Integrates the flow of `−∇d_F` from `x` and compares every accepted state
/// with `x_∞ + e^{−t}(x − x_∞)`, `x_∞ = proj_F(x)`. The state is re-projected
/// at ten checkpoint times.
pub fn flow_formula_check(set: &ClosedSetRep, x: &Point, cfg: &FlowConfig) -> Result<FlowFormulaReport> {
    let proj = set.project(x)?;
    if !proj.unique {
        return Err(Error::NonUniqueProjection);
    }
    let x_inf = proj.point().clone();
    let f = dist_sq_field(set)?;
    let traj = integrate_flow(&f, x, cfg)?;

    let mut max_deviation: f64 = 0.0;
    let mut worst_time = 0.0;
    for (t, y) in traj.times.iter().zip(&traj.states) {
        let exact = &x_inf + (x - &x_inf) * (-t).exp();
        let d = (y - exact).norm();
        if d > max_deviation {
            max_deviation = d;
            worst_time = *t;
        }
    }

    let final_time = traj.final_time();
    let checkpoints = (1..=FLOW_CHECKPOINTS)
        .map(|k| -> Result<FlowCheckpoint> {
            let t = final_time * k as f64 / FLOW_CHECKPOINTS as f64;
            let y = traj.state_at(t);
            let r = set.project(&y)?;
            let drift = if r.unique {
                (r.point() - &x_inf).norm()
            } else {
                f64::INFINITY
            };
            Ok(FlowCheckpoint {
                t,
                state: vec_of(&y),
                projection_drift: drift,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_projection_drift = checkpoints
        .iter()
        .map(|c| c.projection_drift)
        .fold(0.0, f64::max);
    let deviation_tol = 10.0 * (cfg.rel_tol * (1.0 + x.norm()) + cfg.abs_tol);
    Ok(FlowFormulaReport {
        x: vec_of(x),
        projection: vec_of(&x_inf),
        final_time,
        n_steps: traj.len(),
        pass: max_deviation <= deviation_tol && max_projection_drift <= PROJECTION_TOL,
        max_deviation,
        worst_time,
        deviation_tol,
        checkpoints,
        max_projection_drift,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayFailure {
    pub s: f64,
    pub point: Vec<f64>,
    pub nearest: Vec<Vec<f64>>,
    pub unique: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayInvarianceReport {
    pub x: Vec<f64>,
    pub projection: Vec<f64>,
    pub s_grid: Vec<f64>,
    pub failures: Vec<RayFailure>,
    pub first_failure: Option<f64>,
    pub pass: bool,
}

/// Projects `x_∞ + s(x − x_∞)` for each `s` and checks that the projection
/// is unique and equal to `x_∞`.
pub fn ray_invariance_check(set: &ClosedSetRep, x: &Point, s_grid: &[f64]) -> Result<RayInvarianceReport> {
    let proj = set.project(x)?;
    if !proj.unique {
        return Err(Error::NonUniqueProjection);
    }
    if proj.distance == 0.0 {
        return Err(Error::InvalidParams("ray invariance needs x outside F".into()));
    }
    let x_inf = proj.point().clone();
    let mut failures = Vec::new();
    for &s in s_grid {
        let y = &x_inf + (x - &x_inf) * s;
        let r = set.project(&y)?;
        let ok = r.unique && (r.point() - &x_inf).norm() <= PROJECTION_TOL;
        if !ok {
            failures.push(RayFailure {
                s,
                point: vec_of(&y),
                nearest: r.nearest.iter().map(vec_of).collect(),
                unique: r.unique,
            });
        }
    }
    Ok(RayInvarianceReport {
        x: vec_of(x),
        projection: vec_of(&x_inf),
        s_grid: s_grid.to_vec(),
        first_failure: failures.first().map(|f| f.s),
        pass: failures.is_empty(),
        failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvexityVerdict {
    ConsistentWithConvex,
    Nonconvex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationWitness {
    pub x: Vec<f64>,
    pub projection: Vec<f64>,
    pub y: Vec<f64>,
    pub inner_product: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub n_x_used: usize,
    pub n_x_skipped: usize,
    pub n_pairs: usize,
    pub max_inner_product: Option<f64>,
    /// Pair with the largest inner product, when it exceeds the tolerance.
    pub witness: Option<SeparationWitness>,
    pub verdict: ConvexityVerdict,
}

/// Points of `set` used as `y` in the separation test. For a sphere the
/// first sample is the antipode of `anchor`.
fn samples_in_set(set: &ClosedSetRep, anchor: &Point, n: usize, rng: &mut ChaCha8Rng, k: u64) -> Vec<Point> {
    let dim = set.dim();
    match set {
        ClosedSetRep::FinitePointCloud { points } => {
            points.iter().cycle().take(n).map(|p| point(p)).collect()
        }
        ClosedSetRep::Box { lower, upper } => {
            let mut seq = Halton::new(dim, k);
            let b = BoxBounds::new(lower.clone(), upper.clone());
            let mut out = Vec::with_capacity(n);
            // two vertices, then alternating face and interior points
            out.push(point(lower));
            out.push(point(upper));
            while out.len() < n {
                let mut y = seq.next_in_box(&b);
                if out.len() % 2 == 0 {
                    let i = out.len() % dim;
                    y[i] = if out.len() % 4 == 0 { lower[i] } else { upper[i] };
                }
                out.push(y);
            }
            out.truncate(n);
            out
        }
        ClosedSetRep::Sphere { center, radius } => {
            let c = point(center);
            let mut out = Vec::with_capacity(n);
            let v = anchor - &c;
            if v.norm() > 0.0 {
                out.push(&c - v);
            }
            while out.len() < n {
                let g = Point::from_iterator(dim, (0..dim).map(|_| StandardNormal.sample(rng)));
                let norm = g.norm();
                if norm > 0.0 {
                    out.push(&c + g * (*radius / norm));
                }
            }
            out.truncate(n);
            out
        }
        ClosedSetRep::Affine { basepoint, basis } => {
            let base = point(basepoint);
            if basis.is_empty() {
                return vec![base; n];
            }
            let mut seq = Halton::new(basis.len(), k);
            (0..n)
                .map(|_| {
                    let u = seq.next_unit();
                    let mut y = base.clone();
                    for (t, b) in u.iter().zip(basis) {
                        y += point(b) * (4.0 * t - 2.0);
                    }
                    y
                })
                .collect()
        }
        ClosedSetRep::Polytope { feasible_point, .. } => {
            let fp = point(feasible_point);
            let b = BoxBounds::new(
                fp.iter().map(|v| v - 2.0).collect(),
                fp.iter().map(|v| v + 2.0).collect(),
            );
            let mut seq = Halton::new(dim, k);
            let mut out = vec![fp];
            while out.len() < n {
                let z = seq.next_in_box(&b);
                match set.project(&z) {
                    Ok(r) => out.push(r.point().clone()),
                    Err(_) => break,
                }
            }
            out.truncate(n);
            out
        }
        ClosedSetRep::Union { members } => {
            let per = n.div_ceil(members.len());
            let mut out: Vec<Point> = Vec::new();
            let lists: Vec<Vec<Point>> = members
                .iter()
                .map(|m| samples_in_set(m, anchor, per, rng, k))
                .collect();
            for i in 0..per {
                for l in &lists {
                    if let Some(p) = l.get(i) {
                        out.push(p.clone());
                    }
                }
            }
            out.truncate(n);
            out
        }
    }
}

/// Tests `⟨x − x_∞, y − x_∞⟩ ≤ 0` for points `y ∈ F`, which holds for every
/// `x` with unique projection exactly when `F` is convex.
pub fn separation_convexity_test(
    set: &ClosedSetRep,
    x_samples: &[Point],
    y_per_x: usize,
    seed: u64,
) -> Result<SeparationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut n_x_used = 0;
    let mut n_x_skipped = 0;
    let mut n_pairs = 0;
    let mut best: Option<(f64, f64, SeparationWitness)> = None;
    for (k, x) in x_samples.iter().enumerate() {
        let r = set.project(x)?;
        if !r.unique || r.distance <= MIN_OFFSET {
            n_x_skipped += 1;
            continue;
        }
        n_x_used += 1;
        let x_inf = r.point().clone();
        let normal = x - &x_inf;
        for y in samples_in_set(set, &x_inf, y_per_x, &mut rng, seed.wrapping_add(k as u64)) {
            let offset = &y - &x_inf;
            let inner = normal.dot(&offset);
            let tol = 1e-8 * (1.0 + normal.norm() * offset.norm());
            n_pairs += 1;
            if best.as_ref().is_none_or(|b| inner > b.0) {
                best = Some((
                    inner,
                    tol,
                    SeparationWitness {
                        x: vec_of(x),
                        projection: vec_of(&x_inf),
                        y: vec_of(&y),
                        inner_product: inner,
                    },
                ));
            }
        }
    }
    let max_inner_product = best.as_ref().map(|b| b.0);
    let witness = best.and_then(|(inner, tol, w)| (inner > tol).then_some(w));
    Ok(SeparationReport {
        n_x_used,
        n_x_skipped,
        n_pairs,
        max_inner_product,
        verdict: if witness.is_some() {
            ConvexityVerdict::Nonconvex
        } else {
            ConvexityVerdict::ConsistentWithConvex
        },
        witness,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegularityClass {
    #[serde(rename = "C2_candidate")]
    C2Candidate,
    #[serde(rename = "C11_candidate")]
    C11Candidate,
    #[serde(rename = "nonsmooth")]
    Nonsmooth,
}

impl RegularityClass {
    pub fn label(self) -> &'static str {
        match self {
            RegularityClass::C2Candidate => "C2_candidate",
            RegularityClass::C11Candidate => "C11_candidate",
            RegularityClass::Nonsmooth => "nonsmooth",
        }
    }

    /// Class expected from the geometry of the set: affine sets give a
    /// smooth field, other convex sets a C^{1,1} one.
    pub fn expected_for(set: &ClosedSetRep) -> Self {
        if set.is_affine() {
            RegularityClass::C2Candidate
        } else if set.is_convex() {
            RegularityClass::C11Candidate
        } else {
            RegularityClass::Nonsmooth
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub h_grid: Vec<f64>,
    /// Successive relative change of the FD Hessian below which it is stable.
    pub stabilization_tol: f64,
    /// Bound on gradient and cross-probe Hessian difference quotients.
    pub lipschitz_bound: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            h_grid: DEFAULT_H_GRID.to_vec(),
            stabilization_tol: 1e-2,
            lipschitz_bound: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityPoint {
    pub x: Vec<f64>,
    pub unique_projection: bool,
    /// Relative change of the FD Hessian between successive steps.
    pub successive_deviation: Vec<f64>,
    pub stabilized: bool,
    /// Largest gradient difference quotient over the step grid.
    pub gradient_lipschitz: f64,
    /// FD Hessian at the finest step, row-major.
    pub finest_hessian: Vec<f64>,
    pub class: RegularityClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub variant: String,
    pub points: Vec<RegularityPoint>,
    pub n_skipped: usize,
    /// Largest Frobenius difference between finest-step FD Hessians of two probes.
    pub jump_magnitude: f64,
    /// Largest `‖ΔH‖_F / ‖Δx‖` over probe pairs.
    pub hessian_variation_rate: f64,
    pub classification: RegularityClass,
    pub expected: RegularityClass,
    pub matches_expectation: bool,
}

/// Classifies the regularity of `d_F` from finite differences at the probes.
///
/// A probe is nonsmooth evidence when its projection is not unique or the
/// gradient difference quotients exceed the Lipschitz bound, C^{1,1}
/// evidence when its FD Hessian does not settle across the step grid, and
/// C² evidence otherwise. The aggregate is the worst probe class, raised to
/// C^{1,1} when Hessians of nearby probes differ faster than the bound.
pub fn regularity_probe(
    set: &ClosedSetRep,
    probes: &[Point],
    opts: &ProbeOptions,
) -> Result<RegularityReport> {
    if opts.h_grid.is_empty() {
        return Err(Error::InvalidParams("h_grid must be nonempty".into()));
    }
    let f = dist_sq_field(set)?;
    let usable: Vec<&Point> = probes
        .iter()
        .filter(|x| set.distance(x).is_ok_and(|d| d > MIN_OFFSET))
        .collect();
    let n_skipped = probes.len() - usable.len();
    let n = set.dim();

    let rows: Vec<(RegularityPoint, DMatrix<f64>)> = usable
        .par_iter()
        .map(|x| -> Result<(RegularityPoint, DMatrix<f64>)> {
            let unique_projection = set.project(x)?.unique;
            let mut hessians = Vec::with_capacity(opts.h_grid.len());
            let mut gradient_lipschitz: f64 = 0.0;
            for &h in &opts.h_grid {
                hessians.push(f.fd_hessian_with_step(x, h)?);
                for i in 0..n {
                    let step = h * x[i].abs().max(1.0);
                    let mut up = (*x).clone();
                    up[i] += step;
                    let mut down = (*x).clone();
                    down[i] -= step;
                    let q = (f.grad(&up)? - f.grad(&down)?).norm() / (2.0 * step);
                    gradient_lipschitz = gradient_lipschitz.max(q);
                }
            }
            let successive_deviation: Vec<f64> = hessians
                .windows(2)
                .map(|w| (&w[1] - &w[0]).norm() / (1.0 + w[1].norm()))
                .collect();
            let stabilized = successive_deviation.iter().all(|d| *d < opts.stabilization_tol);
            let class = if !unique_projection || gradient_lipschitz > opts.lipschitz_bound {
                RegularityClass::Nonsmooth
            } else if !stabilized {
                RegularityClass::C11Candidate
            } else {
                RegularityClass::C2Candidate
            };
            let finest = hessians.last().cloned().unwrap_or_else(|| DMatrix::zeros(n, n));
            Ok((
                RegularityPoint {
                    x: vec_of(x),
                    unique_projection,
                    successive_deviation,
                    stabilized,
                    gradient_lipschitz,
                    finest_hessian: finest.transpose().iter().copied().collect(),
                    class,
                },
                finest,
            ))
        })
        .collect::<Result<_>>()?;

    let mut jump_magnitude: f64 = 0.0;
    let mut hessian_variation_rate: f64 = 0.0;
    for (a, (pa, ha)) in rows.iter().enumerate() {
        for (pb, hb) in &rows[a + 1..] {
            let dh = (ha - hb).norm();
            jump_magnitude = jump_magnitude.max(dh);
            let dx = (point(&pa.x) - point(&pb.x)).norm();
            if dx > 0.0 {
                hessian_variation_rate = hessian_variation_rate.max(dh / dx);
            }
        }
    }
    let mut classification = rows
        .iter()
        .map(|r| r.0.class)
        .max()
        .unwrap_or(RegularityClass::C2Candidate);
    if classification == RegularityClass::C2Candidate && hessian_variation_rate > opts.lipschitz_bound {
        classification = RegularityClass::C11Candidate;
    }
    let expected = RegularityClass::expected_for(set);
    Ok(RegularityReport {
        variant: set.variant_name().to_string(),
        points: rows.into_iter().map(|r| r.0).collect(),
        n_skipped,
        jump_magnitude,
        hessian_variation_rate,
        classification,
        expected,
        matches_expectation: classification == expected,
    })
}
