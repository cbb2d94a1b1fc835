//! Closed subsets of ℝⁿ with exact metric projection, and the half
//! squared-distance field `d_F(x) = ½·dist(x, F)²` built on top of them.
//!
//! Projections are set-valued: a [`ProjectionResult`] lists every nearest
//! point found (up to a tie tolerance) and says whether the projection is a
//! single point. Non-uniqueness is a result, not an error, because the
//! checks in [`checks`] need to observe it.

mod checks;
mod polytope;

pub use checks::{
    flow_formula_check, ray_invariance_check, regularity_probe, separation_convexity_test,
    ConvexityVerdict, FlowFormulaReport, ProbeOptions, RayFailure, RayInvarianceReport,
    RegularityClass, RegularityPoint, RegularityReport, SeparationReport, DEFAULT_H_GRID,
    DEFAULT_S_GRID, MIN_OFFSET,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{point, NonSmoothLocus, Point, ScalarField, Smoothness};

/// Nearest points whose distances agree within `TIE_REL·(1 + d)` are ties.
pub const TIE_REL: f64 = 1e-10;
/// Tied nearest points closer than this are merged into one representative.
pub const MERGE_RADIUS: f64 = 1e-8;
/// Number of representatives returned for the full-sphere projection of a center.
pub const SPHERE_CENTER_REPRESENTATIVES: usize = 8;

/// A closed subset of ℝⁿ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ClosedSetRep {
    FinitePointCloud {
        points: Vec<Vec<f64>>,
    },
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Sphere {
        center: Vec<f64>,
        radius: f64,
    },
    /// `basepoint + span(basis)`, basis rows orthonormal.
    Affine {
        basepoint: Vec<f64>,
        basis: Vec<Vec<f64>>,
    },
    /// `{x : a·x ≤ b}`, nonempty as witnessed by `feasible_point`.
    Polytope {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        feasible_point: Vec<f64>,
    },
    Union {
        members: Vec<ClosedSetRep>,
    },
}

/// Set-valued metric projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub nearest: Vec<Point>,
    pub distance: f64,
    pub unique: bool,
}

impl ProjectionResult {
    fn single(nearest: Point, x: &Point) -> Self {
        let distance = (x - &nearest).norm();
        Self {
            nearest: vec![nearest],
            distance,
            unique: true,
        }
    }

    pub fn point(&self) -> &Point {
        &self.nearest[0]
    }
}

impl ClosedSetRep {
    pub fn point_cloud(points: &[&[f64]]) -> Result<Self> {
        let s = ClosedSetRep::FinitePointCloud {
            points: points.iter().map(|p| p.to_vec()).collect(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn boxed(lower: &[f64], upper: &[f64]) -> Result<Self> {
        let s = ClosedSetRep::Box {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn sphere(center: &[f64], radius: f64) -> Result<Self> {
        let s = ClosedSetRep::Sphere {
            center: center.to_vec(),
            radius,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn affine(basepoint: &[f64], basis: &[&[f64]]) -> Result<Self> {
        let s = ClosedSetRep::Affine {
            basepoint: basepoint.to_vec(),
            basis: basis.iter().map(|v| v.to_vec()).collect(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn polytope(a: &[&[f64]], b: &[f64], feasible_point: &[f64]) -> Result<Self> {
        let s = ClosedSetRep::Polytope {
            a: a.iter().map(|r| r.to_vec()).collect(),
            b: b.to_vec(),
            feasible_point: feasible_point.to_vec(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn union(members: Vec<ClosedSetRep>) -> Result<Self> {
        let s = ClosedSetRep::Union { members };
        s.validate()?;
        Ok(s)
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            ClosedSetRep::FinitePointCloud { .. } => "finite_point_cloud",
            ClosedSetRep::Box { .. } => "box",
            ClosedSetRep::Sphere { .. } => "sphere",
            ClosedSetRep::Affine { .. } => "affine",
            ClosedSetRep::Polytope { .. } => "polytope",
            ClosedSetRep::Union { .. } => "union",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ClosedSetRep::FinitePointCloud { points } => points.first().map_or(0, Vec::len),
            ClosedSetRep::Box { lower, .. } => lower.len(),
            ClosedSetRep::Sphere { center, .. } => center.len(),
            ClosedSetRep::Affine { basepoint, .. } => basepoint.len(),
            ClosedSetRep::Polytope { feasible_point, .. } => feasible_point.len(),
            ClosedSetRep::Union { members } => members.first().map_or(0, ClosedSetRep::dim),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParams(format!("{}: {msg}", self.variant_name())));
        let n = self.dim();
        if n == 0 {
            return bad("dimension must be positive");
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            ClosedSetRep::FinitePointCloud { points } => {
                if points.iter().any(|p| p.len() != n || !finite(p)) {
                    return bad("points must be finite and share one dimension");
                }
            }
            ClosedSetRep::Box { lower, upper } => {
                if upper.len() != n || !finite(lower) || !finite(upper) {
                    return bad("bounds must be finite and of equal length");
                }
                if lower.iter().zip(upper).any(|(l, u)| l > u) {
                    return bad("lower <= upper required");
                }
            }
            ClosedSetRep::Sphere { center, radius } => {
                if !finite(center) || !(*radius > 0.0) || !radius.is_finite() {
                    return bad("radius must be positive and center finite");
                }
            }
            ClosedSetRep::Affine { basepoint, basis } => {
                if !finite(basepoint) || basis.iter().any(|v| v.len() != n || !finite(v)) {
                    return bad("basis vectors must match the basepoint dimension");
                }
                for (i, u) in basis.iter().enumerate() {
                    for (j, v) in basis.iter().enumerate() {
                        let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
                        let target = if i == j { 1.0 } else { 0.0 };
                        if (dot - target).abs() > 1e-12 {
                            return bad("basis must be orthonormal within 1e-12");
                        }
                    }
                }
            }
            ClosedSetRep::Polytope {
                a,
                b,
                feasible_point,
            } => {
                if a.len() != b.len() || a.iter().any(|r| r.len() != n || !finite(r)) {
                    return bad("constraint matrix rows must match the dimension and b");
                }
                if !finite(b) || !finite(feasible_point) {
                    return bad("non-finite data");
                }
                for (row, bi) in a.iter().zip(b) {
                    let lhs: f64 = row.iter().zip(feasible_point).map(|(x, y)| x * y).sum();
                    if lhs > bi + 1e-9 * (1.0 + bi.abs()) {
                        return bad("feasible_point violates a constraint");
                    }
                }
            }
            ClosedSetRep::Union { members } => {
                if members.is_empty() {
                    return bad("union needs at least one member");
                }
                for m in members {
                    if m.dim() != n {
                        return bad("members must share one dimension");
                    }
                    m.validate()?;
                }
            }
        }
        Ok(())
    }

    /// True when the set is an affine subspace (including a single point).
    pub fn is_affine(&self) -> bool {
        match self {
            ClosedSetRep::Affine { .. } => true,
            ClosedSetRep::FinitePointCloud { points } => distinct_count(points) == 1,
            ClosedSetRep::Box { lower, upper } => lower == upper,
            ClosedSetRep::Union { members } => members.len() == 1 && members[0].is_affine(),
            _ => false,
        }
    }

    /// True when convexity is known from the representation alone.
    pub fn is_convex(&self) -> bool {
        match self {
            ClosedSetRep::Box { .. } | ClosedSetRep::Affine { .. } | ClosedSetRep::Polytope { .. } => {
                true
            }
            ClosedSetRep::FinitePointCloud { points } => distinct_count(points) == 1,
            ClosedSetRep::Sphere { .. } => false,
            ClosedSetRep::Union { members } => members.len() == 1 && members[0].is_convex(),
        }
    }

    /// Regularity class of `½·dist²(·, F)` implied by the set's geometry:
    /// smooth for affine sets, C^{1,1} for other convex sets, C⁰ otherwise.
    pub fn expected_smoothness(&self) -> Smoothness {
        if self.is_affine() {
            Smoothness::CInf
        } else if self.is_convex() {
            Smoothness::C11
        } else {
            Smoothness::C0
        }
    }

    /// Metric projection of `x` onto the set.
    pub fn project(&self, x: &Point) -> Result<ProjectionResult> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(match self {
            ClosedSetRep::FinitePointCloud { points } => {
                let candidates: Vec<(Point, f64, bool)> = points
                    .iter()
                    .map(|p| {
                        let p = point(p);
                        let d = (x - &p).norm();
                        (p, d, true)
                    })
                    .collect();
                merge_candidates(candidates)
            }
            ClosedSetRep::Box { lower, upper } => {
                let p = Point::from_iterator(
                    x.len(),
                    x.iter()
                        .zip(lower.iter().zip(upper))
                        .map(|(v, (l, u))| v.clamp(*l, *u)),
                );
                ProjectionResult::single(p, x)
            }
            ClosedSetRep::Sphere { center, radius } => {
                let c = point(center);
                let v = x - &c;
                let rho = v.norm();
                if rho == 0.0 {
                    ProjectionResult {
                        nearest: sphere_center_representatives(&c, *radius),
                        distance: *radius,
                        unique: false,
                    }
                } else {
                    ProjectionResult::single(&c + v * (*radius / rho), x)
                }
            }
            ClosedSetRep::Affine { basepoint, basis } => {
                let base = point(basepoint);
                let d = x - &base;
                let mut p = base;
                for b in basis {
                    let b = point(b);
                    p += &b * b.dot(&d);
                }
                ProjectionResult::single(p, x)
            }
            ClosedSetRep::Polytope {
                a,
                b,
                feasible_point,
            } => {
                let p = polytope::project(a, b, &point(feasible_point), x);
                ProjectionResult::single(p, x)
            }
            ClosedSetRep::Union { members } => {
                let mut candidates = Vec::new();
                for m in members {
                    let r = m.project(x)?;
                    let unique = r.unique;
                    let d = r.distance;
                    candidates.extend(r.nearest.into_iter().map(|p| (p, d, unique)));
                }
                merge_candidates(candidates)
            }
        })
    }

    /// Euclidean distance from `x` to the set.
    pub fn distance(&self, x: &Point) -> Result<f64> {
        Ok(self.project(x)?.distance)
    }

    fn nonsmooth_loci(&self) -> Vec<NonSmoothLocus> {
        match self {
            ClosedSetRep::Box { lower, upper } => {
                let n = lower.len();
                let mut loci = Vec::new();
                for i in 0..n {
                    for v in [lower[i], upper[i]] {
                        let mut coords = vec![None; n];
                        coords[i] = Some(v);
                        let locus = NonSmoothLocus { coords };
                        if !loci.contains(&locus) {
                            loci.push(locus);
                        }
                    }
                }
                loci
            }
            ClosedSetRep::Sphere { center, .. } => vec![NonSmoothLocus::point(center)],
            ClosedSetRep::Union { members } if members.len() == 1 => members[0].nonsmooth_loci(),
            _ => Vec::new(),
        }
    }
}

fn distinct_count(points: &[Vec<f64>]) -> usize {
    let mut reps: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !reps.contains(&p) {
            reps.push(p);
        }
    }
    reps.len()
}

fn sphere_center_representatives(c: &Point, radius: f64) -> Vec<Point> {
    let n = c.len();
    if n == 1 {
        return vec![c.add_scalar(-radius), c.add_scalar(radius)];
    }
    (0..SPHERE_CENTER_REPRESENTATIVES)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / SPHERE_CENTER_REPRESENTATIVES as f64;
            let mut p = c.clone();
            p[0] += radius * theta.cos();
            p[1] += radius * theta.sin();
            p
        })
        .collect()
}

/// Keeps the nearest candidates (within the tie tolerance) and merges
/// representatives closer than [`MERGE_RADIUS`].
fn merge_candidates(candidates: Vec<(Point, f64, bool)>) -> ProjectionResult {
    let dmin = candidates
        .iter()
        .map(|c| c.1)
        .fold(f64::INFINITY, f64::min);
    let tol = TIE_REL * (1.0 + dmin);
    let mut reps: Vec<Point> = Vec::new();
    let mut all_unique = true;
    for (p, d, unique) in candidates {
        if d > dmin + tol {
            continue;
        }
        all_unique &= unique;
        if !reps.iter().any(|q| (q - &p).norm() < MERGE_RADIUS) {
            reps.push(p);
        }
    }
    ProjectionResult {
        unique: all_unique && reps.len() == 1,
        distance: dmin,
        nearest: reps,
    }
}

/// The field `x ↦ ½·dist(x, F)²`.
///
/// Where the projection is unique the gradient is `x − proj_F(x)`; elsewhere
/// it falls back to central differences of the value.
pub fn dist_sq_field(set: &ClosedSetRep) -> Result<ScalarField> {
    set.validate()?;
    let n = set.dim();
    let s_value = set.clone();
    let s_grad = set.clone();
    let steps = crate::field::FdSteps::default();
    let value = move |x: &Point| {
        s_value
            .distance(x)
            .map_or(f64::NAN, |d| 0.5 * d * d)
    };
    let value_for_fd = value.clone();
    let gradient = move |x: &Point| match s_grad.project(x) {
        Ok(r) if r.unique => x - r.point(),
        Ok(_) => {
            let mut g = DVector::zeros(x.len());
            let mut probe = x.clone();
            for i in 0..x.len() {
                let h = steps.gradient * x[i].abs().max(1.0);
                probe[i] = x[i] + h;
                let up = value_for_fd(&probe);
                probe[i] = x[i] - h;
                let down = value_for_fd(&probe);
                probe[i] = x[i];
                g[i] = (up - down) / (2.0 * h);
            }
            g
        }
        Err(_) => DVector::from_element(x.len(), f64::NAN),
    };

    let mut field = ScalarField::new(format!("half_sq_dist_set({})", set.variant_name()), n, value)
        .with_gradient(gradient)
        .with_smoothness(set.expected_smoothness())
        .with_nonsmooth(set.nonsmooth_loci())
        .with_known_inf(0.0)
        .with_pl_constant(2.0)
        .with_known_argmin("F")
        .with_dist_factor(0.5);

    match set {
        ClosedSetRep::Box { lower, upper } => {
            let (lower, upper) = (lower.clone(), upper.clone());
            field = field.with_hessian(move |x| {
                DMatrix::from_diagonal(&DVector::from_iterator(
                    x.len(),
                    x.iter()
                        .zip(lower.iter().zip(&upper))
                        .map(|(v, (l, u))| if v < l || v > u { 1.0 } else { 0.0 }),
                ))
            });
        }
        ClosedSetRep::Affine { basis, .. } => {
            let mut h = DMatrix::identity(n, n);
            for b in basis {
                let b = point(b);
                h -= &b * b.transpose();
            }
            field = field.with_hessian(move |_| h.clone());
        }
        ClosedSetRep::FinitePointCloud { .. } => {
            field = field.with_hessian(move |_| DMatrix::identity(n, n));
        }
        ClosedSetRep::Sphere { center, radius } => {
            let (c, r) = (point(center), *radius);
            field = field.with_hessian(move |x| {
                let v = x - &c;
                let rho = v.norm();
                if rho == 0.0 {
                    return DMatrix::from_element(n, n, f64::NAN);
                }
                let u = v / rho;
                let uu = &u * u.transpose();
                &uu + (DMatrix::identity(n, n) - &uu) * ((rho - r) / rho)
            });
        }
        _ => {}
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_radial_projection() {
        let s = ClosedSetRep::sphere(&[0.0, 0.0], 1.0).unwrap();
        let r = s.project(&point(&[2.0, 0.0])).unwrap();
        assert!(r.unique);
        assert_eq!(r.point(), &point(&[1.0, 0.0]));
        assert_eq!(r.distance, 1.0);
    }

    #[test]
    fn sphere_center_is_not_unique() {
        let s = ClosedSetRep::sphere(&[0.0, 0.0], 1.0).unwrap();
        let r = s.project(&point(&[0.0, 0.0])).unwrap();
        assert!(!r.unique);
        assert_eq!(r.distance, 1.0);
        assert_eq!(r.nearest.len(), SPHERE_CENTER_REPRESENTATIVES);
        for p in &r.nearest {
            assert!((p.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn box_clamp() {
        let b = ClosedSetRep::boxed(&[0.0], &[1.0]).unwrap();
        let r = b.project(&point(&[2.0])).unwrap();
        assert_eq!(r.point(), &point(&[1.0]));
        assert_eq!(r.distance, 1.0);
    }

    #[test]
    fn point_cloud_tie() {
        let c = ClosedSetRep::point_cloud(&[&[0.0, 0.0], &[2.0, 0.0]]).unwrap();
        let r = c.project(&point(&[1.0, 5.0])).unwrap();
        assert!(!r.unique);
        assert_eq!(r.nearest.len(), 2);
        let r = c.project(&point(&[0.5, 1.0])).unwrap();
        assert!(r.unique);
        assert_eq!(r.point(), &point(&[0.0, 0.0]));
    }

    #[test]
    fn affine_projection_and_validation() {
        let line = ClosedSetRep::affine(&[0.0, 0.0], &[&[1.0, 0.0]]).unwrap();
        let r = line.project(&point(&[3.0, -2.0])).unwrap();
        assert_eq!(r.point(), &point(&[3.0, 0.0]));
        assert!(ClosedSetRep::affine(&[0.0, 0.0], &[&[1.0, 1.0]]).is_err());
    }

    #[test]
    fn union_collects_ties_across_members() {
        let u = ClosedSetRep::union(vec![
            ClosedSetRep::boxed(&[-2.0], &[-1.0]).unwrap(),
            ClosedSetRep::boxed(&[1.0], &[2.0]).unwrap(),
        ])
        .unwrap();
        let r = u.project(&point(&[0.0])).unwrap();
        assert!(!r.unique);
        assert_eq!(r.nearest.len(), 2);
        let r = u.project(&point(&[0.5])).unwrap();
        assert!(r.unique);
        assert_eq!(r.point(), &point(&[1.0]));
    }

    #[test]
    fn dimension_mismatch() {
        let b = ClosedSetRep::boxed(&[0.0], &[1.0]).unwrap();
        assert!(matches!(
            b.project(&point(&[0.0, 0.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn affine_field_hessian_is_constant() {
        let line = ClosedSetRep::affine(&[0.0, 0.0], &[&[1.0, 0.0]]).unwrap();
        let f = dist_sq_field(&line).unwrap();
        for x in [[0.3, 2.0], [-5.0, 0.1], [1.0, -7.0]] {
            let x = point(&x);
            assert_eq!(f.eval(&x).unwrap(), 0.5 * x[1] * x[1]);
            let h = f.hessian(&x).unwrap();
            assert_eq!(h, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
        }
    }

    #[test]
    fn single_point_field_is_half_norm_sq() {
        let c = ClosedSetRep::point_cloud(&[&[0.0, 0.0]]).unwrap();
        let f = dist_sq_field(&c).unwrap();
        let x = point(&[3.0, 4.0]);
        assert!((f.eval(&x).unwrap() - 12.5).abs() < 1e-12);
        assert_eq!(f.grad(&x).unwrap(), x);
        assert_eq!(f.smoothness(), Smoothness::CInf);
    }

    #[test]
    fn json_schema_round_trip() {
        let s: ClosedSetRep =
            serde_json::from_str(r#"{"variant": "sphere", "center": [0, 0], "radius": 1}"#)
                .unwrap();
        assert_eq!(s, ClosedSetRep::sphere(&[0.0, 0.0], 1.0).unwrap());
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.starts_with(r#"{"variant":"sphere""#));
    }
}
