//! Scalar fields on ℝⁿ with value, gradient and Hessian oracles.
//!
//! A [`ScalarField`] always has a value oracle. Gradient and Hessian oracles
//! are optional; when absent, central finite differences are used. Fields are
//! immutable after construction and cheap to clone (oracles are shared behind
//! `Arc`), so the same field can be evaluated from many worker threads.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = DVector<f64>;

pub type ValueFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&Point) -> Point + Send + Sync>;
pub type HessianFn = Arc<dyn Fn(&Point) -> DMatrix<f64> + Send + Sync>;

/// Default relative step for central-difference gradients.
pub const FD_GRADIENT_STEP: f64 = 1e-6;
/// Default relative step for central-difference Hessians (differences of gradients).
pub const FD_HESSIAN_STEP: f64 = 1e-4;
/// Relative deviation above which an analytic derivative is flagged.
pub const DERIVATIVE_TOLERANCE: f64 = 1e-4;

/// Builds a point from a slice.
pub fn point(coords: &[f64]) -> Point {
    DVector::from_column_slice(coords)
}

/// Declared regularity class of a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Smoothness {
    #[serde(rename = "C0")]
    C0,
    #[serde(rename = "C11")]
    C11,
    #[serde(rename = "C2")]
    C2,
    #[serde(rename = "C_inf")]
    CInf,
}

impl Smoothness {
    /// True for C² and smoother.
    pub fn is_c2(self) -> bool {
        matches!(self, Smoothness::C2 | Smoothness::CInf)
    }

    pub fn label(self) -> &'static str {
        match self {
            Smoothness::C0 => "C0",
            Smoothness::C11 => "C11",
            Smoothness::C2 => "C2",
            Smoothness::CInf => "C_inf",
        }
    }
}

impl fmt::Display for Smoothness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A declared set where a field fails to be smooth.
///
/// Coordinates set to `None` are free, so `{a} × ℝᵏ` is `[Some(a), None, ..]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonSmoothLocus {
    pub coords: Vec<Option<f64>>,
}

impl NonSmoothLocus {
    pub fn point(p: &[f64]) -> Self {
        Self {
            coords: p.iter().copied().map(Some).collect(),
        }
    }

    /// Euclidean distance from `x` to the locus.
    pub fn distance(&self, x: &Point) -> f64 {
        self.coords
            .iter()
            .zip(x.iter())
            .filter_map(|(c, xi)| c.map(|c| (xi - c) * (xi - c)))
            .sum::<f64>()
            .sqrt()
    }

    /// The same locus in a space with `k` extra free trailing coordinates.
    pub fn lifted(&self, k: usize) -> Self {
        let mut coords = self.coords.clone();
        coords.extend(std::iter::repeat_n(None, k));
        Self { coords }
    }
}

/// Finite-difference steps, relative to `max(1, |xᵢ|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSteps {
    pub gradient: f64,
    pub hessian: f64,
}

impl Default for FdSteps {
    fn default() -> Self {
        Self {
            gradient: FD_GRADIENT_STEP,
            hessian: FD_HESSIAN_STEP,
        }
    }
}

/// A twice-differentiable (or declared less regular) map ℝⁿ → ℝ.
#[derive(Clone)]
pub struct ScalarField {
    name: String,
    dim: usize,
    value: ValueFn,
    gradient: Option<GradientFn>,
    hessian: Option<HessianFn>,
    smoothness: Smoothness,
    nonsmooth: Vec<NonSmoothLocus>,
    known_inf: Option<f64>,
    known_pl_constant: Option<f64>,
    known_argmin: Option<String>,
    dist_factor: Option<f64>,
    steps: FdSteps,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("analytic_gradient", &self.gradient.is_some())
            .field("analytic_hessian", &self.hessian.is_some())
            .field("smoothness", &self.smoothness)
            .field("nonsmooth", &self.nonsmooth)
            .field("known_inf", &self.known_inf)
            .field("known_pl_constant", &self.known_pl_constant)
            .field("known_argmin", &self.known_argmin)
            .field("dist_factor", &self.dist_factor)
            .finish()
    }
}

impl ScalarField {
    pub fn new<F>(name: impl Into<String>, dim: usize, value: F) -> Self
    where
        F: Fn(&Point) -> f64 + Send + Sync + 'static,
    {
        assert!(dim >= 1, "scalar field dimension must be positive");
        Self {
            name: name.into(),
            dim,
            value: Arc::new(value),
            gradient: None,
            hessian: None,
            smoothness: Smoothness::CInf,
            nonsmooth: Vec::new(),
            known_inf: None,
            known_pl_constant: None,
            known_argmin: None,
            dist_factor: None,
            steps: FdSteps::default(),
        }
    }

    /// The field identically equal to `c`, with exact zero derivatives.
    pub fn constant(dim: usize, c: f64) -> Self {
        Self::new(format!("constant({c})"), dim, move |_| c)
            .with_gradient(move |_| DVector::zeros(dim))
            .with_hessian(move |_| DMatrix::zeros(dim, dim))
            .with_known_inf(c)
            .with_known_argmin("all of R^n")
    }

    pub fn with_gradient<G>(mut self, g: G) -> Self
    where
        G: Fn(&Point) -> Point + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn with_hessian<H>(mut self, h: H) -> Self
    where
        H: Fn(&Point) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.hessian = Some(Arc::new(h));
        self
    }

    pub(crate) fn with_gradient_arc(mut self, g: Option<GradientFn>) -> Self {
        self.gradient = g;
        self
    }

    pub(crate) fn with_hessian_arc(mut self, h: Option<HessianFn>) -> Self {
        self.hessian = h;
        self
    }

    pub fn with_smoothness(mut self, s: Smoothness) -> Self {
        self.smoothness = s;
        self
    }

    pub fn with_nonsmooth(mut self, loci: Vec<NonSmoothLocus>) -> Self {
        self.nonsmooth = loci;
        self
    }

    pub fn with_known_inf(mut self, inf: f64) -> Self {
        self.known_inf = Some(inf);
        self
    }

    pub fn with_pl_constant(mut self, c: f64) -> Self {
        self.known_pl_constant = Some(c);
        self
    }

    pub fn without_pl_constant(mut self) -> Self {
        self.known_pl_constant = None;
        self
    }

    pub fn with_known_argmin(mut self, description: impl Into<String>) -> Self {
        self.known_argmin = Some(description.into());
        self
    }

    pub fn with_dist_factor(mut self, factor: f64) -> Self {
        self.dist_factor = Some(factor);
        self
    }

    pub fn with_fd_steps(mut self, steps: FdSteps) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn nonsmooth_loci(&self) -> &[NonSmoothLocus] {
        &self.nonsmooth
    }

    pub fn known_inf(&self) -> Option<f64> {
        self.known_inf
    }

    pub fn known_pl_constant(&self) -> Option<f64> {
        self.known_pl_constant
    }

    pub fn known_argmin(&self) -> Option<&str> {
        self.known_argmin.as_deref()
    }

    /// Multiplier in front of dist² for distance-type fields (½ or 1).
    pub fn dist_factor(&self) -> Option<f64> {
        self.dist_factor
    }

    pub fn fd_steps(&self) -> FdSteps {
        self.steps
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn has_analytic_hessian(&self) -> bool {
        self.hessian.is_some()
    }

    pub(crate) fn value_fn(&self) -> ValueFn {
        Arc::clone(&self.value)
    }

    pub(crate) fn gradient_fn(&self) -> Option<GradientFn> {
        self.gradient.clone()
    }

    pub(crate) fn hessian_fn(&self) -> Option<HessianFn> {
        self.hessian.clone()
    }

    fn check_dim(&self, x: &Point) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// f(x).
    pub fn eval(&self, x: &Point) -> Result<f64> {
        self.check_dim(x)?;
        let v = (self.value)(x);
        if !v.is_finite() {
            return Err(non_finite(&self.name, "value", x));
        }
        Ok(v)
    }

    /// ∇f(x): analytic when available, central differences otherwise.
    pub fn grad(&self, x: &Point) -> Result<Point> {
        self.check_dim(x)?;
        let g = match &self.gradient {
            Some(g) => g(x),
            None => self.fd_gradient_unchecked(x),
        };
        if g.iter().any(|v| !v.is_finite()) {
            return Err(non_finite(&self.name, "gradient", x));
        }
        Ok(g)
    }

    /// ∇²f(x), symmetrized: analytic when available, differences of the
    /// gradient otherwise.
    pub fn hessian(&self, x: &Point) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let h = match &self.hessian {
            Some(h) => h(x),
            None => self.fd_hessian(x)?,
        };
        if h.iter().any(|v| !v.is_finite()) {
            return Err(non_finite(&self.name, "hessian", x));
        }
        Ok(symmetrize(h))
    }

    /// Central-difference gradient, ignoring any analytic oracle.
    pub fn fd_gradient(&self, x: &Point) -> Result<Point> {
        self.check_dim(x)?;
        let g = self.fd_gradient_unchecked(x);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(non_finite(&self.name, "finite-difference gradient", x));
        }
        Ok(g)
    }

    fn fd_gradient_unchecked(&self, x: &Point) -> Point {
        let mut g = DVector::zeros(self.dim);
        let mut probe = x.clone();
        for i in 0..self.dim {
            let h = self.steps.gradient * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = (self.value)(&probe);
            probe[i] = x[i] - h;
            let down = (self.value)(&probe);
            probe[i] = x[i];
            g[i] = (up - down) / (2.0 * h);
        }
        g
    }

    /// Central differences of the gradient oracle, symmetrized.
    pub fn fd_hessian(&self, x: &Point) -> Result<DMatrix<f64>> {
        self.fd_hessian_with_step(x, self.steps.hessian)
    }

    /// Same as [`fd_hessian`](Self::fd_hessian) with an explicit relative step.
    pub fn fd_hessian_with_step(&self, x: &Point, step: f64) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let mut h = DMatrix::zeros(self.dim, self.dim);
        let mut probe = x.clone();
        for j in 0..self.dim {
            let step_j = step * x[j].abs().max(1.0);
            probe[j] = x[j] + step_j;
            let up = self.grad(&probe)?;
            probe[j] = x[j] - step_j;
            let down = self.grad(&probe)?;
            probe[j] = x[j];
            h.set_column(j, &((up - down) / (2.0 * step_j)));
        }
        Ok(symmetrize(h))
    }

    /// Distance from `x` to the nearest declared non-smooth locus.
    pub fn distance_to_nonsmooth(&self, x: &Point) -> f64 {
        self.nonsmooth
            .iter()
            .map(|l| l.distance(x))
            .fold(f64::INFINITY, f64::min)
    }
}

fn non_finite(name: &str, what: &str, x: &Point) -> Error {
    Error::NonFiniteValue(format!(
        "{what} of `{name}` at {:?}",
        x.iter().collect::<Vec<_>>()
    ))
}

pub(crate) fn symmetrize(h: DMatrix<f64>) -> DMatrix<f64> {
    let t = h.transpose();
    (h + t) * 0.5
}

/// Outcome of comparing analytic derivatives with finite differences.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeReport {
    pub n_points: usize,
    /// max ‖∇f − ∇_FD f‖ / (1 + ‖∇f‖) over checked points.
    pub max_gradient_deviation: f64,
    /// max ‖H − H_FD‖_F / (1 + ‖H‖_F), when an analytic Hessian exists.
    pub max_hessian_deviation: Option<f64>,
    /// Indices of points whose deviation exceeds the tolerance.
    pub flagged: Vec<usize>,
    /// Indices skipped because a declared non-smooth locus is within 10·h₀.
    pub excluded: Vec<usize>,
    pub pass: bool,
}

/// Compares analytic derivatives against finite differences at `points`.
pub fn validate_derivatives(f: &ScalarField, points: &[Point]) -> Result<DerivativeReport> {
    if !f.has_analytic_gradient() && !f.has_analytic_hessian() {
        return Err(Error::NoAnalyticDerivative(f.name().to_string()));
    }
    let h0 = f.fd_steps().gradient;
    let mut report = DerivativeReport {
        n_points: points.len(),
        max_gradient_deviation: 0.0,
        max_hessian_deviation: f.has_analytic_hessian().then_some(0.0),
        flagged: Vec::new(),
        excluded: Vec::new(),
        pass: true,
    };
    for (i, x) in points.iter().enumerate() {
        let scale = x.amax().max(1.0);
        if f.distance_to_nonsmooth(x) <= 10.0 * h0 * scale {
            report.excluded.push(i);
            continue;
        }
        let mut worst: f64 = 0.0;
        if f.has_analytic_gradient() {
            let g = f.grad(x)?;
            let g_fd = f.fd_gradient(x)?;
            let dev = (&g - &g_fd).norm() / (1.0 + g.norm());
            report.max_gradient_deviation = report.max_gradient_deviation.max(dev);
            worst = worst.max(dev);
        }
        if f.has_analytic_hessian() {
            let h = f.hessian(x)?;
            let h_fd = f.fd_hessian(x)?;
            let dev = (&h - &h_fd).norm() / (1.0 + h.norm());
            if let Some(m) = report.max_hessian_deviation.as_mut() {
                *m = m.max(dev);
            }
            worst = worst.max(dev);
        }
        if worst > DERIVATIVE_TOLERANCE {
            report.flagged.push(i);
        }
    }
    report.pass = report.flagged.is_empty();
    Ok(report)
}

/// Axis-aligned bounds, `lower < upper` componentwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { lower, upper }
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::InvalidParams(
                "box bounds must be nonempty and of equal length".into(),
            ));
        }
        if self
            .lower
            .iter()
            .zip(&self.upper)
            .any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite())
        {
            return Err(Error::InvalidParams(
                "box bounds require finite lower < upper componentwise".into(),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, x: &Point) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// Distance from an interior point to the box boundary (negative outside).
    pub fn depth(&self, x: &Point) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (v - l).min(u - v))
            .fold(f64::INFINITY, f64::min)
    }
}

/// A sampling and certification domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Box(BoxBounds),
    Ball { center: Vec<f64>, radius: f64 },
    /// `{f ≤ threshold}` intersected with a bounding box.
    Sublevel {
        threshold: f64,
        bounding_box: BoxBounds,
    },
}

impl Region {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Region::Box(BoxBounds::cube(dim, lo, hi))
    }

    pub fn dim(&self) -> usize {
        match self {
            Region::Box(b) => b.dim(),
            Region::Ball { center, .. } => center.len(),
            Region::Sublevel { bounding_box, .. } => bounding_box.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Region::Box(b) => b.validate(),
            Region::Ball { center, radius } => {
                if center.is_empty() || !(*radius > 0.0) || !radius.is_finite() {
                    return Err(Error::InvalidParams(
                        "ball needs a nonempty center and radius > 0".into(),
                    ));
                }
                Ok(())
            }
            Region::Sublevel {
                threshold,
                bounding_box,
            } => {
                if !threshold.is_finite() {
                    return Err(Error::InvalidParams("sublevel threshold must be finite".into()));
                }
                bounding_box.validate()
            }
        }
    }

    /// Smallest axis-aligned box containing the region.
    pub fn bounding_box(&self) -> BoxBounds {
        match self {
            Region::Box(b) => b.clone(),
            Region::Ball { center, radius } => BoxBounds::new(
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            Region::Sublevel { bounding_box, .. } => bounding_box.clone(),
        }
    }

    /// Membership test; sublevel regions need the field.
    pub fn contains(&self, x: &Point, f: Option<&ScalarField>) -> bool {
        match self {
            Region::Box(b) => b.contains(x),
            Region::Ball { center, radius } => (x - point(center)).norm() <= *radius,
            Region::Sublevel {
                threshold,
                bounding_box,
            } => {
                bounding_box.contains(x)
                    && f.is_some_and(|f| f.eval(x).is_ok_and(|v| v <= *threshold))
            }
        }
    }

    /// Distance from `x` to the geometric boundary of the region (the
    /// bounding box for sublevel regions); negative outside.
    pub fn depth(&self, x: &Point) -> f64 {
        match self {
            Region::Box(b) => b.depth(x),
            Region::Ball { center, radius } => radius - (x - point(center)).norm(),
            Region::Sublevel { bounding_box, .. } => bounding_box.depth(x),
        }
    }
}
