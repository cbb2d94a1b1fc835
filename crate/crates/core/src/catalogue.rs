//! Named fields with known infimum, PŁ constant, argmin and regularity.
//!
//! | name                    | field                          | tag   | C                      |
//! |-------------------------|--------------------------------|-------|------------------------|
//! | `quadratic_psd`         | xᵀQx                           | C_inf | 4·λ₊min(Q)             |
//! | `half_sq_dist_interval` | ½·dist(x, [a, b])²             | C11   | 2                      |
//! | `half_sq_dist_set`      | ½·dist(x, F)²                  | per F | 2                      |
//! | `graph_residual`        | (y − g(x))²                    | of g  | 4                      |
//! | `cylinder_lift`         | (x, x′) ↦ f(x), x′ ∈ ℝᵏ         | of f  | of f                   |
//! | `sq_dist_sphere`        | dist(x, S(c, r))²              | C0    | 4 away from the center |

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize};

use crate::distance::{dist_sq_field, ClosedSetRep};
use crate::error::{Error, Result};
use crate::expr;
use crate::field::{point, NonSmoothLocus, Point, ScalarField, Smoothness};
use crate::linalg::SortedEigen;

/// Catalogue names, in listing order.
pub const CATALOGUE_NAMES: [&str; 6] = [
    "quadratic_psd",
    "half_sq_dist_interval",
    "half_sq_dist_set",
    "graph_residual",
    "cylinder_lift",
    "sq_dist_sphere",
];

/// Eigenvalues of Q above this are treated as positive, below −this as negative.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// `x ↦ xᵀQx` for a positive semidefinite `Q` (no ½ factor).
pub fn quadratic_psd(q: DMatrix<f64>) -> Result<ScalarField> {
    let n = q.nrows();
    if n == 0 || q.ncols() != n || q.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams(
            "quadratic_psd needs a finite nonempty square Q".into(),
        ));
    }
    let q = (&q + q.transpose()) * 0.5;
    let eig = SortedEigen::new(&q);
    if eig.values[0] < -PSD_TOLERANCE {
        return Err(Error::InvalidParams(format!(
            "quadratic_psd: Q has negative eigenvalue {}",
            eig.values[0]
        )));
    }
    let positive: Vec<f64> = eig.values.iter().copied().filter(|v| *v > PSD_TOLERANCE).collect();
    let rank = positive.len();
    let (qv, qg) = (q.clone(), q.clone());
    let hess = &q * 2.0;
    let mut f = ScalarField::new("quadratic_psd", n, move |x| x.dot(&(&qv * x)))
        .with_gradient(move |x| (&qg * x) * 2.0)
        .with_hessian(move |_| hess.clone())
        .with_smoothness(Smoothness::CInf)
        .with_known_inf(0.0)
        .with_known_argmin(if rank == n {
            "{0}".to_string()
        } else {
            format!("ker(Q), dimension {}", n - rank)
        });
    // ‖2Qx‖² = 4·xᵀQ²x ≥ 4·λ₊min·xᵀQx
    if let Some(lmin) = positive.first() {
        f = f.with_pl_constant(4.0 * lmin);
    }
    Ok(f)
}

/// `x ↦ ½·dist(x, [a, b])²` on ℝ.
pub fn half_sq_dist_interval(a: f64, b: f64) -> Result<ScalarField> {
    if !(a <= b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidParams(
            "half_sq_dist_interval needs finite a <= b".into(),
        ));
    }
    let gap = move |x: f64| {
        if x < a {
            x - a
        } else if x > b {
            x - b
        } else {
            0.0
        }
    };
    Ok(
        ScalarField::new(format!("half_sq_dist_interval({a},{b})"), 1, move |x| {
            0.5 * gap(x[0]) * gap(x[0])
        })
        .with_gradient(move |x| point(&[gap(x[0])]))
        .with_hessian(move |x| {
            let inside = x[0] >= a && x[0] <= b;
            DMatrix::from_element(1, 1, if inside { 0.0 } else { 1.0 })
        })
        .with_smoothness(Smoothness::C11)
        .with_nonsmooth(vec![NonSmoothLocus::point(&[a]), NonSmoothLocus::point(&[b])])
        .with_known_inf(0.0)
        .with_pl_constant(2.0)
        .with_known_argmin(format!("[{a}, {b}]"))
        .with_dist_factor(0.5),
    )
}

/// `x ↦ ½·dist(x, F)²` for a closed set representation.
pub fn half_sq_dist_set(set: &ClosedSetRep) -> Result<ScalarField> {
    dist_sq_field(set)
}

/// `(x, y) ↦ (y − g(x))²` on ℝⁿ⁻¹ × ℝ. The minimizing set is the graph of `g`.
pub fn graph_residual(g: &ScalarField) -> ScalarField {
    let m = g.dim();
    let n = m + 1;
    let residual = move |g: &ScalarField, x: &Point| -> (Point, f64) {
        let base = x.rows(0, m).into_owned();
        let r = x[m] - g.eval(&base).unwrap_or(f64::NAN);
        (base, r)
    };
    let (gv, gg, gh) = (g.clone(), g.clone(), g.clone());
    let smoothness = g.smoothness();
    ScalarField::new(format!("graph_residual({})", g.name()), n, move |x| {
        let (_, r) = residual(&gv, x);
        r * r
    })
    .with_gradient(move |x| {
        let (base, r) = residual(&gg, x);
        let dg = gg.grad(&base).unwrap_or_else(|_| DVector::from_element(m, f64::NAN));
        let mut out = DVector::zeros(n);
        out.rows_mut(0, m).copy_from(&(dg * (-2.0 * r)));
        out[m] = 2.0 * r;
        out
    })
    .with_hessian(move |x| {
        let (base, r) = residual(&gh, x);
        let dg = gh.grad(&base).unwrap_or_else(|_| DVector::from_element(m, f64::NAN));
        let d2g = gh
            .hessian(&base)
            .unwrap_or_else(|_| DMatrix::from_element(m, m, f64::NAN));
        let mut h = DMatrix::zeros(n, n);
        let top = (&dg * dg.transpose() - d2g * r) * 2.0;
        h.view_mut((0, 0), (m, m)).copy_from(&top);
        for i in 0..m {
            h[(i, m)] = -2.0 * dg[i];
            h[(m, i)] = -2.0 * dg[i];
        }
        h[(m, m)] = 2.0;
        h
    })
    .with_smoothness(smoothness)
    .with_nonsmooth(
        g.nonsmooth_loci()
            .iter()
            .map(|l| l.lifted(1))
            .collect(),
    )
    .with_known_inf(0.0)
    // ‖∇f‖² = 4r²(1 + ‖∇g‖²) ≥ 4f
    .with_pl_constant(4.0)
    .with_known_argmin(format!("graph of {}", g.name()))
}

/// `(x, x′) ↦ f(x)` with `x′ ∈ ℝᵏ`; argmin is `argmin(f) × ℝᵏ`.
pub fn cylinder_lift(f: &ScalarField, k: usize) -> Result<ScalarField> {
    if k < 1 {
        return Err(Error::InvalidParams("cylinder_lift needs k >= 1".into()));
    }
    let m = f.dim();
    let n = m + k;
    let (fv, fg, fh) = (f.clone(), f.clone(), f.clone());
    let head = move |x: &Point| x.rows(0, m).into_owned();
    let mut lifted = ScalarField::new(format!("cylinder_lift({},{k})", f.name()), n, move |x| {
        fv.eval(&head(x)).unwrap_or(f64::NAN)
    })
    .with_gradient(move |x| {
        let mut out = DVector::zeros(n);
        match fg.grad(&head(x)) {
            Ok(g) => out.rows_mut(0, m).copy_from(&g),
            Err(_) => out.fill(f64::NAN),
        }
        out
    })
    .with_hessian(move |x| {
        let mut out = DMatrix::zeros(n, n);
        match fh.hessian(&head(x)) {
            Ok(h) => out.view_mut((0, 0), (m, m)).copy_from(&h),
            Err(_) => out.fill(f64::NAN),
        }
        out
    })
    .with_smoothness(f.smoothness())
    .with_nonsmooth(f.nonsmooth_loci().iter().map(|l| l.lifted(k)).collect())
    .with_known_argmin(format!(
        "({}) x R^{k}",
        f.known_argmin().unwrap_or("argmin f")
    ))
    .with_fd_steps(f.fd_steps());
    if let Some(inf) = f.known_inf() {
        lifted = lifted.with_known_inf(inf);
    }
    if let Some(c) = f.known_pl_constant() {
        lifted = lifted.with_pl_constant(c);
    }
    if let Some(d) = f.dist_factor() {
        lifted = lifted.with_dist_factor(d);
    }
    Ok(lifted)
}

/// `x ↦ dist(x, S(c, r))² = (‖x − c‖ − r)²` (no ½ factor).
///
/// PŁ with constant 4 on ℝⁿ ∖ {c}; not differentiable at the center, where
/// the gradient oracle returns zero.
pub fn sq_dist_sphere(center: &[f64], radius: f64) -> Result<ScalarField> {
    if center.is_empty() || !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidParams(
            "sq_dist_sphere needs a nonempty center and radius > 0".into(),
        ));
    }
    let n = center.len();
    let c = point(center);
    let (cv, cg, ch) = (c.clone(), c.clone(), c);
    Ok(
        ScalarField::new(format!("sq_dist_sphere(r={radius})"), n, move |x| {
            let d = (x - &cv).norm() - radius;
            d * d
        })
        .with_gradient(move |x| {
            let v = x - &cg;
            let rho = v.norm();
            if rho == 0.0 {
                return DVector::zeros(n);
            }
            v * (2.0 * (rho - radius) / rho)
        })
        .with_hessian(move |x| {
            let v = x - &ch;
            let rho = v.norm();
            if rho == 0.0 {
                return DMatrix::from_element(n, n, f64::NAN);
            }
            let u = v / rho;
            let uu = &u * u.transpose();
            (&uu + (DMatrix::identity(n, n) - &uu) * ((rho - radius) / rho)) * 2.0
        })
        .with_smoothness(Smoothness::C0)
        .with_nonsmooth(vec![NonSmoothLocus::point(center)])
        .with_known_inf(0.0)
        .with_pl_constant(4.0)
        .with_known_argmin(format!("sphere of radius {radius}"))
        .with_dist_factor(1.0),
    )
}

/// Parameters of a catalogue entry, as they appear in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "catalogue", rename_all = "snake_case", deny_unknown_fields)]
pub enum CatalogueSpec {
    QuadraticPsd { q: Vec<Vec<f64>> },
    HalfSqDistInterval { a: f64, b: f64 },
    HalfSqDistSet { set: ClosedSetRep },
    GraphResidual { g: Box<FieldSpec> },
    CylinderLift { base: Box<FieldSpec>, k: usize },
    SqDistSphere { center: Vec<f64>, radius: f64 },
}

/// A field given either by catalogue name and parameters or as an expression.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Catalogue(CatalogueSpec),
    Expr { expr: String, dim: usize },
}

impl<'de> Deserialize<'de> for FieldSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let v = serde_json::Value::deserialize(d)?;
        let obj = v
            .as_object()
            .ok_or_else(|| D::Error::custom("field spec must be an object"))?;
        match (obj.get("catalogue"), obj.get("expr")) {
            (Some(_), Some(_)) => Err(D::Error::custom(
                "field spec must have exactly one of `catalogue` or `expr`",
            )),
            (None, None) => Err(D::Error::custom(
                "field spec needs a `catalogue` name or an `expr`",
            )),
            (Some(name), None) => {
                let name = name
                    .as_str()
                    .ok_or_else(|| D::Error::custom("`catalogue` must be a string"))?;
                if !CATALOGUE_NAMES.contains(&name) {
                    return Err(D::Error::custom(format!("unknown catalogue name `{name}`")));
                }
                serde_json::from_value(v.clone())
                    .map(FieldSpec::Catalogue)
                    .map_err(|e| D::Error::custom(format!("catalogue `{name}`: {e}")))
            }
            (None, Some(_)) => {
                #[derive(Deserialize)]
                #[serde(deny_unknown_fields)]
                struct ExprSpec {
                    expr: String,
                    dim: usize,
                }
                let e: ExprSpec = serde_json::from_value(v.clone()).map_err(D::Error::custom)?;
                Ok(FieldSpec::Expr {
                    expr: e.expr,
                    dim: e.dim,
                })
            }
        }
    }
}

impl FieldSpec {
    pub fn build(&self) -> Result<ScalarField> {
        match self {
            FieldSpec::Expr { expr, dim } => {
                if *dim < 1 {
                    return Err(Error::InvalidParams("expression dim must be >= 1".into()));
                }
                expr::field_from_str(expr, *dim)
            }
            FieldSpec::Catalogue(spec) => spec.build(),
        }
    }
}

impl CatalogueSpec {
    pub fn build(&self) -> Result<ScalarField> {
        match self {
            CatalogueSpec::QuadraticPsd { q } => {
                let n = q.len();
                if n == 0 || q.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidParams("quadratic_psd: q must be square".into()));
                }
                quadratic_psd(DMatrix::from_fn(n, n, |i, j| q[i][j]))
            }
            CatalogueSpec::HalfSqDistInterval { a, b } => half_sq_dist_interval(*a, *b),
            CatalogueSpec::HalfSqDistSet { set } => half_sq_dist_set(set),
            CatalogueSpec::GraphResidual { g } => Ok(graph_residual(&g.build()?)),
            CatalogueSpec::CylinderLift { base, k } => cylinder_lift(&base.build()?, *k),
            CatalogueSpec::SqDistSphere { center, radius } => sq_dist_sphere(center, *radius),
        }
    }
}

/// Builds the catalogue entry `name` from JSON parameters.
pub fn catalogue(name: &str, params: &serde_json::Value) -> Result<ScalarField> {
    if !CATALOGUE_NAMES.contains(&name) {
        return Err(Error::UnknownCatalogueName(name.to_string()));
    }
    let mut obj = params.as_object().cloned().unwrap_or_default();
    obj.insert("catalogue".into(), serde_json::Value::String(name.to_string()));
    let spec: CatalogueSpec = serde_json::from_value(serde_json::Value::Object(obj))
        .map_err(|e| Error::InvalidParams(format!("{name}: {e}")))?;
    spec.build()
}

/// Parameter schema strings for each catalogue entry, in listing order.
pub fn parameter_schemas() -> [(&'static str, &'static str); 6] {
    [
        ("quadratic_psd", r#"{"q": [[f64]]}  (PSD, eigenvalues >= -1e-10)"#),
        ("half_sq_dist_interval", r#"{"a": f64, "b": f64}  (a <= b)"#),
        ("half_sq_dist_set", r#"{"set": ClosedSetRep}"#),
        ("graph_residual", r#"{"g": FieldSpec of dim n-1}"#),
        ("cylinder_lift", r#"{"base": FieldSpec, "k": usize >= 1}"#),
        ("sq_dist_sphere", r#"{"center": [f64], "radius": f64 > 0}"#),
    ]
}

/// `sin` on ℝ with analytic derivatives, a convenient `g` for `graph_residual`.
pub fn sine() -> ScalarField {
    ScalarField::new("sin", 1, |x| x[0].sin())
        .with_gradient(|x| point(&[x[0].cos()]))
        .with_hessian(|x| DMatrix::from_element(1, 1, -x[0].sin()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::validate_derivatives;
    use crate::sampling::sample_region;
    use crate::field::Region;
    use serde_json::json;

    fn samples(dim: usize, lo: f64, hi: f64, n: usize) -> Vec<Point> {
        sample_region(&Region::cube(dim, lo, hi), n, 3, None).unwrap()
    }

    #[test]
    fn quadratic_identity_constant() {
        let f = quadratic_psd(DMatrix::identity(2, 2)).unwrap();
        assert_eq!(f.known_pl_constant(), Some(4.0));
        assert_eq!(f.eval(&point(&[1.0, 2.0])).unwrap(), 5.0);
    }

    #[test]
    fn quadratic_rejects_indefinite() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(quadratic_psd(q), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn interval_values() {
        let f = half_sq_dist_interval(0.0, 1.0).unwrap();
        assert_eq!(f.eval(&point(&[2.0])).unwrap(), 0.5);
        assert_eq!(f.grad(&point(&[2.0])).unwrap()[0], 1.0);
        assert_eq!(f.hessian(&point(&[0.5])).unwrap()[(0, 0)], 0.0);
        assert!(half_sq_dist_interval(1.0, 0.0).is_err());
    }

    #[test]
    fn interval_validation_excludes_kinks() {
        let f = half_sq_dist_interval(0.0, 1.0).unwrap();
        let r = validate_derivatives(&f, &[point(&[1.0 + 1e-7]), point(&[3.0])]).unwrap();
        assert_eq!(r.excluded, vec![0]);
        assert!(r.pass);
    }

    #[test]
    fn graph_residual_of_sine() {
        let f = graph_residual(&sine());
        assert_eq!(f.eval(&point(&[0.0, 0.0])).unwrap(), 0.0);
        let h = f.hessian(&point(&[0.0, 0.0])).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]));
    }

    #[test]
    fn cylinder_lift_shape() {
        let base = quadratic_psd(DMatrix::from_element(1, 1, 0.5)).unwrap();
        let f = cylinder_lift(&base, 1).unwrap();
        assert_eq!(f.dim(), 2);
        assert_eq!(f.known_pl_constant(), Some(2.0));
        for x in samples(2, -2.0, 2.0, 50) {
            assert_eq!(f.eval(&x).unwrap(), 0.5 * x[0] * x[0]);
            assert_eq!(f.grad(&x).unwrap()[1], 0.0);
        }
        assert!(cylinder_lift(&base, 0).is_err());
    }

    #[test]
    fn sphere_metadata() {
        let f = sq_dist_sphere(&[0.0, 0.0], 1.0).unwrap();
        assert_eq!(f.nonsmooth_loci(), &[NonSmoothLocus::point(&[0.0, 0.0])]);
        assert_eq!(f.eval(&point(&[0.0, 0.0])).unwrap(), 1.0);
        assert!(sq_dist_sphere(&[0.0], 0.0).is_err());
    }

    #[test]
    fn analytic_derivatives_match_fd() {
        let box_set = ClosedSetRep::boxed(&[0.0, -1.0], &[1.0, 0.5]).unwrap();
        let fields = vec![
            quadratic_psd(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0])).unwrap(),
            half_sq_dist_interval(0.0, 1.0).unwrap(),
            graph_residual(&sine()),
            cylinder_lift(&graph_residual(&sine()), 2).unwrap(),
            sq_dist_sphere(&[0.5, -0.5], 1.0).unwrap(),
            half_sq_dist_set(&box_set).unwrap(),
        ];
        for f in fields {
            let pts: Vec<Point> = samples(f.dim(), -2.0, 2.0, 200)
                .into_iter()
                .filter(|x| f.distance_to_nonsmooth(x) > 1e-3)
                .collect();
            for x in &pts {
                let g = f.grad(x).unwrap();
                let g_fd = f.fd_gradient(x).unwrap();
                assert!(
                    (&g - &g_fd).norm() <= 1e-4 * (1.0 + g.norm()),
                    "{} at {x:?}",
                    f.name()
                );
            }
        }
    }

    #[test]
    fn catalogue_by_name() {
        let f = catalogue("half_sq_dist_interval", &json!({"a": 0.0, "b": 1.0})).unwrap();
        assert_eq!(f.eval(&point(&[-1.0])).unwrap(), 0.5);
        assert_eq!(
            catalogue("nope", &json!({})).unwrap_err(),
            Error::UnknownCatalogueName("nope".into())
        );
        assert!(matches!(
            catalogue("quadratic_psd", &json!({"q": [[1.0, 0.0], [0.0, -2.0]]})),
            Err(Error::InvalidParams(_))
        ));
        assert!(matches!(
            catalogue("sq_dist_sphere", &json!({"center": [0.0], "radius": -1.0})),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn field_spec_json() {
        let spec: FieldSpec = serde_json::from_value(json!({
            "catalogue": "graph_residual",
            "g": {"expr": "sin(x1)", "dim": 1}
        }))
        .unwrap();
        let f = spec.build().unwrap();
        assert_eq!(f.dim(), 2);
        let err = serde_json::from_value::<FieldSpec>(json!({"catalogue": "bogus"})).unwrap_err();
        assert!(err.to_string().contains("unknown catalogue name"));
        assert!(serde_json::from_value::<FieldSpec>(json!({"expr": "x1", "dim": 1, "catalogue": "quadratic_psd"})).is_err());
    }

    #[test]
    fn expression_graph_matches_catalogue() {
        let wrapped = expr::field_from_str("(x2 - sin(x1))^2", 2).unwrap();
        let cat = graph_residual(&sine());
        for x in samples(2, -3.0, 3.0, 50) {
            let a = wrapped.eval(&x).unwrap();
            let b = cat.eval(&x).unwrap();
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }
}
