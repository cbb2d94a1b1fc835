//! The minimizing set `K = argmin f`: multistart location, Hessian spectra
//! on `K`, kernel-projection charts, connectivity, and the singleton verdict
//! for C² PŁ fields with bounded argmin.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::check_pl_claim;
use crate::error::{Error, Result};
use crate::field::{Point, Region, ScalarField, Smoothness};
use crate::flow::{flow_limit, FlowConfig, DEFAULT_EPS_CHECK};
use crate::linalg::{sym_op_norm, SortedEigen};
use crate::sampling::{sample_region, Halton};

/// Default radius below which two located minimizers are the same point.
pub const DEFAULT_DEDUP_RADIUS: f64 = 1e-5;
/// Lower bound on the adaptive single-linkage radius.
pub const MIN_LINK_RADIUS: f64 = 1e-4;
/// Largest kernel-chart step `t₀`; the probe also uses `t₀/2, …, t₀/2⁷`.
pub const DEFAULT_T0: f64 = 1e-2;
pub const CHART_HALVINGS: usize = 7;
/// Required margin of the log-log slope above 2.
pub const SLOPE_MARGIN: f64 = 0.3;
/// Ball samples used to bound the Hessian variation around a chart center.
pub const CHART_BALL_SAMPLES: usize = 64;
const MIN_CHART_RADIUS: f64 = 1e-6;
/// Samples used by [`build_model`] to check the PŁ claim on the region.
pub const MODEL_PL_SAMPLES: usize = 256;
pub const THEOREM_TENSION: &str = "theorem tension: check smoothness/region/convergence";
pub const BOUNDEDNESS_CAVEAT: &str =
    "boundedness of K is judged from located points only (interior of the region at depth > r_link)";

/// Minimizer tolerance on the f-gap, relative to the infimum's scale.
pub fn default_tol_min(inf_f: f64) -> f64 {
    1e-12 * (1.0 + inf_f.abs())
}

/// Flows `n_starts` low-discrepancy starts of `region` to their limits and
/// keeps converged limits whose f-gap is below the minimizer tolerance,
/// dropping any point within `dedup_radius` of an earlier one.
pub fn locate_minimizers(
    f: &ScalarField,
    region: &Region,
    n_starts: usize,
    cfg: &FlowConfig,
    dedup_radius: f64,
    seed: u64,
) -> Result<Vec<Point>> {
    if n_starts < 1 {
        return Err(Error::InvalidParams("n_starts must be >= 1".into()));
    }
    let starts = sample_region(region, n_starts, seed, Some(f))?;
    let limits: Vec<Option<(Point, f64)>> = starts
        .par_iter()
        .map(|x0| -> Result<Option<(Point, f64)>> {
            match flow_limit(f, x0, cfg) {
                Ok(p) => {
                    let v = f.eval(&p)?;
                    Ok(Some((p, v)))
                }
                Err(Error::NotConverged { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let converged: Vec<(Point, f64)> = limits.into_iter().flatten().collect();
    if converged.is_empty() {
        return Err(Error::NoMinimizerFound);
    }
    let inf_f = cfg
        .inf_f
        .or(f.known_inf())
        .unwrap_or_else(|| converged.iter().map(|c| c.1).fold(f64::INFINITY, f64::min));
    let tol = default_tol_min(inf_f);
    let mut kept: Vec<Point> = Vec::new();
    for (p, v) in converged {
        if v - inf_f >= tol {
            continue;
        }
        if kept.iter().all(|q| (q - &p).norm() >= dedup_radius) {
            kept.push(p);
        }
    }
    if kept.is_empty() {
        return Err(Error::NoMinimizerFound);
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapFailure {
    pub index: usize,
    pub point: Vec<f64>,
    pub eigenvalue: f64,
    /// `"negative"` or `"in_gap"`.
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub c: f64,
    pub tol_zero: f64,
    pub gap_edge: f64,
    pub tol_psd: f64,
    pub eigenvalues: Vec<Vec<f64>>,
    pub failures: Vec<GapFailure>,
    pub gap_ok: bool,
}

fn spectra(f: &ScalarField, points: &[Point]) -> Result<Vec<Vec<f64>>> {
    points
        .par_iter()
        .map(|p| Ok(SortedEigen::new(&f.hessian(p)?).values))
        .collect()
}

/// Checks that Hessian spectra on `K` avoid the open gap `(C/4, C/2)` and
/// are positive semidefinite.
pub fn hessian_gap_check(f: &ScalarField, points: &[Point], c: f64) -> Result<GapReport> {
    let eigenvalues = spectra(f, points)?;
    let tol_zero = c / 4.0;
    let gap_edge = c / 2.0;
    let tol_psd = 1e-6 * c;
    let mut failures = Vec::new();
    for (i, values) in eigenvalues.iter().enumerate() {
        for &v in values {
            let kind = if v <= -tol_psd {
                "negative"
            } else if v > tol_zero && v < gap_edge * (1.0 - DEFAULT_EPS_CHECK) {
                "in_gap"
            } else {
                continue;
            };
            failures.push(GapFailure {
                index: i,
                point: points[i].iter().copied().collect(),
                eigenvalue: v,
                kind: kind.to_string(),
            });
        }
    }
    Ok(GapReport {
        c,
        tol_zero,
        gap_edge,
        tol_psd,
        gap_ok: failures.is_empty(),
        eigenvalues,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub threshold: f64,
    pub ranks: Vec<usize>,
    pub constant_rank: bool,
    pub common_rank: Option<usize>,
    /// Ranks recomputed at half the threshold agree with `ranks`.
    pub threshold_robust: bool,
}

fn rank_at(values: &[f64], threshold: f64) -> usize {
    values.iter().filter(|v| **v >= threshold).count()
}

/// Hessian rank (eigenvalues ≥ C/4) at each point, and whether it is constant.
pub fn constant_rank_check(f: &ScalarField, points: &[Point], c: f64) -> Result<RankReport> {
    if points.is_empty() {
        return Err(Error::InvalidParams("constant_rank_check needs a point".into()));
    }
    let eigenvalues = spectra(f, points)?;
    Ok(rank_report(&eigenvalues, c))
}

fn rank_report(eigenvalues: &[Vec<f64>], c: f64) -> RankReport {
    let threshold = c / 4.0;
    let ranks: Vec<usize> = eigenvalues.iter().map(|v| rank_at(v, threshold)).collect();
    let half: Vec<usize> = eigenvalues.iter().map(|v| rank_at(v, threshold / 2.0)).collect();
    let constant_rank = ranks.windows(2).all(|w| w[0] == w[1]);
    RankReport {
        threshold,
        common_rank: constant_rank.then(|| ranks[0]),
        constant_rank,
        threshold_robust: ranks == half,
        ranks,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeProbe {
    pub direction: Vec<f64>,
    pub steps: Vec<f64>,
    pub values: Vec<f64>,
    /// Least-squares slope of `log f(x + tu) − log f(x)` against `log t`;
    /// `None` when `f` is flat along `u`.
    pub slope: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartReport {
    pub center: Vec<f64>,
    pub radius_requested: f64,
    /// Radius on which `‖H(y) − H(x)‖ ≤ C/4` held for every sampled `y`.
    pub radius_used: f64,
    pub max_hessian_variation: f64,
    pub kernel_dim: usize,
    pub kernel_basis: Vec<Vec<f64>>,
    pub n_neighbors: usize,
    pub injective: bool,
    /// Indices of two minimizers in the ball with coincident projections.
    pub injectivity_witness: Option<(usize, usize)>,
    pub slopes: Vec<SlopeProbe>,
    pub min_slope: Option<f64>,
    pub tangency_ok: bool,
    pub pass: bool,
}

/// First pair of `points` inside `B(center, r)` whose orthogonal projections
/// onto the columns of `kernel` are closer than `dedup_radius`.
pub fn projection_collision(
    points: &[Point],
    center: &Point,
    kernel: &DMatrix<f64>,
    r: f64,
    dedup_radius: f64,
) -> Option<(usize, usize)> {
    let inside: Vec<(usize, Point)> = points
        .iter()
        .enumerate()
        .filter(|(_, p)| (*p - center).norm() <= r)
        .map(|(i, p)| (i, kernel.transpose() * (p - center)))
        .collect();
    for (a, (i, pi)) in inside.iter().enumerate() {
        for (j, pj) in &inside[a + 1..] {
            if (pi - pj).norm() < dedup_radius {
                return Some((*i, *j));
            }
        }
    }
    None
}

fn ball_samples(center: &Point, r: f64, n: usize) -> Vec<Point> {
    let dim = center.len();
    let mut seq = Halton::new(dim, 0);
    let mut out = Vec::with_capacity(n);
    let mut draws = 0;
    while out.len() < n && draws < 1000 * n {
        draws += 1;
        let u = seq.next_unit();
        let y = Point::from_iterator(dim, u.iter().map(|v| 2.0 * v - 1.0));
        if y.norm() <= 1.0 {
            out.push(center + y * r);
        }
    }
    out
}

fn fit_slope(ts: &[f64], values: &[f64], base: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(values)
        .filter(|(_, v)| **v - base > 0.0)
        .map(|(t, v)| (t.ln(), (v - base).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Probes the kernel chart of `K` at `x`.
///
/// The radius is halved until the sampled Hessian variation in the ball is
/// at most C/4. Injectivity of the projection onto `Ker H(x)` is then checked
/// on the minimizers in the ball, and each kernel direction `u` is tested for
/// `f(x + tu) − f(x) = o(t²)` via the log-log slope over `t₀/2ᵏ`.
pub fn kernel_chart_probe(
    f: &ScalarField,
    x: &Point,
    points: &[Point],
    r: f64,
    c: f64,
    dedup_radius: f64,
) -> Result<ChartReport> {
    let hx = f.hessian(x)?;
    let eig = SortedEigen::new(&hx);
    let kernel = eig.select(|v| v < c / 4.0);
    if kernel.ncols() == 0 {
        return Err(Error::KernelEmpty);
    }

    let mut radius = r;
    let max_variation = loop {
        if radius < MIN_CHART_RADIUS {
            return Err(Error::RadiusNotFound);
        }
        let mut probes = ball_samples(x, radius, CHART_BALL_SAMPLES);
        probes.extend(points.iter().filter(|p| (*p - x).norm() <= radius).cloned());
        let variation = probes
            .par_iter()
            .map(|y| Ok(sym_op_norm(&(f.hessian(y)? - &hx))))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        if variation <= c / 4.0 {
            break variation;
        }
        radius /= 2.0;
    };

    let n_neighbors = points.iter().filter(|p| (*p - x).norm() <= radius).count();
    let witness = projection_collision(points, x, &kernel, radius, dedup_radius);

    let base = f.eval(x)?;
    let steps: Vec<f64> = (0..=CHART_HALVINGS)
        .map(|k| DEFAULT_T0 / 2f64.powi(k as i32))
        .collect();
    let mut slopes = Vec::new();
    for u in kernel.column_iter() {
        let u = u.into_owned();
        let values = steps
            .iter()
            .map(|t| f.eval(&(x + &u * *t)))
            .collect::<Result<Vec<f64>>>()?;
        let slope = fit_slope(&steps, &values, base);
        let flat = values.iter().all(|v| *v - base <= 0.0);
        slopes.push(SlopeProbe {
            direction: u.iter().copied().collect(),
            pass: flat || slope.is_some_and(|s| s > 2.0 + SLOPE_MARGIN),
            steps: steps.clone(),
            values,
            slope,
        });
    }
    let min_slope = slopes
        .iter()
        .filter_map(|s| s.slope)
        .fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.min(s))));
    let tangency_ok = slopes.iter().all(|s| s.pass);
    Ok(ChartReport {
        center: x.iter().copied().collect(),
        radius_requested: r,
        radius_used: radius,
        max_hessian_variation: max_variation,
        kernel_dim: kernel.ncols(),
        kernel_basis: kernel
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect(),
        n_neighbors,
        injective: witness.is_none(),
        injectivity_witness: witness,
        min_slope,
        tangency_ok,
        pass: witness.is_none() && tangency_ok,
        slopes,
    })
}

/// Single-linkage components at radius `r_link`, each sorted, ordered by
/// smallest member.
pub fn components(points: &[Point], r_link: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if (&points[i] - &points[j]).norm() <= r_link {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut index_of_root = vec![usize::MAX; n];
    for i in 0..n {
        let r = root(&mut parent, i);
        if index_of_root[r] == usize::MAX {
            index_of_root[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[index_of_root[r]].push(i);
    }
    groups
}

/// Default linkage radius: 3× the median nearest-neighbor distance, at least 1e-4.
pub fn default_link_radius(points: &[Point]) -> f64 {
    if points.len() < 2 {
        return MIN_LINK_RADIUS;
    }
    let mut nn: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| (p - q).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    nn.sort_by(f64::total_cmp);
    (3.0 * nn[nn.len() / 2]).max(MIN_LINK_RADIUS)
}

fn diameter(points: &[Point], members: &[usize]) -> f64 {
    let mut d: f64 = 0.0;
    for (a, i) in members.iter().enumerate() {
        for j in &members[a + 1..] {
            d = d.max((&points[*i] - &points[*j]).norm());
        }
    }
    d
}

/// Rounds to 12 significant digits.
pub fn round_sig12(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.11e}").parse().unwrap_or(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub n_starts: usize,
    pub dedup_radius: f64,
    /// Single-linkage radius; adaptive when `None`.
    pub r_link: Option<f64>,
    pub seed: u64,
    pub flow: FlowConfig,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            n_starts: 20,
            dedup_radius: DEFAULT_DEDUP_RADIUS,
            r_link: None,
            seed: 42,
            flow: FlowConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalSetModel {
    pub c: f64,
    pub points: Vec<Vec<f64>>,
    /// Sorted Hessian spectra, 12 significant digits.
    pub eigenvalues: Vec<Vec<f64>>,
    pub ranks: Vec<usize>,
    pub rank_threshold: f64,
    pub components: Vec<Vec<usize>>,
    pub component_diameters: Vec<f64>,
    pub r_link: f64,
    pub dedup_radius: f64,
    pub manifold_dim: Option<usize>,
    pub constant_rank: bool,
    pub gap_ok: bool,
    pub singleton: bool,
    pub smoothness: Smoothness,
    pub pl_claim_passed: bool,
    pub bounded_in_interior: bool,
    /// The field is tagged C², passes the PŁ claim on the region and its
    /// located minimizers stay inside the region.
    pub singleton_expected: bool,
    pub theorem_tension: Option<String>,
    pub notes: Vec<String>,
}

/// Locates `K` in `region` and assembles spectra, ranks, components and the
/// singleton verdict.
pub fn build_model(
    f: &ScalarField,
    region: &Region,
    c: f64,
    opts: &ModelOptions,
) -> Result<CriticalSetModel> {
    let points = locate_minimizers(f, region, opts.n_starts, &opts.flow, opts.dedup_radius, opts.seed)?;
    let eigenvalues = spectra(f, &points)?;
    let rank = rank_report(&eigenvalues, c);
    let gap = hessian_gap_check(f, &points, c)?;
    let n = f.dim();

    let r_link = opts.r_link.unwrap_or_else(|| default_link_radius(&points));
    let comps = components(&points, r_link);
    let component_diameters: Vec<f64> = comps.iter().map(|m| diameter(&points, m)).collect();
    let singleton = comps.len() == 1 && component_diameters[0] < 10.0 * opts.dedup_radius;

    let inf_f = opts
        .flow
        .inf_f
        .or(f.known_inf())
        .unwrap_or_else(|| points.iter().filter_map(|p| f.eval(p).ok()).fold(f64::INFINITY, f64::min));
    let pl_claim_passed = matches!(
        check_pl_claim(f, region, c, MODEL_PL_SAMPLES, inf_f, opts.seed, DEFAULT_EPS_CHECK),
        Ok(r) if r.pass == Some(true)
    );
    let bounded_in_interior = points.iter().all(|p| region.depth(p) > r_link);
    let singleton_expected = f.smoothness().is_c2() && pl_claim_passed && bounded_in_interior;

    let mut notes = vec![BOUNDEDNESS_CAVEAT.to_string()];
    if rank.common_rank == Some(0) {
        notes.push("Hessian vanishes on K: f locally constant near K".to_string());
    }
    if !rank.threshold_robust {
        notes.push("ranks change at half the threshold: eigenvalues near C/4".to_string());
    }

    Ok(CriticalSetModel {
        c,
        points: points.iter().map(|p| p.iter().copied().collect()).collect(),
        eigenvalues: eigenvalues
            .iter()
            .map(|v| v.iter().copied().map(round_sig12).collect())
            .collect(),
        manifold_dim: rank.common_rank.map(|m| n - m),
        constant_rank: rank.constant_rank,
        ranks: rank.ranks,
        rank_threshold: rank.threshold,
        components: comps,
        component_diameters,
        r_link,
        dedup_radius: opts.dedup_radius,
        gap_ok: gap.gap_ok,
        singleton,
        smoothness: f.smoothness(),
        pl_claim_passed,
        bounded_in_interior,
        singleton_expected,
        theorem_tension: (singleton_expected && !singleton).then(|| THEOREM_TENSION.to_string()),
        notes,
    })
}
