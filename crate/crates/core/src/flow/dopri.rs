//! Dormand-Prince 5(4) tableau with the order-4 continuous extension.

use nalgebra::DVector;


const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Continuous extension over one accepted step `[t0, t0 + h]`.
#[derive(Debug, Clone)]
pub struct DenseSegment {
    pub t0: f64,
    pub h: f64,
    coeffs: [DVector<f64>; 5],
}

impl DenseSegment {
    /// State at `t0 + θh`, `θ ∈ [0, 1]`.
    pub fn eval_theta(&self, theta: f64) -> DVector<f64> {
        let th1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.coeffs;
        r1 + (r2 + (r3 + (r4 + r5 * th1) * theta) * th1) * theta
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        let theta = if self.h == 0.0 {
            0.0
        } else {
            ((t - self.t0) / self.h).clamp(0.0, 1.0)
        };
        self.eval_theta(theta)
    }
}

pub(crate) struct StepOutput {
    pub y_new: DVector<f64>,
    /// Right-hand side at `y_new` (first stage of the next step).
    pub k_new: DVector<f64>,
    pub err: DVector<f64>,
    pub dense: DenseSegment,
}

/// One trial step from `(t, y)` with `k1 = rhs(y)`.
pub(crate) fn step<F, E>(
    rhs: &F,
    t: f64,
    y: &DVector<f64>,
    k1: &DVector<f64>,
    h: f64,
) -> Result<StepOutput, E>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>, E>,
{
    let k2 = rhs(&(y + k1 * (h * A21)))?;
    let k3 = rhs(&(y + (k1 * A31 + &k2 * A32) * h))?;
    let k4 = rhs(&(y + (k1 * A41 + &k2 * A42 + &k3 * A43) * h))?;
    let k5 = rhs(&(y + (k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * h))?;
    let k6 = rhs(&(y + (k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * h))?;
    let y_new = y + (k1 * A71 + &k3 * A73 + &k4 * A74 + &k5 * A75 + &k6 * A76) * h;
    let k7 = rhs(&y_new)?;
    let err = (k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * h;

    let ydiff = &y_new - y;
    let bspl = k1 * h - &ydiff;
    let r4 = &ydiff - &k7 * h - &bspl;
    let r5 = (k1 * D1 + &k3 * D3 + &k4 * D4 + &k5 * D5 + &k6 * D6 + &k7 * D7) * h;
    let dense = DenseSegment {
        t0: t,
        h,
        coeffs: [y.clone(), ydiff, bspl, r4, r5],
    };
    Ok(StepOutput {
        y_new,
        k_new: k7,
        err,
        dense,
    })
}

/// Mixed absolute/relative RMS norm of the local error estimate.
pub(crate) fn error_norm(
    err: &DVector<f64>,
    y: &DVector<f64>,
    y_new: &DVector<f64>,
    rel_tol: f64,
    abs_tol: f64,
) -> f64 {
    let n = err.len() as f64;
    let sum: f64 = err
        .iter()
        .zip(y.iter().zip(y_new.iter()))
        .map(|(e, (a, b))| {
            let sk = abs_tol + rel_tol * a.abs().max(b.abs());
            (e / sk).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

/// Initial step size guess (Hairer-Nørsett-Wanner).
pub(crate) fn initial_step<F, E>(
    rhs: &F,
    y0: &DVector<f64>,
    f0: &DVector<f64>,
    rel_tol: f64,
    abs_tol: f64,
    h_max: f64,
) -> Result<f64, E>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>, E>,
{
    let n = y0.len() as f64;
    let sk: Vec<f64> = y0.iter().map(|v| abs_tol + rel_tol * v.abs()).collect();
    let dnf = f0.iter().zip(&sk).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n;
    let dny = y0.iter().zip(&sk).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n;
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(h_max);
    let f1 = rhs(&(y0 + f0 * h))?;
    let der2 = (f1 - f0)
        .iter()
        .zip(&sk)
        .map(|(v, s)| (v / s).powi(2))
        .sum::<f64>()
        .sqrt()
        / (n.sqrt() * h);
    let der12 = der2.abs().max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    Ok((100.0 * h).min(h1).min(h_max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_output_interpolates_endpoints() {
        let rhs = |y: &DVector<f64>| -> Result<DVector<f64>, ()> { Ok(-y) };
        let y = DVector::from_vec(vec![1.0, -2.0]);
        let k1 = rhs(&y).unwrap();
        let out = step(&rhs, 0.0, &y, &k1, 0.1).unwrap();
        assert_eq!(out.dense.eval_theta(0.0), y);
        assert!((out.dense.eval_theta(1.0) - &out.y_new).norm() < 1e-15);
        let mid = out.dense.eval(0.05);
        assert!((mid[0] - (-0.05f64).exp()).abs() < 1e-8, "{}", mid[0] - (-0.05f64).exp());
    }

    #[test]
    fn fifth_order_local_error() {
        let rhs = |y: &DVector<f64>| -> Result<DVector<f64>, ()> { Ok(-y) };
        let y = DVector::from_vec(vec![1.0]);
        let k1 = rhs(&y).unwrap();
        let e1 = (step(&rhs, 0.0, &y, &k1, 0.2).unwrap().y_new[0] - (-0.2f64).exp()).abs();
        let e2 = (step(&rhs, 0.0, &y, &k1, 0.1).unwrap().y_new[0] - (-0.1f64).exp()).abs();
        // local error O(h⁶): halving h divides it by ~64
        assert!(e1 / e2 > 40.0 && e1 / e2 < 90.0, "ratio {}", e1 / e2);
    }
}
