//! Projection onto `{y : A y ≤ b}` by a primal active-set method.
//!
//! Solves `min ½‖y − x‖²` starting from a feasible point. Each iteration
//! either moves to the equality-constrained minimizer of the working set,
//! clamping the step at the first blocking constraint, or drops the
//! constraint with the most negative multiplier.

use nalgebra::{DMatrix, DVector};

use crate::field::Point;

fn dot(row: &[f64], v: &DVector<f64>) -> f64 {
    row.iter().zip(v.iter()).map(|(a, b)| a * b).sum()
}

/// Multipliers `λ` with `(A_W A_Wᵀ) λ = A_W r`, by pseudo-inverse.
fn solve_gram(a: &[Vec<f64>], working: &[usize], r: &DVector<f64>) -> DVector<f64> {
    let n = r.len();
    let aw = DMatrix::from_fn(working.len(), n, |i, j| a[working[i]][j]);
    let gram = &aw * aw.transpose();
    let rhs = &aw * r;
    match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .pseudo_inverse(1e-12)
            .map(|p| p * rhs)
            .unwrap_or_else(|_| DVector::zeros(working.len())),
    }
}

pub(super) fn project(a: &[Vec<f64>], b: &[f64], feasible: &Point, x: &Point) -> Point {
    let m = a.len();
    let n = x.len();
    let scale = 1.0 + x.amax() + feasible.amax();
    let tol = 1e-12 * scale;
    let mut y = feasible.clone();
    let mut working: Vec<usize> = Vec::new();
    let max_iter = 50 * (m + n) + 100;

    for _ in 0..max_iter {
        // Step to the minimizer of ½‖y + p − x‖² with A_W p = 0.
        let r = x - &y;
        let p = if working.is_empty() {
            r.clone()
        } else {
            let lambda = solve_gram(a, &working, &r);
            let mut p = r.clone();
            for (k, &i) in working.iter().enumerate() {
                for j in 0..n {
                    p[j] -= lambda[k] * a[i][j];
                }
            }
            p
        };

        if p.norm() <= tol {
            if working.is_empty() {
                return y;
            }
            // Stationarity y − x + A_Wᵀ μ = 0; optimal once every μ ≥ 0.
            let mu = solve_gram(a, &working, &r);
            let (k_min, mu_min) = mu
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (k, &l)| if l < acc.1 { (k, l) } else { acc });
            if mu_min >= -tol {
                return y;
            }
            working.remove(k_min);
            continue;
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..m {
            if working.contains(&i) {
                continue;
            }
            let ap = dot(&a[i], &p);
            let row_norm = a[i].iter().map(|v| v * v).sum::<f64>().sqrt();
            if ap > 1e-14 * row_norm * p.norm() {
                let slack = (b[i] - dot(&a[i], &y)).max(0.0);
                let t = slack / ap;
                if t < alpha {
                    alpha = t;
                    blocking = Some(i);
                }
            }
        }
        y += &p * alpha;
        match blocking {
            Some(i) => working.push(i),
            None => return y,
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::point;

    fn unit_square() -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            vec![
                vec![1.0, 0.0],
                vec![-1.0, 0.0],
                vec![0.0, 1.0],
                vec![0.0, -1.0],
            ],
            vec![1.0, 0.0, 1.0, 0.0],
        )
    }

    #[test]
    fn square_matches_clamp() {
        let (a, b) = unit_square();
        let f = point(&[0.5, 0.5]);
        for x in [[2.0, 2.0], [-1.0, 0.3], [0.2, 0.7], [3.0, -4.0], [0.5, 9.0]] {
            let x = point(&x);
            let p = project(&a, &b, &f, &x);
            let clamp = x.map(|v| v.clamp(0.0, 1.0));
            assert!((p - clamp).norm() < 1e-12, "x = {x:?}");
        }
    }

    #[test]
    fn triangle_vertex_and_edge() {
        // x ≥ 0, y ≥ 0, x + y ≤ 1
        let a = vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 1.0]];
        let b = vec![0.0, 0.0, 1.0];
        let f = point(&[0.1, 0.1]);
        let p = project(&a, &b, &f, &point(&[1.0, 1.0]));
        assert!((p - point(&[0.5, 0.5])).norm() < 1e-12);
        let p = project(&a, &b, &f, &point(&[3.0, -1.0]));
        assert!((p - point(&[1.0, 0.0])).norm() < 1e-12);
    }
}
