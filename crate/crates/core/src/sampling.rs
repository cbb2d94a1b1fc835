//! Deterministic low-discrepancy sampling of regions.
//!
//! Points come from a Halton sequence with a seeded Cranley-Patterson
//! rotation, so the same seed always yields the same sample list.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{point, BoxBounds, Point, Region, ScalarField};

const PRIMES: [u64; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131,
];

/// Rejection sampling gives up after this many draws per requested point.
const MAX_DRAWS_PER_POINT: usize = 2000;

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Scrambled Halton sequence in the unit cube.
#[derive(Debug, Clone)]
pub struct Halton {
    dim: usize,
    shift: Vec<f64>,
    index: u64,
}

impl Halton {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(
            dim >= 1 && dim <= PRIMES.len(),
            "Halton sampling supports 1..={} dimensions",
            PRIMES.len()
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = (0..dim).map(|_| rng.random::<f64>()).collect();
        Self {
            dim,
            shift,
            index: 1,
        }
    }

    pub fn next_unit(&mut self) -> Vec<f64> {
        let i = self.index;
        self.index += 1;
        (0..self.dim)
            .map(|d| (radical_inverse(i, PRIMES[d]) + self.shift[d]).fract())
            .collect()
    }

    pub fn next_in_box(&mut self, b: &BoxBounds) -> Point {
        let u = self.next_unit();
        Point::from_iterator(
            self.dim,
            u.iter()
                .zip(b.lower.iter().zip(&b.upper))
                .map(|(u, (l, h))| l + u * (h - l)),
        )
    }
}

/// Draws `n` points of `region`, in sequence order.
///
/// Balls and sublevel sets are sampled by rejection from their bounding box;
/// a sublevel region needs `f`.
pub fn sample_region(
    region: &Region,
    n: usize,
    seed: u64,
    f: Option<&ScalarField>,
) -> Result<Vec<Point>> {
    region.validate()?;
    if matches!(region, Region::Sublevel { .. }) && f.is_none() {
        return Err(Error::Sampling(
            "sublevel region sampling requires the field".into(),
        ));
    }
    let bbox = region.bounding_box();
    let mut seq = Halton::new(region.dim(), seed);
    let mut out = Vec::with_capacity(n);
    let budget = n.saturating_mul(MAX_DRAWS_PER_POINT).max(MAX_DRAWS_PER_POINT);
    let mut draws = 0;
    while out.len() < n {
        if draws >= budget {
            return Err(Error::Sampling(format!(
                "only {} of {} points accepted after {} draws",
                out.len(),
                n,
                draws
            )));
        }
        draws += 1;
        let x = seq.next_in_box(&bbox);
        if region.contains(&x, f) {
            out.push(x);
        }
    }
    Ok(out)
}

/// Regular tensor grid with `per_axis` points per coordinate (inclusive ends).
pub fn grid(b: &BoxBounds, per_axis: usize) -> Vec<Point> {
    let dim = b.dim();
    let per_axis = per_axis.max(1);
    let total = per_axis.pow(dim as u32);
    (0..total)
        .map(|mut k| {
            let mut c = vec![0.0; dim];
            for (d, slot) in c.iter_mut().enumerate() {
                let i = k % per_axis;
                k /= per_axis;
                let u = if per_axis == 1 {
                    0.5
                } else {
                    i as f64 / (per_axis - 1) as f64
                };
                *slot = b.lower[d] + u * (b.upper[d] - b.lower[d]);
            }
            point(&c)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base_two() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
    }

    #[test]
    fn same_seed_same_points() {
        let r = Region::cube(3, -1.0, 2.0);
        let a = sample_region(&r, 50, 7, None).unwrap();
        let b = sample_region(&r, 50, 7, None).unwrap();
        let c = sample_region(&r, 50, 8, None).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|x| r.contains(x, None)));
    }

    #[test]
    fn ball_rejection() {
        let r = Region::Ball {
            center: vec![1.0, 1.0],
            radius: 0.5,
        };
        let pts = sample_region(&r, 40, 1, None).unwrap();
        assert_eq!(pts.len(), 40);
        assert!(pts.iter().all(|x| (x - point(&[1.0, 1.0])).norm() <= 0.5));
    }

    #[test]
    fn grid_covers_corners() {
        let g = grid(&BoxBounds::cube(2, -1.0, 1.0), 5);
        assert_eq!(g.len(), 25);
        assert!(g.contains(&point(&[-1.0, -1.0])));
        assert!(g.contains(&point(&[1.0, 1.0])));
        assert!(g.contains(&point(&[0.0, 0.0])));
    }
}
