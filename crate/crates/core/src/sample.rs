//! Deterministic sample-point generation for residual sweeps and transform
//! validation.

use rayon::prelude::*;

use crate::error::Result;
use crate::field::{Domain, FdScheme, Point3};

/// How sample points are laid out inside a bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleStrategy {
    /// Uniform lattice, cell-centered.
    #[default]
    Lattice,
    /// Halton low-discrepancy sequence (bases 2, 3, 5).
    Halton,
}

fn halton(index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index + 1;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Sample points inside an axis-aligned box `[lo, hi]^3`, keeping only
/// points accepted by `keep`. For `Lattice`, candidates form an n^3 grid
/// with cell-centered offsets; for `Halton`, candidates follow the Halton
/// sequence. At most `target` points are returned.
pub fn sample_box<F: Fn(&Point3) -> bool>(
    lo: [f64; 3],
    hi: [f64; 3],
    target: usize,
    strategy: SampleStrategy,
    keep: F,
) -> Vec<Point3> {
    let mut out = Vec::with_capacity(target);
    match strategy {
        SampleStrategy::Lattice => {
            // Grow the lattice until enough candidates survive the filter.
            let mut n = (target as f64).cbrt().ceil() as usize + 1;
            for _ in 0..8 {
                out.clear();
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            let frac = |idx: usize| (idx as f64 + 0.5) / n as f64;
                            let p = Point3::new(
                                lo[0] + (hi[0] - lo[0]) * frac(i),
                                lo[1] + (hi[1] - lo[1]) * frac(j),
                                lo[2] + (hi[2] - lo[2]) * frac(k),
                            );
                            if keep(&p) {
                                out.push(p);
                            }
                        }
                    }
                }
                if out.len() >= target {
                    break;
                }
                n = n * 3 / 2 + 1;
            }
        }
        SampleStrategy::Halton => {
            let mut idx = 0;
            while out.len() < target && idx < target * 1000 {
                let p = Point3::new(
                    lo[0] + (hi[0] - lo[0]) * halton(idx, 2),
                    lo[1] + (hi[1] - lo[1]) * halton(idx, 3),
                    lo[2] + (hi[2] - lo[2]) * halton(idx, 5),
                );
                if keep(&p) {
                    out.push(p);
                }
                idx += 1;
            }
        }
    }
    out.truncate(target);
    out
}

/// Interior sample set for a ball of radius `r`: points at spherical radius
/// in `(guard*r, (1-guard)*r)` and cylindrical radius above `guard*r`, so
/// stencils stay inside the domain and clear of the coordinate axis.
pub fn sample_ball(r: f64, target: usize, guard: f64, strategy: SampleStrategy) -> Vec<Point3> {
    sample_box(
        [-r, -r, -r],
        [r, r, r],
        target,
        strategy,
        |p: &Point3| {
            let rho = p.coords.norm();
            let r_cyl = p.x.hypot(p.y);
            rho > guard * r && rho < (1.0 - guard) * r && r_cyl > guard * r
        },
    )
}

/// Max of `f` over `points`, evaluated in parallel. Errors from any point
/// propagate.
pub fn max_over<F>(points: &[Point3], f: F) -> Result<f64>
where
    F: Fn(&Point3) -> Result<f64> + Send + Sync,
{
    points
        .par_iter()
        .map(|p| f(p))
        .try_reduce(|| 0.0_f64, |a, b| Ok(a.max(b)))
}

/// Keep only points whose whole FD stencil (reach `2h_eff` per axis, plus
/// diagonal slack) lies inside `domain`.
pub fn filter_stencil_interior(
    points: Vec<Point3>,
    domain: &Domain,
    scheme: FdScheme,
) -> Vec<Point3> {
    points
        .into_iter()
        .filter(|p| {
            let h = 2.0 * scheme.step(p);
            let mut ok = domain.contains(p);
            for axis in 0..3 {
                for sign in [-1.0, 1.0] {
                    let mut q = *p;
                    q.coords[axis] += sign * h;
                    ok &= domain.contains(&q);
                }
            }
            ok
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_is_deterministic_and_sized() {
        let a = sample_ball(1.0, 1000, 0.05, SampleStrategy::Lattice);
        let b = sample_ball(1.0, 1000, 0.05, SampleStrategy::Lattice);
        assert_eq!(a.len(), 1000);
        assert_eq!(a, b);
        for p in &a {
            assert!(p.coords.norm() < 0.95);
        }
    }

    #[test]
    fn halton_fills_box() {
        let pts = sample_box([0.0; 3], [1.0; 3], 100, SampleStrategy::Halton, |_| true);
        assert_eq!(pts.len(), 100);
        // first Halton point in bases (2,3,5) is (1/2, 1/3, 1/5)
        assert!((pts[0].x - 0.5).abs() < 1e-12);
        assert!((pts[0].y - 1.0 / 3.0).abs() < 1e-12);
        assert!((pts[0].z - 0.2).abs() < 1e-12);
    }

    #[test]
    fn max_over_propagates() {
        let pts = vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)];
        let m = max_over(&pts, |p| Ok(p.x * 2.0)).unwrap();
        assert_eq!(m, 2.0);
    }
}
