//! Dense projected-gradient solver for small one-class duals. Slow but
//! simple; the SMO solver is checked against it.

use ndarray::{Array1, Array2};

use super::kernel::sq_dist;
use crate::error::{Error, Result};

pub const REFERENCE_MAX_ROWS: usize = 200;
const MAX_ITER: usize = 200_000;
/// Fixed-point residual of one projected step.
const RESIDUAL_TOL: f64 = 1e-9;

/// Euclidean projection onto `{0 ≤ a ≤ upper, Σa = 1}`.
pub fn project_capped_simplex(v: &Array1<f64>, upper: f64) -> Array1<f64> {
    let mass = |tau: f64| v.iter().map(|x| (x - tau).clamp(0.0, upper)).sum::<f64>();
    let mut lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - upper - 1.0;
    let mut hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    let tau = 0.5 * (lo + hi);
    let mut a = v.mapv(|x| (x - tau).clamp(0.0, upper));
    // Put the bisection's leftover mass on a free coordinate.
    let gap = 1.0 - a.sum();
    if let Some(k) = (0..a.len()).find(|&k| a[k] > 0.0 && a[k] < upper) {
        a[k] = (a[k] + gap).clamp(0.0, upper);
    }
    a
}

fn largest_eigenvalue(q: &Array2<f64>) -> f64 {
    let n = q.nrows();
    let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w = q.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 1.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= 1e-12 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda
}

/// Minimizes `½ αᵀKα` over the capped simplex with accelerated projected
/// gradient, restarting momentum whenever the objective rises.
pub fn solve_dual_reference(x: &Array2<f64>, nu: f64, gamma: f64) -> Result<(Vec<f64>, f64)> {
    let n = x.nrows();
    if n == 0 || n > REFERENCE_MAX_ROWS {
        return Err(Error::InvalidParameter(format!(
            "reference solver handles 1..={REFERENCE_MAX_ROWS} rows, got {n}"
        )));
    }
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "nu must be in (0, 1], got {nu}"
        )));
    }
    let upper = 1.0 / (nu * n as f64);
    let q = Array2::from_shape_fn((n, n), |(i, j)| {
        (-gamma * sq_dist(x.row(i), x.row(j))).exp()
    });
    // 10% headroom on the power-iteration estimate keeps the step safe.
    let step = 1.0 / (1.1 * largest_eigenvalue(&q));
    let objective = |a: &Array1<f64>| 0.5 * a.dot(&q.dot(a));

    let mut a = project_capped_simplex(&Array1::from_elem(n, 1.0 / n as f64), upper);
    let mut y = a.clone();
    let mut t = 1.0f64;
    let mut f = objective(&a);
    for iter in 0..MAX_ITER {
        if iter % 10 == 0 {
            let fixed = project_capped_simplex(&(&a - &(q.dot(&a) * step)), upper);
            let residual = (&fixed - &a).mapv(f64::abs).fold(0.0f64, |m, v| m.max(*v));
            if residual < RESIDUAL_TOL {
                break;
            }
        }
        let next = project_capped_simplex(&(&y - &(q.dot(&y) * step)), upper);
        let f_next = objective(&next);
        if f_next > f {
            if t == 1.0 {
                // a plain step no longer descends: at floating-point resolution
                break;
            }
            y = a.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &next + &((&next - &a) * ((t - 1.0) / t_next));
        a = next;
        f = f_next;
        t = t_next;
    }
    Ok((a.to_vec(), f))
}
