//! Pairwise (SMO-style) solver for the one-class dual
//!
//! ```text
//! min ½ αᵀQα   s.t.  0 ≤ αᵢ ≤ 1/(νn),  Σαᵢ = 1,   Q = K(X, X)
//! ```
//!
//! Working pairs are chosen by the second-order rule: `i` is the most
//! violating variable that can still grow, `j` the partner giving the largest
//! objective decrease. Index ties are broken by a seeded scan order.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::kernel::{KernelMatrix, DEFAULT_CACHE_BYTES, DENSE_LIMIT};
use crate::error::{Error, Result};
use crate::seed;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoConfig {
    /// Stop once the maximal KKT violation falls below this.
    pub tolerance: f64,
    /// Iteration limit, in multiples of the training-set size.
    pub max_passes: usize,
    /// Seeds the index scan order.
    pub seed: u64,
    pub dense_limit: usize,
    pub cache_bytes: usize,
}

impl Default for SmoConfig {
    fn default() -> Self {
        SmoConfig {
            tolerance: 1e-4,
            max_passes: 1000,
            seed: 0,
            dense_limit: DENSE_LIMIT,
            cache_bytes: DEFAULT_CACHE_BYTES,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct DualSolution {
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub objective: f64,
    pub iterations: usize,
    pub violation: f64,
}

pub(crate) fn solve(x: &Array2<f64>, nu: f64, gamma: f64, cfg: &SmoConfig) -> Result<DualSolution> {
    let n = x.nrows();
    if !(cfg.tolerance > 0.0) || cfg.max_passes == 0 {
        return Err(Error::InvalidParameter(
            "tolerance and max_passes must be positive".into(),
        ));
    }
    let upper = 1.0 / (nu * n as f64);

    // Scan order: all index loops run over this permutation.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(cfg.seed));

    let mut alpha = vec![0.0; n];
    let mut remaining = 1.0;
    for &t in &order {
        if remaining <= 0.0 {
            break;
        }
        let a = upper.min(remaining);
        alpha[t] = a;
        remaining -= a;
    }

    let mut kernel = KernelMatrix::new(x, gamma, cfg.dense_limit, cfg.cache_bytes);
    log::debug!("smo: n={n}, dense kernel: {}", kernel.is_dense());
    let diag = vec![1.0; n];
    let mut grad = vec![0.0; n];
    for (t, &a) in alpha.iter().enumerate() {
        if a > 0.0 {
            let row = kernel.row(t);
            for (g, q) in grad.iter_mut().zip(row.iter()) {
                *g += a * q;
            }
        }
    }

    let max_iter = cfg.max_passes.saturating_mul(n.max(1));
    let mut iter = 0;
    let mut violation;
    loop {
        // i: can increase (α < C) with the smallest gradient.
        let mut i = usize::MAX;
        let mut g_min = f64::INFINITY;
        for &t in &order {
            if alpha[t] < upper && grad[t] < g_min {
                g_min = grad[t];
                i = t;
            }
        }
        // Largest gradient among variables that can decrease.
        let mut g_max = f64::NEG_INFINITY;
        for &t in &order {
            if alpha[t] > 0.0 && grad[t] > g_max {
                g_max = grad[t];
            }
        }
        violation = g_max - g_min;
        if i == usize::MAX || violation < cfg.tolerance {
            break;
        }
        if iter >= max_iter {
            return Err(Error::NonConvergence {
                iterations: iter,
                violation,
            });
        }

        let qi = kernel.row(i);
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for &t in &order {
            if alpha[t] > 0.0 {
                let diff = grad[t] - g_min;
                if diff > 0.0 {
                    let quad = diag[i] + diag[t] - 2.0 * qi[t];
                    let quad = if quad > 0.0 { quad } else { TAU };
                    let gain = -(diff * diff) / quad;
                    if gain < best {
                        best = gain;
                        j = t;
                    }
                }
            }
        }
        if j == usize::MAX {
            break;
        }
        let qj = kernel.row(j);

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = diag[i] + diag[j] - 2.0 * qi[j];
        let quad = if quad > 0.0 { quad } else { TAU };
        let delta = (grad[i] - grad[j]) / quad;
        let sum = old_i + old_j;
        let mut ai = old_i - delta;
        let mut aj = old_j + delta;
        if sum > upper {
            if ai > upper {
                ai = upper;
                aj = sum - upper;
            }
            if aj > upper {
                aj = upper;
                ai = sum - upper;
            }
        } else {
            if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..n {
            grad[t] += qi[t] * di + qj[t] * dj;
        }
        iter += 1;
    }

    let rho = offset(&alpha, &grad, upper);
    let objective = 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * g).sum::<f64>();
    Ok(DualSolution {
        alphas: alpha,
        rho,
        objective,
        iterations: iter,
        violation,
    })
}

/// Mean gradient over margin variables (0 < α < C); midpoint of the feasible
/// interval when there are none.
fn offset(alpha: &[f64], grad: &[f64], upper: f64) -> f64 {
    let mut sum = 0.0;
    let mut free = 0usize;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    for (a, g) in alpha.iter().zip(grad) {
        if *a >= upper {
            lb = lb.max(*g);
        } else if *a <= 0.0 {
            ub = ub.min(*g);
        } else {
            free += 1;
            sum += g;
        }
    }
    if free > 0 {
        sum / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if lb.is_finite() {
        lb
    } else {
        ub
    }
}

/// Dual objective `½ αᵀQα` recomputed from scratch.
pub fn dual_objective(x: &Array2<f64>, alphas: &[f64], gamma: f64) -> f64 {
    let mut total = 0.0;
    for (i, xi) in x.axis_iter(Axis(0)).enumerate() {
        if alphas[i] == 0.0 {
            continue;
        }
        for (j, xj) in x.axis_iter(Axis(0)).enumerate() {
            if alphas[j] != 0.0 {
                total += alphas[i] * alphas[j] * (-gamma * super::kernel::sq_dist(xi, xj)).exp();
            }
        }
    }
    0.5 * total
}
