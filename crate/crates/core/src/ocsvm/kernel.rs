//! RBF kernel and the training-time kernel matrix.
//!
//! Small problems hold the full matrix; larger ones compute rows on demand
//! and keep the most recently used ones in a bounded cache.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Problems up to this many rows store the dense kernel matrix.
pub const DENSE_LIMIT: usize = 8192;

/// Row cache budget for larger problems.
pub const DEFAULT_CACHE_BYTES: usize = 512 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gamma {
    /// `1 / (d · Var(X))`, variance taken over all entries of the training matrix.
    Scale,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub gamma: Gamma,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            gamma: Gamma::Scale,
        }
    }
}

impl KernelSpec {
    pub fn rbf(gamma: f64) -> Self {
        KernelSpec {
            gamma: Gamma::Value(gamma),
        }
    }

    /// Resolves the gamma rule against the training matrix.
    pub fn resolve(&self, x: &Array2<f64>) -> Result<f64> {
        match self.gamma {
            Gamma::Value(g) if g > 0.0 && g.is_finite() => Ok(g),
            Gamma::Value(g) => Err(Error::InvalidParameter(format!(
                "gamma must be positive, got {g}"
            ))),
            Gamma::Scale => {
                let n = x.len() as f64;
                if n == 0.0 {
                    return Err(Error::Data(
                        "cannot resolve gamma on an empty matrix".into(),
                    ));
                }
                let mean = x.sum() / n;
                let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                Ok(if var > 0.0 {
                    1.0 / (x.ncols() as f64 * var)
                } else {
                    1.0
                })
            }
        }
    }
}

#[inline]
pub(crate) fn sq_dist(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `exp(-gamma ‖x - y‖²)`.
pub fn rbf_kernel(x: ArrayView1<f64>, y: ArrayView1<f64>, gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    Ok((-gamma * sq_dist(x, y)).exp())
}

pub(crate) type Row = Arc<[f64]>;

/// Kernel matrix over the training rows.
pub(crate) enum KernelMatrix<'a> {
    Dense(Vec<Row>),
    Cached(RowCache<'a>),
}

impl<'a> KernelMatrix<'a> {
    pub fn new(x: &'a Array2<f64>, gamma: f64, dense_limit: usize, cache_bytes: usize) -> Self {
        if x.nrows() <= dense_limit {
            let rows = (0..x.nrows())
                .into_par_iter()
                .map(|i| compute_row(x, gamma, i))
                .collect();
            KernelMatrix::Dense(rows)
        } else {
            KernelMatrix::Cached(RowCache::new(x, gamma, cache_bytes))
        }
    }

    pub fn row(&mut self, i: usize) -> Row {
        match self {
            KernelMatrix::Dense(rows) => rows[i].clone(),
            KernelMatrix::Cached(cache) => cache.row(i),
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, KernelMatrix::Dense(_))
    }
}

fn compute_row(x: &Array2<f64>, gamma: f64, i: usize) -> Row {
    let xi = x.row(i);
    x.axis_iter(Axis(0))
        .map(|xj| (-gamma * sq_dist(xi, xj)).exp())
        .collect::<Vec<_>>()
        .into()
}

/// Least-recently-used cache of kernel rows.
pub(crate) struct RowCache<'a> {
    x: &'a Array2<f64>,
    gamma: f64,
    capacity: usize,
    rows: HashMap<usize, (Row, u64)>,
    clock: u64,
}

impl<'a> RowCache<'a> {
    fn new(x: &'a Array2<f64>, gamma: f64, bytes: usize) -> Self {
        let row_bytes = x.nrows().max(1) * std::mem::size_of::<f64>();
        RowCache {
            x,
            gamma,
            capacity: (bytes / row_bytes).max(2),
            rows: HashMap::new(),
            clock: 0,
        }
    }

    fn row(&mut self, i: usize) -> Row {
        self.clock += 1;
        if let Some((row, used)) = self.rows.get_mut(&i) {
            *used = self.clock;
            return row.clone();
        }
        if self.rows.len() >= self.capacity {
            let victim = *self
                .rows
                .iter()
                .min_by_key(|(_, (_, used))| *used)
                .map(|(k, _)| k)
                .expect("cache is full");
            self.rows.remove(&victim);
        }
        let x = self.x;
        let xi = x.row(i);
        let row: Row = x
            .axis_iter(Axis(0))
            .into_par_iter()
            .map(|xj| (-self.gamma * sq_dist(xi, xj)).exp())
            .collect::<Vec<_>>()
            .into();
        self.rows.insert(i, (row.clone(), self.clock));
        row
    }
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array};
    use rand::Rng;

    use super::*;

    #[test]
    fn kernel_values() {
        let x = array![0.0, 0.0];
        let y = array![1.0, 1.0];
        assert_eq!(rbf_kernel(x.view(), x.view(), 0.3).unwrap(), 1.0);
        assert!((rbf_kernel(x.view(), y.view(), 0.5).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!((rbf_kernel(x.view(), y.view(), 0.5).unwrap() - 0.367879).abs() < 1e-6);
        assert_eq!(
            rbf_kernel(x.view(), y.view(), 0.7).unwrap(),
            rbf_kernel(y.view(), x.view(), 0.7).unwrap()
        );
        assert!(rbf_kernel(x.view(), array![1.0].view(), 1.0).is_err());
        assert!(rbf_kernel(x.view(), y.view(), 0.0).is_err());
    }

    #[test]
    fn scale_rule() {
        let x = array![[0.0, 2.0], [2.0, 0.0]];
        // entries {0,2,2,0}: variance 1, d = 2
        assert_eq!(KernelSpec::default().resolve(&x).unwrap(), 0.5);
        assert_eq!(
            KernelSpec::default().resolve(&array![[1.0, 1.0]]).unwrap(),
            1.0
        );
        assert!(KernelSpec::rbf(-1.0).resolve(&x).is_err());
    }

    #[test]
    fn cached_rows_match_dense() {
        let mut rng = crate::seed::rng(2);
        let x = Array::from_shape_fn((40, 3), |_| rng.random::<f64>());
        let mut dense = KernelMatrix::new(&x, 0.8, usize::MAX, 0);
        let mut cached = KernelMatrix::new(&x, 0.8, 0, 5 * 40 * 8);
        assert!(dense.is_dense() && !cached.is_dense());
        for i in [0, 5, 7, 0, 39, 12, 5, 1, 2, 3, 4, 0] {
            assert_eq!(&*dense.row(i), &*cached.row(i));
        }
        if let KernelMatrix::Cached(c) = &cached {
            assert!(c.rows.len() <= 5);
        }
    }
}
