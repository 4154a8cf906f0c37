//! One-class SVM with an RBF kernel, trained on benign rows only.
//!
//! Rows on the origin side of the learned hyperplane (decision value ≤ 0)
//! are reported as outliers.

mod kernel;
mod reference;
mod smo;

use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use kernel::{rbf_kernel, Gamma, KernelSpec, DEFAULT_CACHE_BYTES, DENSE_LIMIT};
pub use reference::{project_capped_simplex, solve_dual_reference, REFERENCE_MAX_ROWS};
pub use smo::{dual_objective, SmoConfig};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;

pub const SVM_FORMAT: &str = "zeroday-ocsvm/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prediction {
    Inlier,
    Outlier,
}

/// Trained one-class SVM. Only rows with a nonzero dual coefficient are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneClassSvmModel {
    pub format: String,
    pub nu: f64,
    pub kernel: KernelSpec,
    /// Resolved RBF width.
    pub gamma: f64,
    pub rho: f64,
    pub n_train: usize,
    /// Box bound `1 / (ν n)` used in training.
    pub upper_bound: f64,
    /// Dual objective `½ αᵀKα` at the solution.
    pub objective: f64,
    pub iterations: usize,
    pub support_vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    /// Position of each support vector in the training matrix.
    pub support_indices: Vec<usize>,
    pub training: Fingerprint,
    pub pipeline_id: Option<String>,
}

/// Trains on `x` (benign rows only).
pub fn fit(
    x: &Array2<f64>,
    nu: f64,
    kernel: &KernelSpec,
    cfg: &SmoConfig,
) -> Result<OneClassSvmModel> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "nu must be in (0, 1], got {nu}"
        )));
    }
    if x.nrows() < 2 {
        return Err(Error::Data(format!(
            "one-class SVM needs at least 2 rows, got {}",
            x.nrows()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data(
            "training matrix holds non-finite values".into(),
        ));
    }
    let gamma = kernel.resolve(x)?;
    let sol = smo::solve(x, nu, gamma, cfg)?;
    log::info!(
        "ocsvm nu={nu}: {} iterations, violation {:.2e}",
        sol.iterations,
        sol.violation
    );

    let support_indices: Vec<usize> = (0..x.nrows()).filter(|&i| sol.alphas[i] > 0.0).collect();
    Ok(OneClassSvmModel {
        format: SVM_FORMAT.into(),
        nu,
        kernel: *kernel,
        gamma,
        rho: sol.rho,
        n_train: x.nrows(),
        upper_bound: 1.0 / (nu * x.nrows() as f64),
        objective: sol.objective,
        iterations: sol.iterations,
        support_vectors: support_indices.iter().map(|&i| x.row(i).to_vec()).collect(),
        alphas: support_indices.iter().map(|&i| sol.alphas[i]).collect(),
        support_indices,
        training: Fingerprint::of_matrix(x),
        pipeline_id: None,
    })
}

impl OneClassSvmModel {
    pub fn width(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    pub fn n_support(&self) -> usize {
        self.alphas.len()
    }

    /// `Σ αᵢ k(svᵢ, x) − ρ`; positive on the inlier side.
    pub fn decision_function(&self, x: ArrayView1<f64>) -> Result<f64> {
        if x.len() != self.width() {
            return Err(Error::Dimension {
                expected: self.width(),
                actual: x.len(),
            });
        }
        Ok(self.decision_unchecked(x))
    }

    fn decision_unchecked(&self, x: ArrayView1<f64>) -> f64 {
        let mut s = 0.0;
        for (sv, a) in self.support_vectors.iter().zip(&self.alphas) {
            let d: f64 = sv
                .iter()
                .zip(x.iter())
                .map(|(p, q)| (p - q) * (p - q))
                .sum();
            s += a * (-self.gamma * d).exp();
        }
        s - self.rho
    }

    /// Decision values for every row.
    pub fn decision_values(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.width() {
            return Err(Error::Dimension {
                expected: self.width(),
                actual: x.ncols(),
            });
        }
        Ok(x.axis_iter(Axis(0))
            .into_par_iter()
            .map(|r| self.decision_unchecked(r))
            .collect())
    }

    pub fn predict(&self, x: ArrayView1<f64>) -> Result<Prediction> {
        Ok(if self.decision_function(x)? > 0.0 {
            Prediction::Inlier
        } else {
            Prediction::Outlier
        })
    }

    /// Fraction of rows predicted outlier.
    pub fn detect_rate(&self, x: &Array2<f64>) -> Result<f64> {
        if x.nrows() == 0 {
            return Err(Error::Data("no rows to classify".into()));
        }
        let values = self.decision_values(x)?;
        Ok(values.iter().filter(|v| **v <= 0.0).count() as f64 / values.len() as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != SVM_FORMAT {
            return Err(Error::Format(format!(
                "expected format {SVM_FORMAT}, found {}",
                self.format
            )));
        }
        if self.alphas.is_empty() || self.alphas.len() != self.support_vectors.len() {
            return Err(Error::Format(
                "support vectors and coefficients disagree".into(),
            ));
        }
        let d = self.width();
        if self.support_vectors.iter().any(|sv| sv.len() != d) {
            return Err(Error::Format("ragged support vector matrix".into()));
        }
        if !(self.gamma > 0.0 && self.rho.is_finite()) {
            return Err(Error::Format("invalid gamma or rho".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn id(&self) -> String {
        crate::fingerprint::sha256_hex(self.to_json().as_bytes())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array, Array1};
    use rand::Rng;
    use rand_distr::StandardNormal;

    use super::*;

    fn gaussian(n: usize, d: usize, sigma: f64, seed: u64) -> Array2<f64> {
        let mut rng = crate::seed::rng(seed);
        Array::from_shape_fn((n, d), |_| sigma * rng.sample::<f64, _>(StandardNormal))
    }

    fn cfg() -> SmoConfig {
        SmoConfig {
            seed: 5,
            ..SmoConfig::default()
        }
    }

    #[test]
    fn dual_feasible_and_margin_on_boundary() {
        let x = gaussian(150, 3, 1.0, 1);
        let c = cfg();
        let m = fit(&x, 0.2, &KernelSpec::default(), &c).unwrap();
        assert!((m.alphas.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        assert!(m
            .alphas
            .iter()
            .all(|a| *a > 0.0 && *a <= m.upper_bound + 1e-10));
        for (sv, a) in m.support_vectors.iter().zip(&m.alphas) {
            if *a < m.upper_bound - 1e-12 {
                let v = m
                    .decision_function(Array1::from(sv.clone()).view())
                    .unwrap();
                assert!(v.abs() < 10.0 * c.tolerance, "margin value {v}");
            }
        }
    }

    #[test]
    fn agrees_with_reference() {
        for (k, nu) in [0.1, 0.2, 0.5].into_iter().enumerate() {
            let x = gaussian(25, 2, 1.0, 10 + k as u64);
            let m = fit(&x, nu, &KernelSpec::rbf(0.5), &cfg()).unwrap();
            let (_, f_ref) = solve_dual_reference(&x, nu, 0.5).unwrap();
            assert!(
                (m.objective - f_ref).abs() < 1e-4,
                "nu {nu}: {} vs {f_ref}",
                m.objective
            );
            let mut full = vec![0.0; 25];
            for (i, a) in m.support_indices.iter().zip(&m.alphas) {
                full[*i] = *a;
            }
            assert!((dual_objective(&x, &full, 0.5) - m.objective).abs() < 1e-12);
        }
    }

    #[test]
    fn cluster_centre_in_far_point_out() {
        let x = gaussian(300, 2, 0.1, 3);
        let m = fit(&x, 0.1, &KernelSpec::default(), &cfg()).unwrap();
        assert_eq!(
            m.predict(array![0.0, 0.0].view()).unwrap(),
            Prediction::Inlier
        );
        assert_eq!(
            m.predict(array![10.0, 0.0].view()).unwrap(),
            Prediction::Outlier
        );
        let far = m.decision_function(array![1e3, 1e3].view()).unwrap();
        assert!((far + m.rho).abs() < 1e-12 && m.rho > 0.0);
        let p = array![0.05, -0.02];
        let q = array![0.05 + 1e-9, -0.02];
        assert!(
            (m.decision_function(p.view()).unwrap() - m.decision_function(q.view()).unwrap()).abs()
                < 1e-6
        );
    }

    #[test]
    fn predict_matches_sign() {
        let x = gaussian(100, 2, 1.0, 4);
        let m = fit(&x, 0.15, &KernelSpec::default(), &cfg()).unwrap();
        let probes = gaussian(1000, 2, 2.0, 9);
        for r in probes.axis_iter(Axis(0)) {
            let v = m.decision_function(r).unwrap();
            let p = m.predict(r).unwrap();
            assert_eq!(p == Prediction::Inlier, v > 0.0);
        }
    }

    #[test]
    fn nu_property_holds() {
        let x = gaussian(1000, 2, 1.0, 6);
        for nu in [0.1, 0.2] {
            let m = fit(&x, nu, &KernelSpec::default(), &cfg()).unwrap();
            let out = m.detect_rate(&x).unwrap();
            assert!((out - nu).abs() <= 0.05, "nu {nu}: outliers {out}");
            assert!(m.n_support() as f64 / 1000.0 >= nu - 0.05);
        }
    }

    #[test]
    fn deterministic_and_round_trips() {
        let x = gaussian(80, 3, 1.0, 7);
        let a = fit(&x, 0.2, &KernelSpec::default(), &cfg()).unwrap();
        let b = fit(&x, 0.2, &KernelSpec::default(), &cfg()).unwrap();
        assert_eq!(a, b);
        let back = OneClassSvmModel::from_json(&a.to_json()).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.to_json(), a.to_json());
    }

    #[test]
    fn detect_rate_ignores_row_order() {
        let x = gaussian(120, 2, 1.0, 8);
        let m = fit(&x, 0.2, &KernelSpec::default(), &cfg()).unwrap();
        let probes = gaussian(200, 2, 1.5, 2);
        let rev = probes.slice(ndarray::s![..;-1, ..]).to_owned();
        assert_eq!(
            m.detect_rate(&probes).unwrap(),
            m.detect_rate(&rev).unwrap()
        );
        let values = m.decision_values(&x).unwrap();
        let best = (0..values.len())
            .max_by(|&i, &j| values[i].total_cmp(&values[j]))
            .unwrap();
        let inlier = Array2::from_shape_fn((10, 2), |(_, j)| x[[best, j]]);
        assert_eq!(m.detect_rate(&inlier).unwrap(), 0.0);
        assert!(m.detect_rate(&Array2::zeros((0, 2))).is_err());
    }

    #[test]
    fn bad_inputs_rejected() {
        let x = gaussian(10, 2, 1.0, 1);
        assert!(fit(&x, 0.0, &KernelSpec::default(), &cfg()).is_err());
        assert!(fit(&x, 1.5, &KernelSpec::default(), &cfg()).is_err());
        assert!(fit(
            &x.slice(ndarray::s![..1, ..]).to_owned(),
            0.5,
            &KernelSpec::default(),
            &cfg()
        )
        .is_err());
        let m = fit(&x, 0.5, &KernelSpec::default(), &cfg()).unwrap();
        assert!(m.decision_function(array![1.0].view()).is_err());
    }
}
