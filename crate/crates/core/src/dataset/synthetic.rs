//! Desk-scale stand-in for flow-feature datasets.
//!
//! Benign rows lie near a random low-rank linear manifold: `x = mean + W z + σ e`
//! with `z ~ N(0, I_r)`, `e ~ N(0, I_d)` and `W` scaled so each feature's
//! manifold variance is about 1. Attack class `k` is the same distribution
//! shifted by `offsets[k]` along a unit direction orthogonal to the manifold,
//! so offsets are measured in benign standard deviations.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::labeled::LabeledDataset;
use crate::error::{Error, Result};
use crate::seed;

pub const BENIGN_LABEL: &str = "benign";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_benign: usize,
    pub n_per_attack_class: usize,
    pub n_features: usize,
    pub benign_covariance_rank: usize,
    /// Mean shift per attack class; the vector length is the class count.
    pub attack_offsets: Vec<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_owned()));
        if self.n_benign == 0 || self.n_features == 0 || self.benign_covariance_rank == 0 {
            return bad("counts must be at least 1");
        }
        if self.attack_offsets.is_empty() || self.n_per_attack_class == 0 {
            return bad("need at least one attack class with at least one row");
        }
        if self.benign_covariance_rank > self.n_features {
            return bad("benign_covariance_rank exceeds n_features");
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be positive");
        }
        if self.attack_offsets.iter().any(|o| !o.is_finite()) {
            return bad("attack offsets must be finite");
        }
        Ok(())
    }

    pub fn class_name(k: usize) -> String {
        format!("attack_{k}")
    }
}

/// The generator's ground-truth parameters.
#[derive(Debug, Clone)]
pub struct SyntheticModel {
    pub spec: SyntheticSpec,
    pub mean: Array1<f64>,
    /// `n_features × rank` loading matrix.
    pub loadings: Array2<f64>,
    /// One unit shift direction per attack class.
    pub directions: Vec<Array1<f64>>,
}

impl SyntheticModel {
    pub fn new(spec: SyntheticSpec) -> Result<Self> {
        spec.validate()?;
        let d = spec.n_features;
        let r = spec.benign_covariance_rank;
        let mut rng = seed::rng(seed::derive(spec.seed, "synthetic-params"));
        let mean = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
        let scale = 1.0 / (r as f64).sqrt();
        let loadings =
            Array2::from_shape_fn((d, r), |_| scale * rng.sample::<f64, _>(StandardNormal));

        let basis = orthonormal_columns(&loadings);
        let directions = (0..spec.attack_offsets.len())
            .map(|_| {
                for _ in 0..64 {
                    let mut v = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
                    for b in &basis {
                        let p = v.dot(b);
                        v.scaled_add(-p, b);
                    }
                    let norm = v.dot(&v).sqrt();
                    if norm > 1e-8 {
                        return v / norm;
                    }
                }
                // Full-rank manifold: no orthogonal complement, any direction will do.
                let mut v = Array1::zeros(d);
                v[0] = 1.0;
                v
            })
            .collect();

        Ok(SyntheticModel {
            spec,
            mean,
            loadings,
            directions,
        })
    }

    /// Benign covariance `W Wᵀ + σ² I`.
    pub fn covariance(&self) -> Array2<f64> {
        let mut c = self.loadings.dot(&self.loadings.t());
        let s2 = self.spec.noise_sigma * self.spec.noise_sigma;
        for i in 0..c.nrows() {
            c[[i, i]] += s2;
        }
        c
    }

    pub fn class_mean(&self, class: usize) -> Array1<f64> {
        &self.mean + &(&self.directions[class] * self.spec.attack_offsets[class])
    }

    pub fn sample(&self) -> LabeledDataset {
        let spec = &self.spec;
        let d = spec.n_features;
        let r = spec.benign_covariance_rank;
        let n = spec.n_benign + spec.n_per_attack_class * spec.attack_offsets.len();
        let mut rng = seed::rng(seed::derive(spec.seed, "synthetic-rows"));
        let mut x = Array2::zeros((n, d));
        let mut labels = Vec::with_capacity(n);
        for (i, mut row) in x.outer_iter_mut().enumerate() {
            let class = if i < spec.n_benign {
                None
            } else {
                Some((i - spec.n_benign) / spec.n_per_attack_class)
            };
            let z = Array1::from_shape_fn(r, |_| rng.sample::<f64, _>(StandardNormal));
            let noise = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
            row.assign(&(&self.mean + &self.loadings.dot(&z) + &(noise * spec.noise_sigma)));
            match class {
                None => labels.push(BENIGN_LABEL.to_owned()),
                Some(k) => {
                    row.scaled_add(spec.attack_offsets[k], &self.directions[k]);
                    labels.push(SyntheticSpec::class_name(k));
                }
            }
        }
        let names = (0..d).map(|j| format!("f{j}")).collect();
        LabeledDataset::new(names, x, labels, BENIGN_LABEL).expect("shapes agree by construction")
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    Ok(SyntheticModel::new(spec.clone())?.sample())
}

fn orthonormal_columns(m: &Array2<f64>) -> Vec<Array1<f64>> {
    let mut basis: Vec<Array1<f64>> = Vec::new();
    for col in m.columns() {
        let mut v = col.to_owned();
        for b in &basis {
            let p = v.dot(b);
            v.scaled_add(-p, b);
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-10 {
            basis.push(v / norm);
        }
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SyntheticSpec {
        SyntheticSpec {
            n_benign: 200,
            n_per_attack_class: 50,
            n_features: 6,
            benign_covariance_rank: 2,
            attack_offsets: vec![0.0, 5.0],
            noise_sigma: 0.1,
            seed: 11,
        }
    }

    #[test]
    fn deterministic_by_seed() {
        let a = generate_synthetic(&spec()).unwrap();
        let b = generate_synthetic(&spec()).unwrap();
        assert_eq!(a, b);
        let mut s = spec();
        s.seed = 12;
        assert_ne!(generate_synthetic(&s).unwrap().features, a.features);
    }

    #[test]
    fn shapes_and_labels() {
        let d = generate_synthetic(&spec()).unwrap();
        assert_eq!(d.n_rows(), 300);
        assert_eq!(d.n_features(), 6);
        assert_eq!(d.class_index()["attack_1"].len(), 50);
        assert!(d.has_benign());
    }

    #[test]
    fn directions_orthogonal_to_manifold() {
        let m = SyntheticModel::new(spec()).unwrap();
        for dir in &m.directions {
            assert!((dir.dot(dir) - 1.0).abs() < 1e-12);
            for col in m.loadings.columns() {
                assert!(col.dot(dir).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = spec();
        s.benign_covariance_rank = 7;
        assert!(generate_synthetic(&s).is_err());
        let mut s = spec();
        s.noise_sigma = 0.0;
        assert!(generate_synthetic(&s).is_err());
        let mut s = spec();
        s.attack_offsets.clear();
        assert!(generate_synthetic(&s).is_err());
    }
}
