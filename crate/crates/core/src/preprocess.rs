//! Benign-only preprocessing: correlated-feature pruning then standard scaling.
//!
//! Everything here is fitted on benign rows and replayed unchanged on attack
//! and test rows.

use std::path::Path;

use ndarray::{Array1, Array2, Axis, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;

pub const PIPELINE_FORMAT: &str = "zeroday-pipeline/1";

/// Absolute Pearson correlation between every pair of columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub values: Array2<f64>,
    /// Columns whose values are all identical; their off-diagonal entries are 0.
    pub constant: Vec<bool>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }
}

pub fn correlation_matrix(x: &Array2<f64>) -> Result<CorrelationMatrix> {
    let (n, d) = x.dim();
    if n < 2 {
        return Err(Error::Data(format!(
            "correlation needs at least 2 rows, got {n}"
        )));
    }
    let mean = x.mean_axis(Axis(0)).expect("n >= 2");
    let centered = x - &mean;
    let constant: Vec<bool> = x
        .columns()
        .into_iter()
        .map(|c| c.iter().all(|v| *v == c[0]))
        .collect();
    let cov = centered.t().dot(&centered);
    let mut values = Array2::zeros((d, d));
    for i in 0..d {
        values[[i, i]] = if constant[i] { 0.0 } else { 1.0 };
        for j in (i + 1)..d {
            let r = if constant[i] || constant[j] {
                0.0
            } else {
                (cov[[i, j]] / (cov[[i, i]] * cov[[j, j]]).sqrt())
                    .abs()
                    .min(1.0)
            };
            values[[i, j]] = r;
            values[[j, i]] = r;
        }
    }
    Ok(CorrelationMatrix { values, constant })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedColumn {
    pub column: String,
    pub witness: String,
    pub correlation: f64,
}

/// Outcome of correlation pruning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropReport {
    /// `None` when pruning is disabled.
    pub threshold: Option<f64>,
    /// Witness rule used for pruning; always "kept-witness".
    pub rule: String,
    pub kept: Vec<String>,
    pub dropped: Vec<DroppedColumn>,
    /// Zero-variance columns removed before correlation pruning.
    pub constant: Vec<String>,
}

impl DropReport {
    pub fn passthrough(names: &[String]) -> Self {
        DropReport {
            threshold: None,
            rule: "kept-witness".into(),
            kept: names.to_vec(),
            dropped: Vec::new(),
            constant: Vec::new(),
        }
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "kept {} columns, dropped {} correlated and {} constant",
            self.kept.len(),
            self.dropped.len(),
            self.constant.len()
        );
        if let Some(t) = self.threshold {
            s.push_str(&format!(" (threshold {t})"));
        }
        for d in &self.dropped {
            s.push_str(&format!(
                "\n  drop {} (|r|={:.4} with {})",
                d.column, d.correlation, d.witness
            ));
        }
        for c in &self.constant {
            s.push_str(&format!("\n  drop {c} (constant)"));
        }
        s
    }
}

/// Drops columns whose |r| with an earlier *kept* column exceeds `threshold`.
///
/// Constant columns are removed first (unless every column is constant, in
/// which case column 0 survives). The first non-constant column is always kept.
pub fn drop_correlated_features(
    x: &Array2<f64>,
    names: &[String],
    threshold: f64,
) -> Result<(Array2<f64>, DropReport)> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold must lie in (0,1], got {threshold}"
        )));
    }
    if names.len() != x.ncols() {
        return Err(Error::Dimension {
            expected: x.ncols(),
            actual: names.len(),
        });
    }
    let corr = correlation_matrix(x)?;
    let all_constant = corr.constant.iter().all(|c| *c);
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    let mut constant = Vec::new();
    for j in 0..x.ncols() {
        if corr.constant[j] && !(all_constant && j == 0) {
            constant.push(names[j].clone());
            continue;
        }
        let witness = kept.iter().copied().find(|&i| corr.get(i, j) > threshold);
        match witness {
            Some(i) => dropped.push(DroppedColumn {
                column: names[j].clone(),
                witness: names[i].clone(),
                correlation: corr.get(i, j),
            }),
            None => kept.push(j),
        }
    }
    let report = DropReport {
        threshold: Some(threshold),
        rule: "kept-witness".into(),
        kept: kept.iter().map(|&i| names[i].clone()).collect(),
        dropped,
        constant,
    };
    Ok((x.select(Axis(1), &kept), report))
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub means: Vec<f64>,
    /// Strictly positive; constant columns store 1.
    pub stds: Vec<f64>,
}

impl StandardScaler {
    pub fn identity(d: usize) -> Self {
        StandardScaler {
            means: vec![0.0; d],
            stds: vec![1.0; d],
        }
    }

    pub fn transform(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.means.len() {
            return Err(Error::Dimension {
                expected: self.means.len(),
                actual: x.ncols(),
            });
        }
        let mean = Array1::from(self.means.clone());
        let std = Array1::from(self.stds.clone());
        let mut out = x.to_owned();
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .for_each(|mut row| {
                Zip::from(&mut row)
                    .and(&mean)
                    .and(&std)
                    .for_each(|v, m, s| *v = (*v - m) / s);
            });
        Ok(out)
    }
}

pub fn fit_scaler(x: &Array2<f64>) -> Result<StandardScaler> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::Data("cannot fit a scaler on zero rows".into()));
    }
    let mut means = Vec::with_capacity(x.ncols());
    let mut stds = Vec::with_capacity(x.ncols());
    for col in x.columns() {
        let mean = col.sum() / n as f64;
        let constant = col.iter().all(|v| *v == col[0]);
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        means.push(if constant { col[0] } else { mean });
        stds.push(if constant || var == 0.0 {
            1.0
        } else {
            var.sqrt()
        });
    }
    Ok(StandardScaler { means, stds })
}

/// Fitted, immutable preprocessing transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessPipeline {
    pub format: String,
    pub input_names: Vec<String>,
    pub drop: DropReport,
    pub scaler: StandardScaler,
    pub std_convention: String,
    pub fitted_on: Fingerprint,
    #[serde(skip)]
    kept_idx: Vec<usize>,
}

impl PreprocessPipeline {
    /// Fits pruning (when `threshold` is given) and scaling on benign rows.
    pub fn fit(benign: &Array2<f64>, names: &[String], threshold: Option<f64>) -> Result<Self> {
        if names.len() != benign.ncols() {
            return Err(Error::Dimension {
                expected: benign.ncols(),
                actual: names.len(),
            });
        }
        let (kept_x, drop) = match threshold {
            Some(t) => drop_correlated_features(benign, names, t)?,
            None => (benign.clone(), DropReport::passthrough(names)),
        };
        let scaler = fit_scaler(&kept_x)?;
        Self::assemble(names.to_vec(), drop, scaler, Fingerprint::of_matrix(benign))
    }

    pub fn assemble(
        input_names: Vec<String>,
        drop: DropReport,
        scaler: StandardScaler,
        fitted_on: Fingerprint,
    ) -> Result<Self> {
        let mut p = PreprocessPipeline {
            format: PIPELINE_FORMAT.into(),
            input_names,
            drop,
            scaler,
            std_convention: "population".into(),
            fitted_on,
            kept_idx: Vec::new(),
        };
        p.resolve()?;
        Ok(p)
    }

    fn resolve(&mut self) -> Result<()> {
        if self.scaler.means.len() != self.drop.kept.len()
            || self.scaler.stds.len() != self.drop.kept.len()
        {
            return Err(Error::Format(
                "scaler dimensions do not match kept columns".into(),
            ));
        }
        if self.scaler.stds.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Format(
                "scaler stds must be strictly positive".into(),
            ));
        }
        self.kept_idx = self
            .drop
            .kept
            .iter()
            .map(|k| {
                self.input_names.iter().position(|n| n == k).ok_or_else(|| {
                    Error::Format(format!("kept column {k:?} is not an input column"))
                })
            })
            .collect::<Result<_>>()?;
        Ok(())
    }

    pub fn n_inputs(&self) -> usize {
        self.input_names.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.drop.kept.len()
    }

    /// Selects the kept columns and standardizes with the fitted statistics.
    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_inputs() {
            return Err(Error::Dimension {
                expected: self.n_inputs(),
                actual: x.ncols(),
            });
        }
        self.scaler.transform(&x.select(Axis(1), &self.kept_idx))
    }

    /// Content fingerprint of the serialized pipeline.
    pub fn id(&self) -> String {
        crate::fingerprint::sha256_hex(self.to_json().as_bytes())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pipeline serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut p: PreprocessPipeline = serde_json::from_str(s)?;
        if p.format != PIPELINE_FORMAT {
            return Err(Error::Format(format!(
                "unsupported pipeline format {:?}",
                p.format
            )));
        }
        p.resolve()?;
        Ok(p)
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

pub fn apply_pipeline(p: &PreprocessPipeline, x: &Array2<f64>) -> Result<Array2<f64>> {
    p.apply(x)
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array};
    use rand::Rng;

    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn duplicated_and_scaled_columns_fully_correlated() {
        let x = array![[1.0, 2.0, 1.0], [2.0, 4.0, 3.0], [3.0, 6.0, 2.0]];
        let c = correlation_matrix(&x).unwrap();
        assert!(close(c.get(0, 1), 1.0, 1e-12));
        assert!(close(c.get(0, 2), 0.5, 1e-12));
        assert_eq!(c.get(1, 0), c.get(0, 1));
    }

    #[test]
    fn correlation_needs_two_rows() {
        assert!(correlation_matrix(&array![[1.0, 2.0]]).is_err());
    }

    #[test]
    fn constant_column_correlates_zero() {
        let x = array![[1.0, 5.0], [2.0, 5.0], [4.0, 5.0]];
        let c = correlation_matrix(&x).unwrap();
        assert_eq!(c.get(0, 1), 0.0);
        assert!(c.constant[1]);
    }

    #[test]
    fn identical_pair_drops_second() {
        let x = array![[1.0, 1.0], [2.0, 2.0], [5.0, 5.0]];
        let (kept, rep) = drop_correlated_features(&x, &["a".into(), "b".into()], 0.9).unwrap();
        assert_eq!(kept.ncols(), 1);
        assert_eq!(rep.kept, vec!["a"]);
        assert_eq!(rep.dropped[0].column, "b");
        assert_eq!(rep.dropped[0].witness, "a");
    }

    #[test]
    fn kept_witness_rule() {
        // a,c identical; b orthogonal to both
        let x = array![
            [1.0, 1.0, 1.0],
            [-1.0, 1.0, -1.0],
            [1.0, -1.0, 1.0],
            [-1.0, -1.0, -1.0]
        ];
        let (_, rep) =
            drop_correlated_features(&x, &["a".into(), "b".into(), "c".into()], 0.9).unwrap();
        assert_eq!(rep.kept, vec!["a", "b"]);
        assert_eq!(rep.dropped.len(), 1);
        assert_eq!(rep.dropped[0].column, "c");
    }

    #[test]
    fn chain_is_not_dropped_through_a_dropped_column() {
        // b ~ a (dropped); c correlates strongly with b only.
        let mut rng = crate::seed::rng(5);
        let n = 400;
        let a: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let e1: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let e2: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let x = Array::from_shape_fn((n, 3), |(i, j)| match j {
            0 => a[i],
            1 => a[i] + 0.45 * e1[i],
            _ => a[i] + 0.45 * e1[i] + 0.45 * e2[i] + 0.9 * e1[i],
        });
        let c = correlation_matrix(&x).unwrap();
        let (_, rep) = drop_correlated_features(&x, &names(3), 0.8).unwrap();
        if c.get(0, 1) > 0.8 && c.get(0, 2) <= 0.8 {
            assert!(rep.kept.contains(&"c2".to_string()));
        }
    }

    #[test]
    fn threshold_one_never_drops_distinct_columns() {
        let mut rng = crate::seed::rng(1);
        let x = Array::from_shape_fn((50, 5), |_| rng.random::<f64>());
        let (_, rep) = drop_correlated_features(&x, &names(5), 1.0).unwrap();
        assert!(rep.dropped.is_empty());
    }

    #[test]
    fn bad_threshold_rejected() {
        let x = array![[1.0], [2.0]];
        assert!(drop_correlated_features(&x, &names(1), 0.0).is_err());
        assert!(drop_correlated_features(&x, &names(1), 1.5).is_err());
    }

    #[test]
    fn all_constant_keeps_first() {
        let x = array![[1.0, 2.0], [1.0, 2.0]];
        let (kx, rep) = drop_correlated_features(&x, &names(2), 0.9).unwrap();
        assert_eq!(kx.ncols(), 1);
        assert_eq!(rep.kept, vec!["c0"]);
    }

    #[test]
    fn scaler_population_std() {
        let s = fit_scaler(&array![[2.0], [4.0], [6.0]]).unwrap();
        assert_eq!(s.means, vec![4.0]);
        assert!(close(s.stds[0], (8.0f64 / 3.0).sqrt(), 1e-15));
    }

    #[test]
    fn scaler_constant_column() {
        let s = fit_scaler(&array![[5.0], [5.0]]).unwrap();
        assert_eq!((s.means[0], s.stds[0]), (5.0, 1.0));
        assert_eq!(
            s.transform(&array![[5.0], [5.0]]).unwrap(),
            array![[0.0], [0.0]]
        );
        let s = fit_scaler(&array![[0.1], [0.1], [0.1]]).unwrap();
        assert_eq!(s.transform(&array![[0.1]]).unwrap()[[0, 0]], 0.0);
    }

    #[test]
    fn standardized_fit_set_has_zero_mean_unit_variance() {
        let mut rng = crate::seed::rng(9);
        let x = Array::from_shape_fn((200, 4), |(_, j)| {
            rng.random::<f64>() * (j + 1) as f64 + j as f64
        });
        let z = fit_scaler(&x).unwrap().transform(&x).unwrap();
        for c in z.columns() {
            let m = c.mean().unwrap();
            let v = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / c.len() as f64;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pipeline_replays_fit_output_and_ignores_attacks() {
        let mut rng = crate::seed::rng(2);
        let benign = Array::from_shape_fn((100, 3), |_| rng.random::<f64>());
        let p = PreprocessPipeline::fit(&benign, &names(3), Some(0.9)).unwrap();
        let once = p.apply(&benign).unwrap();
        assert_eq!(once, p.apply(&benign).unwrap());
        let attack = Array::from_shape_fn((10, 3), |_| 50.0 + rng.random::<f64>());
        let before = p.clone();
        let _ = p.apply(&attack).unwrap();
        assert_eq!(before, p);
        assert!(p.apply(&array![[1.0, 2.0]]).is_err());
    }

    #[test]
    fn identity_pipeline() {
        let x = array![[1.5, -2.0], [0.25, 3.0]];
        let nm = names(2);
        let p = PreprocessPipeline::assemble(
            nm.clone(),
            DropReport::passthrough(&nm),
            StandardScaler::identity(2),
            Fingerprint::of_matrix(&x),
        )
        .unwrap();
        assert_eq!(p.apply(&x).unwrap(), x);
    }

    #[test]
    fn pipeline_json_round_trip() {
        let mut rng = crate::seed::rng(4);
        let x = Array::from_shape_fn((30, 4), |_| rng.random::<f64>() / 3.0);
        let p = PreprocessPipeline::fit(&x, &names(4), Some(0.9)).unwrap();
        let q = PreprocessPipeline::from_json(&p.to_json()).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.apply(&x).unwrap(), q.apply(&x).unwrap());
        assert_eq!(p.to_json(), q.to_json());
    }
}
