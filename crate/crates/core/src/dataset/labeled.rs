use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::table::{Column, FeatureTable};
use crate::error::{Error, Result};
use crate::seed;

/// Numeric feature matrix with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub feature_names: Vec<String>,
    pub features: Array2<f64>,
    pub labels: Vec<String>,
    pub benign_label: String,
    class_index: BTreeMap<String, Vec<usize>>,
}

impl LabeledDataset {
    pub fn new(
        feature_names: Vec<String>,
        features: Array2<f64>,
        labels: Vec<String>,
        benign_label: impl Into<String>,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Dimension {
                expected: features.nrows(),
                actual: labels.len(),
            });
        }
        if features.ncols() != feature_names.len() {
            return Err(Error::Dimension {
                expected: feature_names.len(),
                actual: features.ncols(),
            });
        }
        let mut class_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, l) in labels.iter().enumerate() {
            class_index.entry(l.clone()).or_default().push(i);
        }
        Ok(LabeledDataset {
            feature_names,
            features,
            labels,
            benign_label: benign_label.into(),
            class_index,
        })
    }

    /// Builds a dataset from an already-encoded, fully numeric table.
    pub fn from_table(table: &FeatureTable, benign_label: &str) -> Result<Self> {
        let labels = table
            .labels
            .clone()
            .ok_or_else(|| Error::Data("table has no label column".into()))?;
        let n = table.n_rows();
        let mut features = Array2::zeros((n, table.n_columns()));
        for (j, (name, col)) in table.column_names.iter().zip(&table.columns).enumerate() {
            match col {
                Column::Numeric(v) => {
                    for (i, x) in v.iter().enumerate() {
                        features[[i, j]] = *x;
                    }
                }
                Column::Categorical(_) => {
                    return Err(Error::Data(format!(
                        "column {name:?} is categorical; encode it first"
                    )))
                }
            }
        }
        Self::new(table.column_names.clone(), features, labels, benign_label)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_index(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.class_index
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.class_index.keys().map(String::as_str)
    }

    /// Attack classes in name order (every class except the benign one).
    pub fn attack_classes(&self) -> Vec<&str> {
        self.classes().filter(|c| *c != self.benign_label).collect()
    }

    pub fn has_benign(&self) -> bool {
        self.class_index.contains_key(&self.benign_label)
    }

    pub fn rows_of(&self, class: &str) -> Array2<f64> {
        match self.class_index.get(class) {
            Some(idx) => self.features.select(Axis(0), idx),
            None => Array2::zeros((0, self.n_features())),
        }
    }

    pub fn benign_rows(&self) -> Array2<f64> {
        self.rows_of(&self.benign_label)
    }

    /// Row subset, preserving the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        Self::new(
            self.feature_names.clone(),
            self.features.select(Axis(0), rows),
            rows.iter().map(|&i| self.labels[i].clone()).collect(),
            self.benign_label.clone(),
        )
    }

    /// Renames labels through `map`; labels absent from the map are kept.
    pub fn map_labels(&self, map: &BTreeMap<String, String>) -> Result<Self> {
        let labels = self
            .labels
            .iter()
            .map(|l| map.get(l).cloned().unwrap_or_else(|| l.clone()))
            .collect();
        let benign = map
            .get(&self.benign_label)
            .cloned()
            .unwrap_or_else(|| self.benign_label.clone());
        Self::new(
            self.feature_names.clone(),
            self.features.clone(),
            labels,
            benign,
        )
    }

    /// The zero-day evaluation view: the given benign hold-out rows plus every
    /// attack row.
    pub fn holdout_view(&self, benign_rows: &[usize]) -> Result<Self> {
        let mut rows = benign_rows.to_vec();
        for (class, idx) in &self.class_index {
            if *class != self.benign_label {
                rows.extend_from_slice(idx);
            }
        }
        self.subset(&rows)
    }

    /// Writes the dataset as CSV with the label in a trailing column.
    pub fn write_csv(&self, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.feature_names.clone();
        header.push(label_column.to_owned());
        w.write_record(&header)?;
        for (row, label) in self.features.outer_iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| format_real(*v)).collect();
            rec.push(label.clone());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Shortest decimal representation that parses back to the same bits.
pub fn format_real(v: f64) -> String {
    format!("{v}")
}

/// Writes a bare numeric matrix with a header row.
pub fn write_matrix_csv(path: impl AsRef<Path>, names: &[String], x: &Array2<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(names)?;
    for row in x.outer_iter() {
        w.write_record(row.iter().map(|v| format_real(*v)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a matrix written by [`write_matrix_csv`].
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Array2<f64>)> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let names: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != names.len() {
            return Err(Error::Data(format!(
                "{}: row {} is ragged",
                path.display(),
                rows + 2
            )));
        }
        for cell in rec.iter() {
            data.push(
                cell.parse::<f64>()
                    .map_err(|_| Error::Data(format!("{}: bad number {cell:?}", path.display())))?,
            );
        }
        rows += 1;
    }
    let x = Array2::from_shape_vec((rows, names.len()), data)
        .map_err(|e| Error::Data(e.to_string()))?;
    Ok((names, x))
}

/// How benign rows are divided into training and validation parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.75,
            seed: 0,
            shuffle: true,
        }
    }
}

/// Row indices (into the full dataset) of the benign train and validation
/// parts. The first `floor(train_fraction * n)` shuffled rows go to training.
pub fn split_benign_indices(
    dataset: &LabeledDataset,
    spec: &SplitSpec,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train_fraction must lie in (0,1), got {}",
            spec.train_fraction
        )));
    }
    let mut rows = dataset
        .class_index()
        .get(&dataset.benign_label)
        .cloned()
        .unwrap_or_default();
    if rows.len() < 2 {
        return Err(Error::Data(format!(
            "need at least 2 rows of benign class {:?}, found {}",
            dataset.benign_label,
            rows.len()
        )));
    }
    if spec.shuffle {
        rows.shuffle(&mut seed::rng(spec.seed));
    }
    let n_train = (spec.train_fraction * rows.len() as f64).floor() as usize;
    if n_train == 0 || n_train == rows.len() {
        return Err(Error::Data(format!(
            "train fraction {} of {} benign rows leaves an empty part",
            spec.train_fraction,
            rows.len()
        )));
    }
    let validation = rows.split_off(n_train);
    Ok((rows, validation))
}

/// Benign-only train/validation matrices.
pub fn split_benign(
    dataset: &LabeledDataset,
    spec: &SplitSpec,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let (train, val) = split_benign_indices(dataset, spec)?;
    Ok((
        dataset.features.select(Axis(0), &train),
        dataset.features.select(Axis(0), &val),
    ))
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use ndarray::Array;

    use super::*;

    fn toy(n_benign: usize, n_attack: usize) -> LabeledDataset {
        let n = n_benign + n_attack;
        let x = Array::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        let labels = (0..n)
            .map(|i| if i < n_benign { "benign" } else { "dos" }.to_string())
            .collect();
        LabeledDataset::new(vec!["a".into(), "b".into()], x, labels, "benign").unwrap()
    }

    #[test]
    fn class_index_partitions_rows() {
        let d = toy(5, 3);
        let mut all: Vec<usize> = d.class_index().values().flatten().copied().collect();
        all.sort();
        assert_eq!(all, (0..8).collect::<Vec<_>>());
        assert_eq!(d.attack_classes(), vec!["dos"]);
    }

    #[test]
    fn split_75_25_disjoint() {
        let d = toy(100, 10);
        let spec = SplitSpec {
            seed: 3,
            ..Default::default()
        };
        let (tr, va) = split_benign_indices(&d, &spec).unwrap();
        assert_eq!((tr.len(), va.len()), (75, 25));
        let a: HashSet<_> = tr.iter().collect();
        assert!(va.iter().all(|i| !a.contains(i)));
        assert!(tr.iter().chain(&va).all(|&i| i < 100));
        assert_eq!(split_benign_indices(&d, &spec).unwrap(), (tr, va));
    }

    #[test]
    fn split_half_of_four() {
        let d = toy(4, 0);
        let spec = SplitSpec {
            train_fraction: 0.5,
            ..Default::default()
        };
        let (tr, va) = split_benign(&d, &spec).unwrap();
        assert_eq!((tr.nrows(), va.nrows()), (2, 2));
    }

    #[test]
    fn split_needs_two_benign() {
        assert!(split_benign(&toy(1, 5), &SplitSpec::default()).is_err());
        let d = toy(0, 5);
        assert!(split_benign(&d, &SplitSpec::default()).is_err());
    }

    #[test]
    fn unshuffled_split_keeps_order() {
        let d = toy(8, 0);
        let spec = SplitSpec {
            shuffle: false,
            ..Default::default()
        };
        let (tr, va) = split_benign_indices(&d, &spec).unwrap();
        assert_eq!(tr, (0..6).collect::<Vec<_>>());
        assert_eq!(va, vec![6, 7]);
    }

    #[test]
    fn holdout_view_contains_holdout_and_attacks() {
        let d = toy(6, 3);
        let v = d.holdout_view(&[1, 4]).unwrap();
        assert_eq!(v.n_rows(), 5);
        assert_eq!(v.class_index()["benign"].len(), 2);
        assert_eq!(v.class_index()["dos"].len(), 3);
    }
}
