//! Zero-day evaluation protocol.
//!
//! Detectors see benign rows only during fitting. Each attack class is then
//! scored as if it were unseen: benign hold-out rows give specificity, and
//! every row of an attack class counts toward that class's recall.

mod report;

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{emit_report, ComparisonRow, Render, ReportFormat, REPORT_FORMAT};

use crate::autoencoder::{score_with, AutoencoderModel, LossKind};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::ocsvm::{self, KernelSpec, OneClassSvmModel, SmoConfig};
use crate::preprocess::PreprocessPipeline;

pub const ACCURACY_DEFINITION: &str =
    "overall accuracy = (benign rows not flagged + attack rows flagged) / all rows of the evaluated file";
pub const SPECIFICITY_DEFINITION: &str =
    "benign specificity = fraction of benign hold-out rows not flagged";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    Autoencoder,
    Ocsvm,
}

impl Detector {
    pub fn name(self) -> &'static str {
        match self {
            Detector::Autoencoder => "autoencoder",
            Detector::Ocsvm => "ocsvm",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Detector::Autoencoder => "ae",
            Detector::Ocsvm => "svm",
        }
    }

    /// Name of the swept parameter.
    pub fn parameter(self) -> &'static str {
        match self {
            Detector::Autoencoder => "threshold",
            Detector::Ocsvm => "nu",
        }
    }

    pub fn from_parameter(s: &str) -> Option<Self> {
        match s {
            "threshold" => Some(Detector::Autoencoder),
            "nu" => Some(Detector::Ocsvm),
            _ => None,
        }
    }
}

impl std::str::FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "autoencoder" => Ok(Detector::Autoencoder),
            "ocsvm" => Ok(Detector::Ocsvm),
            other => Err(Error::Format(format!("unknown detector {other:?}"))),
        }
    }
}

/// Strictly increasing, positive sweep values (thresholds or ν).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ThresholdSweep {
    values: Vec<f64>,
}

impl ThresholdSweep {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter(
                "sweep needs at least one value".into(),
            ));
        }
        if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(
                "sweep values must be positive".into(),
            ));
        }
        if values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter(
                "sweep values must be strictly increasing".into(),
            ));
        }
        Ok(ThresholdSweep { values })
    }

    /// Sorts and deduplicates before validating.
    pub fn from_unordered(mut values: Vec<f64>) -> Result<Self> {
        values.sort_by(f64::total_cmp);
        values.dedup();
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ThresholdSweep {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ThresholdSweep> for Vec<f64> {
    fn from(s: ThresholdSweep) -> Self {
        s.values
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub pipeline_id: Option<String>,
    pub model_ids: Vec<String>,
    pub seed: Option<u64>,
    pub loss_kind: Option<String>,
    pub timestamp: Option<String>,
    pub notes: Vec<String>,
}

/// Per-class rates over a sweep. Rates are fractions in `[0, 1]`;
/// `benign_specificity[k]` and each recall vector align with `sweep[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub detector: Detector,
    pub dataset_id: String,
    pub sweep: Vec<f64>,
    pub benign_label: String,
    pub benign_count: usize,
    pub benign_specificity: Vec<f64>,
    pub per_class_recall: BTreeMap<String, Vec<f64>>,
    pub class_counts: BTreeMap<String, usize>,
    pub overall_accuracy: Vec<f64>,
    pub metadata: ReportMetadata,
}

impl EvalReport {
    pub fn attack_classes(&self) -> Vec<&str> {
        self.per_class_recall.keys().map(String::as_str).collect()
    }

    fn sweep_index(&self, value: f64) -> Result<usize> {
        self.sweep
            .iter()
            .position(|v| (v - value).abs() <= 1e-12 * value.abs().max(1.0))
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "{} {value} is not in the {} sweep {:?}",
                    self.detector.parameter(),
                    self.detector.name(),
                    self.sweep
                ))
            })
    }

    /// Specificity then recall of every class at one sweep value.
    pub fn rates_at(&self, value: f64) -> Result<BTreeMap<String, f64>> {
        let k = self.sweep_index(value)?;
        let mut out: BTreeMap<String, f64> = self
            .per_class_recall
            .iter()
            .map(|(c, r)| (c.clone(), r[k]))
            .collect();
        out.insert(self.benign_label.clone(), self.benign_specificity[k]);
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.sweep.len();
        let aligned = self.benign_specificity.len() == n
            && self.overall_accuracy.len() == n
            && self.per_class_recall.values().all(|r| r.len() == n);
        if !aligned {
            return Err(Error::Format(
                "every rate row needs one value per sweep value".into(),
            ));
        }
        if self.per_class_recall.contains_key(&self.benign_label) {
            return Err(Error::Format(
                "benign class listed among attack classes".into(),
            ));
        }
        let in_range = |v: &f64| (0.0..=1.0).contains(v);
        if !(self.benign_specificity.iter().all(in_range)
            && self.overall_accuracy.iter().all(in_range)
            && self.per_class_recall.values().flatten().all(in_range))
        {
            return Err(Error::Format("rates must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

fn fraction(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 / total as f64
    }
}

/// Flags per row for one sweep value, folded into a report column.
struct Column {
    specificity: f64,
    recall: BTreeMap<String, f64>,
    accuracy: f64,
}

fn column(data: &LabeledDataset, flagged: &[bool]) -> Column {
    let mut correct = 0usize;
    let mut recall = BTreeMap::new();
    let mut specificity = 0.0;
    for (class, idx) in data.class_index() {
        let hits = idx.iter().filter(|&&i| flagged[i]).count();
        if *class == data.benign_label {
            let exceed = fraction(hits, idx.len());
            specificity = 1.0 - exceed;
            correct += idx.len() - hits;
        } else {
            recall.insert(class.clone(), fraction(hits, idx.len()));
            correct += hits;
        }
    }
    Column {
        specificity,
        recall,
        accuracy: fraction(correct, data.n_rows()),
    }
}

fn assemble(
    detector: Detector,
    dataset_id: &str,
    data: &LabeledDataset,
    sweep: &[f64],
    columns: Vec<Column>,
    metadata: ReportMetadata,
) -> EvalReport {
    let mut per_class_recall: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for c in data.attack_classes() {
        per_class_recall.insert(
            c.to_owned(),
            columns.iter().map(|col| col.recall[c]).collect(),
        );
    }
    let class_counts = data
        .class_index()
        .iter()
        .filter(|(c, _)| **c != data.benign_label)
        .map(|(c, idx)| (c.clone(), idx.len()))
        .collect();
    EvalReport {
        detector,
        dataset_id: dataset_id.to_owned(),
        sweep: sweep.to_vec(),
        benign_label: data.benign_label.clone(),
        benign_count: data
            .class_index()
            .get(&data.benign_label)
            .map_or(0, Vec::len),
        benign_specificity: columns.iter().map(|c| c.specificity).collect(),
        per_class_recall,
        class_counts,
        overall_accuracy: columns.iter().map(|c| c.accuracy).collect(),
        metadata,
    }
}

fn check_pipeline(expected: Option<&str>, pipeline: &PreprocessPipeline, what: &str) -> Result<()> {
    if let Some(id) = expected {
        let actual = pipeline.id();
        if id != actual {
            return Err(Error::Data(format!(
                "{what} was trained behind pipeline {} but pipeline {} was supplied",
                &id[..12.min(id.len())],
                &actual[..12]
            )));
        }
    }
    Ok(())
}

fn require_benign(data: &LabeledDataset) -> Result<()> {
    if !data.has_benign() {
        return Err(Error::Data(format!(
            "evaluation data has no benign hold-out rows (label {:?})",
            data.benign_label
        )));
    }
    Ok(())
}

/// Scores `data` (raw, pre-pipeline features) and sweeps thresholds. The
/// benign rows in `data` act as the hold-out set.
pub fn evaluate_autoencoder(
    model: &AutoencoderModel,
    pipeline: &PreprocessPipeline,
    data: &LabeledDataset,
    sweep: &ThresholdSweep,
    dataset_id: &str,
) -> Result<EvalReport> {
    evaluate_autoencoder_with(model, pipeline, data, sweep, dataset_id, model.loss_kind)
}

/// As [`evaluate_autoencoder`] with an explicit scoring loss.
pub fn evaluate_autoencoder_with(
    model: &AutoencoderModel,
    pipeline: &PreprocessPipeline,
    data: &LabeledDataset,
    sweep: &ThresholdSweep,
    dataset_id: &str,
    score_loss: LossKind,
) -> Result<EvalReport> {
    require_benign(data)?;
    check_pipeline(model.pipeline_id.as_deref(), pipeline, "autoencoder")?;
    let x = pipeline.apply(&data.features)?;
    let scores = score_with(model, &x, score_loss)?;
    let columns = sweep
        .values()
        .iter()
        .map(|&t| {
            let flagged: Vec<bool> = scores.iter().map(|s| *s > t).collect();
            column(data, &flagged)
        })
        .collect();
    let metadata = ReportMetadata {
        pipeline_id: Some(pipeline.id()),
        model_ids: vec![model.id()],
        loss_kind: Some(score_loss.to_string()),
        notes: vec![SPECIFICITY_DEFINITION.into(), ACCURACY_DEFINITION.into()],
        ..ReportMetadata::default()
    };
    Ok(assemble(
        Detector::Autoencoder,
        dataset_id,
        data,
        sweep.values(),
        columns,
        metadata,
    ))
}

/// Evaluates already-trained one-class SVMs, one per sweep value (ν).
pub fn evaluate_svm_models(
    models: &[OneClassSvmModel],
    pipeline: &PreprocessPipeline,
    data: &LabeledDataset,
    dataset_id: &str,
) -> Result<EvalReport> {
    require_benign(data)?;
    let nus: Vec<f64> = models.iter().map(|m| m.nu).collect();
    let sweep = ThresholdSweep::new(nus)?;
    for m in models {
        check_pipeline(
            m.pipeline_id.as_deref(),
            pipeline,
            &format!("ocsvm (nu={})", m.nu),
        )?;
    }
    let x = pipeline.apply(&data.features)?;
    let columns = models
        .iter()
        .map(|m| {
            let values = m.decision_values(&x)?;
            let flagged: Vec<bool> = values.iter().map(|v| *v <= 0.0).collect();
            Ok(column(data, &flagged))
        })
        .collect::<Result<Vec<_>>>()?;
    let metadata = ReportMetadata {
        pipeline_id: Some(pipeline.id()),
        model_ids: models.iter().map(OneClassSvmModel::id).collect(),
        notes: vec![SPECIFICITY_DEFINITION.into(), ACCURACY_DEFINITION.into()],
        ..ReportMetadata::default()
    };
    Ok(assemble(
        Detector::Ocsvm,
        dataset_id,
        data,
        sweep.values(),
        columns,
        metadata,
    ))
}

/// Fits one model per ν on the benign training rows (raw features), then
/// evaluates each on `data`.
pub fn train_svm_sweep(
    x_benign_train: &Array2<f64>,
    pipeline: &PreprocessPipeline,
    nus: &ThresholdSweep,
    kernel: &KernelSpec,
    cfg: &SmoConfig,
) -> Result<Vec<OneClassSvmModel>> {
    let x = pipeline.apply(x_benign_train)?;
    let pid = pipeline.id();
    nus.values()
        .par_iter()
        .map(|&nu| {
            let mut m = ocsvm::fit(&x, nu, kernel, cfg).map_err(|e| annotate(e, nu))?;
            m.pipeline_id = Some(pid.clone());
            Ok(m)
        })
        .collect()
}

fn annotate(e: Error, nu: f64) -> Error {
    match e {
        Error::NonConvergence {
            iterations,
            violation,
        } => {
            log::error!("ocsvm nu={nu} did not converge");
            Error::NonConvergence {
                iterations,
                violation,
            }
        }
        Error::InvalidParameter(m) => Error::InvalidParameter(format!("nu={nu}: {m}")),
        Error::Data(m) => Error::Data(format!("nu={nu}: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("nu={nu}: {m}")),
        other => other,
    }
}

pub fn evaluate_ocsvm(
    x_benign_train: &Array2<f64>,
    data: &LabeledDataset,
    pipeline: &PreprocessPipeline,
    nus: &ThresholdSweep,
    kernel: &KernelSpec,
    cfg: &SmoConfig,
    dataset_id: &str,
) -> Result<EvalReport> {
    let models = train_svm_sweep(x_benign_train, pipeline, nus, kernel, cfg)?;
    let mut r = evaluate_svm_models(&models, pipeline, data, dataset_id)?;
    r.metadata.seed = Some(cfg.seed);
    Ok(r)
}

/// Side-by-side rates of two reports at one sweep value each.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub dataset_id: String,
    pub a_detector: Detector,
    pub b_detector: Detector,
    pub a_value: f64,
    pub b_value: f64,
    /// Benign row first, then attack classes by name.
    pub rows: Vec<ComparisonRow>,
}

/// Reports parsed from CSV carry no dataset id; an empty id matches any other.
pub fn compare(a: &EvalReport, b: &EvalReport, t: f64, v: f64) -> Result<ComparisonReport> {
    if !a.dataset_id.is_empty() && !b.dataset_id.is_empty() && a.dataset_id != b.dataset_id {
        return Err(Error::Data(format!(
            "reports cover different datasets: {:?} vs {:?}",
            a.dataset_id, b.dataset_id
        )));
    }
    let ka: Vec<&str> = a.attack_classes();
    let kb: Vec<&str> = b.attack_classes();
    if ka != kb || a.benign_label != b.benign_label {
        let sa: std::collections::BTreeSet<&str> = ka
            .iter()
            .copied()
            .chain([a.benign_label.as_str()])
            .collect();
        let sb: std::collections::BTreeSet<&str> = kb
            .iter()
            .copied()
            .chain([b.benign_label.as_str()])
            .collect();
        let diff: Vec<&str> = sa.symmetric_difference(&sb).copied().collect();
        return Err(Error::Data(format!(
            "class sets differ: {}",
            diff.join(", ")
        )));
    }
    let ra = a.rates_at(t)?;
    let rb = b.rates_at(v)?;
    let same = a.detector == b.detector;
    let tag = |first: bool| -> String {
        match (same, first) {
            (true, true) => "a".into(),
            (true, false) => "b".into(),
            (false, true) => a.detector.name().into(),
            (false, false) => b.detector.name().into(),
        }
    };
    let mut names = vec![a.benign_label.clone()];
    names.extend(ka.iter().map(|s| s.to_string()));
    let rows = names
        .into_iter()
        .map(|class| {
            let (x, y) = (ra[&class], rb[&class]);
            let winner = if x > y {
                Some(tag(true))
            } else if y > x {
                Some(tag(false))
            } else {
                None
            };
            ComparisonRow {
                class,
                a_rate: x,
                b_rate: y,
                winner,
            }
        })
        .collect();
    let dataset_id = if a.dataset_id.is_empty() {
        &b.dataset_id
    } else {
        &a.dataset_id
    };
    Ok(ComparisonReport {
        dataset_id: dataset_id.clone(),
        a_detector: a.detector,
        b_detector: b.detector,
        a_value: a.sweep[a.sweep_index(t)?],
        b_value: b.sweep[b.sweep_index(v)?],
        rows,
    })
}
