use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use zeroday_core::autoencoder::{
    build_autoencoder, random_search, train, Architecture, AutoencoderModel, SearchSpace,
    TrainConfig, TrainHistory,
};
use zeroday_core::dataset::{
    format_real, generate_synthetic, load_feature_csv, read_matrix_csv, split_benign_indices,
    write_matrix_csv, CategoricalEncoder, LabeledDataset, SplitSpec,
};
use zeroday_core::eval::{
    compare, emit_report, evaluate_autoencoder_with, evaluate_svm_models, ComparisonReport,
    EvalReport, Render, ReportFormat, ThresholdSweep,
};
use zeroday_core::ocsvm::{self, OneClassSvmModel};
use zeroday_core::preprocess::PreprocessPipeline;
use zeroday_core::{seed, Error, Fingerprint};

use crate::config::{Needs, RunConfig};

pub const PIPELINE_FILE: &str = "pipeline.json";
pub const ENCODER_FILE: &str = "encoder.json";
pub const SPLIT_FILE: &str = "split.json";
pub const DROP_REPORT_FILE: &str = "drop_report.json";
pub const RUN_FILE: &str = "run.json";
pub const BENIGN_TRAIN_FILE: &str = "benign_train.csv";
pub const BENIGN_VALIDATION_FILE: &str = "benign_validation.csv";
pub const AUTOENCODER_FILE: &str = "autoencoder.json";
pub const HISTORY_TRAIN_FILE: &str = "history_train.csv";
pub const HISTORY_VALIDATION_FILE: &str = "history_validation.csv";
pub const BEST_CONFIG_FILE: &str = "best_config.json";
pub const TRIALS_FILE: &str = "trials.csv";
pub const COMPARISON_STEM: &str = "comparison";
pub const PLOT_FILE: &str = "comparison_plot.csv";

pub fn svm_model_file(nu: f64) -> String {
    format!("ocsvm_nu_{}.json", format_real(nu))
}

/// Benign split of the training file, by row index into that file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SplitRecord {
    spec: SplitSpec,
    train_rows: Vec<usize>,
    validation_rows: Vec<usize>,
    /// Raw benign training matrix the pipeline was fitted on.
    source: Fingerprint,
}

/// Seeds and settings of a run.
#[derive(Debug, Serialize)]
struct RunRecord<'a> {
    seed: u64,
    sub_seeds: BTreeMap<&'static str, u64>,
    config: &'a RunConfig,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text).map_err(Error::from)?)
}

fn create_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

fn load_pipeline(dir: &Path) -> Result<PreprocessPipeline> {
    let path = dir.join(PIPELINE_FILE);
    if !path.is_file() {
        return Err(Error::Data(format!(
            "no preprocessing pipeline at {}; run `zeroday preprocess` with this config first",
            path.display()
        ))
        .into());
    }
    Ok(PreprocessPipeline::load(&path)?)
}

/// Reads a transformed matrix and checks it matches the pipeline output.
fn load_matrix(dir: &Path, name: &str, pipeline: &PreprocessPipeline) -> Result<Array2<f64>> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(Error::Data(format!(
            "missing {}; run `zeroday preprocess` with this config first",
            path.display()
        ))
        .into());
    }
    let (names, x) = read_matrix_csv(&path)?;
    if names != pipeline.drop.kept {
        return Err(Error::Data(format!(
            "{} columns do not match the pipeline's kept columns",
            path.display()
        ))
        .into());
    }
    Ok(x)
}

fn labeled(cfg: &RunConfig, encoder: &CategoricalEncoder, path: &Path) -> Result<LabeledDataset> {
    let d = cfg.dataset();
    let table = load_feature_csv(path, &d.load_options())?;
    let encoded = encoder.apply(&table)?;
    let data = LabeledDataset::from_table(&encoded, &d.benign_label())?;
    Ok(data.map_labels(&d.class_map())?)
}

fn sub_seeds(run_seed: u64) -> BTreeMap<&'static str, u64> {
    seed::fan_out(run_seed).into_iter().collect()
}

pub fn preprocess(cfg: &RunConfig) -> Result<()> {
    cfg.validate(Needs::Preprocess)?;
    let d = cfg.dataset();
    let out = cfg.out_dir();
    create_out_dir(out)?;

    let table = load_feature_csv(&d.train, &d.load_options())?;
    let encoder = CategoricalEncoder::fit(&table);
    let data = LabeledDataset::from_table(&encoder.apply(&table)?, &d.benign_label())?
        .map_labels(&d.class_map())?;
    let spec = SplitSpec {
        train_fraction: d.train_fraction,
        seed: seed::derive(cfg.seed, seed::SPLIT),
        shuffle: true,
    };
    let (train_rows, validation_rows) = split_benign_indices(&data, &spec)?;
    let benign_train = data.features.select(Axis(0), &train_rows);
    let benign_val = data.features.select(Axis(0), &validation_rows);
    let pipeline =
        PreprocessPipeline::fit(&benign_train, &data.feature_names, cfg.prune_threshold())?;

    pipeline.save(out.join(PIPELINE_FILE))?;
    write_json(&out.join(ENCODER_FILE), &encoder)?;
    write_json(&out.join(DROP_REPORT_FILE), &pipeline.drop)?;
    write_json(
        &out.join(SPLIT_FILE),
        &SplitRecord {
            spec,
            train_rows,
            validation_rows,
            source: pipeline.fitted_on.clone(),
        },
    )?;
    write_json(
        &out.join(RUN_FILE),
        &RunRecord {
            seed: cfg.seed,
            sub_seeds: sub_seeds(cfg.seed),
            config: cfg,
        },
    )?;
    write_matrix_csv(
        out.join(BENIGN_TRAIN_FILE),
        &pipeline.drop.kept,
        &pipeline.apply(&benign_train)?,
    )?;
    write_matrix_csv(
        out.join(BENIGN_VALIDATION_FILE),
        &pipeline.drop.kept,
        &pipeline.apply(&benign_val)?,
    )?;

    println!(
        "{} rows, {} encoded columns, benign split {}/{}",
        data.n_rows(),
        data.n_features(),
        benign_train.nrows(),
        benign_val.nrows()
    );
    println!("{}", pipeline.drop.summary());
    println!("wrote {}", out.display());
    Ok(())
}

pub fn train_autoencoder(cfg: &RunConfig) -> Result<()> {
    cfg.validate(Needs::TrainAutoencoder)?;
    let ae = cfg.autoencoder.as_ref().expect("validated");
    let out = cfg.out_dir();
    let pipeline = load_pipeline(out)?;
    let x_train = load_matrix(out, BENIGN_TRAIN_FILE, &pipeline)?;
    let x_val = load_matrix(out, BENIGN_VALIDATION_FILE, &pipeline)?;

    let arch = Architecture::new(pipeline.n_outputs(), &ae.hidden).with_activation(ae.activation());
    let mut model = build_autoencoder(&arch, ae.l2, seed::derive(cfg.seed, seed::INIT))?;
    model.pipeline_id = Some(pipeline.id());
    let tc = TrainConfig {
        epochs: ae.epochs,
        batch_size: ae.batch_size,
        learning_rate: ae.learning_rate,
        l2_lambda: ae.l2,
        loss_kind: ae.loss(),
        seed: seed::derive(cfg.seed, seed::BATCH),
    };
    let (model, history) = train(&model, &tc, &x_train, &x_val)?;
    if !model.is_finite() {
        return Err(Error::Numeric(
            "training diverged to non-finite weights; lower learning_rate".into(),
        )
        .into());
    }
    model.save(out.join(AUTOENCODER_FILE))?;
    TrainHistory::write_curve(out.join(HISTORY_TRAIN_FILE), &history.train_loss)?;
    TrainHistory::write_curve(out.join(HISTORY_VALIDATION_FILE), &history.validation_loss)?;
    println!(
        "trained {} ({} parameters) for {} epochs; final train loss {}, validation loss {}",
        arch,
        model.n_parameters(),
        history.epochs(),
        history
            .train_loss
            .last()
            .map_or("-".into(), |v| format!("{v:.6}")),
        history
            .validation_loss
            .last()
            .map_or("-".into(), |v| format!("{v:.6}")),
    );
    Ok(())
}

pub fn train_svm(cfg: &RunConfig) -> Result<()> {
    cfg.validate(Needs::TrainSvm)?;
    let svm = cfg.ocsvm.as_ref().expect("validated");
    let out = cfg.out_dir();
    let pipeline = load_pipeline(out)?;
    let x_train = load_matrix(out, BENIGN_TRAIN_FILE, &pipeline)?;
    let kernel = svm.kernel();
    let smo = svm.smo(seed::derive(cfg.seed, seed::SMO));
    let pid = pipeline.id();
    let models: Vec<OneClassSvmModel> = cfg
        .sweep_values()
        .par_iter()
        .map(|&nu| {
            let mut m = ocsvm::fit(&x_train, nu, &kernel, &smo)
                .with_context(|| format!("one-class SVM at nu={nu}"))?;
            m.pipeline_id = Some(pid.clone());
            Ok(m)
        })
        .collect::<Result<_>>()?;
    for m in &models {
        m.save(out.join(svm_model_file(m.nu)))?;
        println!(
            "nu={}: {} support vectors of {}, rho {:.6}, {} iterations",
            m.nu,
            m.n_support(),
            m.n_train,
            m.rho,
            m.iterations
        );
    }
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    cfg.validate(Needs::Evaluate)?;
    let out = cfg.out_dir();
    let d = cfg.dataset();
    let pipeline = load_pipeline(out)?;
    let encoder: CategoricalEncoder = read_json(&out.join(ENCODER_FILE))?;
    let split: SplitRecord = read_json(&out.join(SPLIT_FILE))?;
    if encoder.output_names() != pipeline.input_names {
        bail!(Error::Data(
            "encoder and pipeline come from different runs".into()
        ));
    }

    let train_data = labeled(cfg, &encoder, &d.train)?;
    let benign_train = train_data.features.select(Axis(0), &split.train_rows);
    if Fingerprint::of_matrix(&benign_train) != pipeline.fitted_on
        || split.source != pipeline.fitted_on
    {
        bail!(Error::Data(format!(
            "{} no longer matches the data the pipeline was fitted on; rerun `zeroday preprocess`",
            d.train.display()
        )));
    }
    let holdout = train_data.holdout_view(&split.validation_rows)?;
    let id = cfg.dataset_id();
    let mut targets = vec![("train", holdout, id.clone())];
    if let Some(test) = &d.test {
        targets.push(("test", labeled(cfg, &encoder, test)?, format!("{id}-test")));
    }

    let timestamp = std::env::var("SOURCE_DATE_EPOCH").ok();
    let seeds = sub_seeds(cfg.seed)
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ");
    let evaluator = Evaluator::new(cfg, out, &pipeline)?;
    for (stem, data, dataset_id) in targets {
        let mut report = evaluator.run(&pipeline, &data, &dataset_id)?;
        report.metadata.seed = Some(cfg.seed);
        report.metadata.timestamp = timestamp.clone();
        report.metadata.notes.push(format!("sub-seeds: {seeds}"));
        if d.preset.is_some() {
            report
                .metadata
                .notes
                .push("difficulty column ignored".into());
        }
        for fmt in ReportFormat::ALL {
            let name = format!(
                "report_{}_{stem}.{}",
                report.detector.short(),
                fmt.extension()
            );
            emit_report(&report, fmt, out.join(name))?;
        }
        print!("{}", report.render(ReportFormat::Markdown));
        println!();
    }
    Ok(())
}

enum Evaluator {
    Autoencoder(
        AutoencoderModel,
        ThresholdSweep,
        zeroday_core::autoencoder::LossKind,
    ),
    Ocsvm(Vec<OneClassSvmModel>),
}

impl Evaluator {
    fn new(cfg: &RunConfig, out: &Path, pipeline: &PreprocessPipeline) -> Result<Self> {
        let sweep = ThresholdSweep::from_unordered(cfg.sweep_values())?;
        if let Some(ae) = &cfg.autoencoder {
            let path = out.join(AUTOENCODER_FILE);
            if !path.is_file() {
                bail!(Error::Data(format!(
                    "no model at {}; run `zeroday train-ae` first",
                    path.display()
                )));
            }
            let model = AutoencoderModel::load(&path)?;
            return Ok(Evaluator::Autoencoder(model, sweep, ae.score_loss()));
        }
        let models = sweep
            .values()
            .iter()
            .map(|&nu| {
                let path = out.join(svm_model_file(nu));
                if !path.is_file() {
                    bail!(Error::Data(format!(
                        "no model at {}; run `zeroday train-svm` first",
                        path.display()
                    )));
                }
                let m = OneClassSvmModel::load(&path)?;
                if m.width() != pipeline.n_outputs() {
                    bail!(Error::Dimension {
                        expected: pipeline.n_outputs(),
                        actual: m.width()
                    });
                }
                Ok(m)
            })
            .collect::<Result<_>>()?;
        Ok(Evaluator::Ocsvm(models))
    }

    fn run(
        &self,
        pipeline: &PreprocessPipeline,
        data: &LabeledDataset,
        dataset_id: &str,
    ) -> Result<EvalReport> {
        Ok(match self {
            Evaluator::Autoencoder(model, sweep, loss) => {
                evaluate_autoencoder_with(model, pipeline, data, sweep, dataset_id, *loss)?
            }
            Evaluator::Ocsvm(models) => evaluate_svm_models(models, pipeline, data, dataset_id)?,
        })
    }
}

pub fn search(cfg: &RunConfig) -> Result<()> {
    cfg.validate(Needs::Search)?;
    let ae = cfg.autoencoder.as_ref().expect("validated");
    let s = cfg.search.as_ref().expect("validated");
    let out = cfg.out_dir();
    let pipeline = load_pipeline(out)?;
    let x_train = load_matrix(out, BENIGN_TRAIN_FILE, &pipeline)?;
    let x_val = load_matrix(out, BENIGN_VALIDATION_FILE, &pipeline)?;
    let space = SearchSpace {
        architectures: s
            .architectures
            .iter()
            .map(|h| Architecture::new(pipeline.n_outputs(), h).with_activation(ae.activation()))
            .collect(),
        learning_rates: s.learning_rates.clone(),
        epoch_counts: s.epoch_counts.clone(),
        l2_lambdas: s.l2_lambdas.clone(),
        batch_size: ae.batch_size,
        loss_kind: ae.loss(),
        budget: s.budget,
        seed: cfg.seed,
    };
    let result = random_search(&space, &x_train, &x_val)?;
    write_json(&out.join(BEST_CONFIG_FILE), &result.best)?;
    result.write_trials_csv(out.join(TRIALS_FILE))?;
    let best = &result.best;
    println!(
        "{} trials; best {} lr={} epochs={} l2={}",
        result.trials.len(),
        best.architecture,
        best.train.learning_rate,
        best.train.epochs,
        best.train.l2_lambda
    );
    Ok(())
}

fn read_report(path: &Path) -> Result<EvalReport> {
    let fmt = match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => ReportFormat::Csv,
        Some("json") => ReportFormat::JsonText,
        Some("md") => ReportFormat::Markdown,
        _ => bail!(Error::Data(format!(
            "{}: expected a .csv, .json or .md report",
            path.display()
        ))),
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EvalReport::parse(&text, fmt).with_context(|| format!("reading {}", path.display()))
}

pub fn compare_reports(out: &Path, a: &Path, b: &Path, t: f64, v: f64) -> Result<()> {
    let ra = read_report(a)?;
    let rb = read_report(b)?;
    let cmp: ComparisonReport = compare(&ra, &rb, t, v)?;
    create_out_dir(out)?;
    for fmt in ReportFormat::ALL {
        emit_report(
            &cmp,
            fmt,
            out.join(format!("{COMPARISON_STEM}.{}", fmt.extension())),
        )?;
    }
    let plot = out.join(PLOT_FILE);
    std::fs::write(&plot, cmp.plot_csv()).map_err(|e| Error::io(&plot, e))?;
    print!("{}", cmp.render(ReportFormat::Markdown));
    Ok(())
}

pub fn synth(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate(Needs::Synth)?;
    let s = cfg.synth.as_ref().expect("validated");
    let out = cfg.out_dir();
    create_out_dir(out)?;
    let data = generate_synthetic(&s.spec(seed::derive(cfg.seed, seed::SYNTH)))?;
    let path = out.join(&s.file);
    data.write_csv(&path, "label")?;
    let counts: Vec<String> = data
        .class_index()
        .iter()
        .map(|(c, rows)| format!("{c}={}", rows.len()))
        .collect();
    println!("wrote {} ({})", path.display(), counts.join(", "));
    Ok(path)
}
