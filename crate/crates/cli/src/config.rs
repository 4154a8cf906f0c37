//! Declarative run configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zeroday_core::autoencoder::{Activation, LossKind};
use zeroday_core::dataset::{
    nsl_kdd_class_map, nsl_kdd_load_options, LoadOptions, SyntheticSpec, NSL_KDD_BENIGN,
};
use zeroday_core::ocsvm::{Gamma, KernelSpec, SmoConfig};

/// Every problem found while validating a config.
#[derive(Debug)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} problem(s)):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub dataset_id: Option<String>,
    pub dataset: Option<DatasetSection>,
    #[serde(default)]
    pub preprocess: PreprocessSection,
    pub autoencoder: Option<AutoencoderSection>,
    pub ocsvm: Option<OcsvmSection>,
    pub sweep: Option<SweepSection>,
    pub search: Option<SearchSection>,
    pub synth: Option<SynthSection>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub train: PathBuf,
    pub test: Option<PathBuf>,
    /// `"nsl-kdd"` fills in the headerless NSL-KDD layout and category map.
    pub preset: Option<String>,
    pub label_column: Option<String>,
    pub benign_label: Option<String>,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub ignore: Vec<String>,
    pub column_names: Option<Vec<String>>,
    /// Raw label → reported class.
    #[serde(default)]
    pub class_map: BTreeMap<String, String>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

fn default_train_fraction() -> f64 {
    0.75
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSection {
    /// Defaults to on, except under the NSL-KDD preset.
    pub prune: Option<bool>,
    #[serde(default = "default_prune_threshold")]
    pub threshold: f64,
}

fn default_prune_threshold() -> f64 {
    0.9
}

impl Default for PreprocessSection {
    fn default() -> Self {
        PreprocessSection {
            prune: None,
            threshold: 0.9,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AutoencoderSection {
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: String,
    #[serde(default = "default_loss")]
    pub loss: String,
    #[serde(default = "default_l2")]
    pub l2: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Error used for scoring; defaults to the training loss.
    pub score_loss: Option<String>,
}

fn default_activation() -> String {
    "tanh".into()
}
fn default_loss() -> String {
    "mse".into()
}
fn default_l2() -> f64 {
    1e-4
}
fn default_epochs() -> usize {
    50
}
fn default_batch() -> usize {
    1024
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum GammaSetting {
    Value(f64),
    Rule(String),
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OcsvmSection {
    #[serde(default = "default_gamma")]
    pub gamma: GammaSetting,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_passes")]
    pub max_passes: usize,
}

fn default_gamma() -> GammaSetting {
    GammaSetting::Rule("scale".into())
}
fn default_tolerance() -> f64 {
    1e-4
}
fn default_max_passes() -> usize {
    1000
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    /// Hidden-layer widths of each candidate architecture.
    pub architectures: Vec<Vec<usize>>,
    pub learning_rates: Vec<f64>,
    pub epoch_counts: Vec<usize>,
    pub l2_lambdas: Vec<f64>,
    pub budget: usize,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub n_benign: usize,
    pub n_per_attack_class: usize,
    pub n_features: usize,
    pub rank: usize,
    pub attack_offsets: Vec<f64>,
    pub noise_sigma: f64,
    #[serde(default = "default_synth_file")]
    pub file: String,
}

fn default_synth_file() -> String {
    "synthetic.csv".into()
}

/// What a subcommand needs from the config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Needs {
    Preprocess,
    TrainAutoencoder,
    TrainSvm,
    Evaluate,
    Search,
    Synth,
}

pub const NSL_KDD_PRESET: &str = "nsl-kdd";

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigErrors> {
        toml::from_str(text).map_err(|e| ConfigErrors(vec![e.message().to_owned()]))
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigErrors(vec![format!("cannot read {}: {e}", path.display())]))?;
        Ok(Self::parse(&text)?)
    }

    /// Checks everything `needs` relies on, collecting all problems.
    pub fn validate(&self, needs: Needs) -> Result<(), ConfigErrors> {
        let mut errs = Vec::new();
        if self.out_dir.is_none() {
            errs.push("out_dir is not set (config key or --out)".into());
        }
        if needs == Needs::Synth {
            match &self.synth {
                None => errs.push("[synth] section is required".into()),
                Some(s) => {
                    if let Err(e) = s.spec(0).validate() {
                        errs.push(format!("[synth] {e}"));
                    }
                }
            }
            return finish(errs);
        }

        match (&self.autoencoder, &self.ocsvm) {
            (Some(_), Some(_)) => {
                errs.push("exactly one of [autoencoder] and [ocsvm] may be present".into())
            }
            (None, None) => {
                errs.push("one detector section, [autoencoder] or [ocsvm], is required".into())
            }
            _ => {}
        }
        match needs {
            Needs::TrainAutoencoder | Needs::Search
                if self.autoencoder.is_none() && self.ocsvm.is_some() =>
            {
                errs.push("this command needs an [autoencoder] section".into())
            }
            Needs::TrainSvm if self.ocsvm.is_none() && self.autoencoder.is_some() => {
                errs.push("this command needs an [ocsvm] section".into())
            }
            _ => {}
        }

        match &self.dataset {
            None => errs.push("[dataset] section is required".into()),
            Some(d) => d.check(needs, &mut errs),
        }
        let p = &self.preprocess;
        if p.prune != Some(false) && !(p.threshold > 0.0 && p.threshold <= 1.0) {
            errs.push(format!(
                "[preprocess] threshold must lie in (0, 1], got {}",
                p.threshold
            ));
        }
        if let Some(a) = &self.autoencoder {
            a.check(&mut errs);
        }
        if let Some(o) = &self.ocsvm {
            o.check(&mut errs);
        }

        let wants_sweep = matches!(needs, Needs::TrainSvm | Needs::Evaluate);
        match &self.sweep {
            None if wants_sweep => errs.push("[sweep] values are required".into()),
            None => {}
            Some(s) => {
                if s.values.is_empty() {
                    errs.push("[sweep] values must not be empty".into());
                }
                for v in &s.values {
                    if !(*v > 0.0 && v.is_finite()) {
                        errs.push(format!("[sweep] values must be positive, got {v}"));
                    }
                }
                if self.ocsvm.is_some() && s.values.iter().any(|v| *v > 1.0) {
                    errs.push("[sweep] nu values must lie in (0, 1]".into());
                }
                let mut sorted = s.values.clone();
                sorted.sort_by(f64::total_cmp);
                if sorted.windows(2).any(|w| w[0] == w[1]) {
                    errs.push("[sweep] values must be distinct".into());
                }
            }
        }

        if needs == Needs::Search {
            match &self.search {
                None => errs.push("[search] section is required".into()),
                Some(s) => s.check(&mut errs),
            }
        }
        finish(errs)
    }

    pub fn out_dir(&self) -> &Path {
        self.out_dir.as_deref().expect("validated")
    }

    pub fn dataset(&self) -> &DatasetSection {
        self.dataset.as_ref().expect("validated")
    }

    pub fn dataset_id(&self) -> String {
        if let Some(id) = &self.dataset_id {
            return id.clone();
        }
        self.dataset
            .as_ref()
            .and_then(|d| d.train.file_stem())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    }

    pub fn sweep_values(&self) -> Vec<f64> {
        self.sweep
            .as_ref()
            .map(|s| s.values.clone())
            .unwrap_or_default()
    }

    pub fn prune_threshold(&self) -> Option<f64> {
        let nsl_kdd = self
            .dataset
            .as_ref()
            .is_some_and(DatasetSection::is_nsl_kdd);
        self.preprocess
            .prune
            .unwrap_or(!nsl_kdd)
            .then_some(self.preprocess.threshold)
    }
}

fn finish(errs: Vec<String>) -> Result<(), ConfigErrors> {
    if errs.is_empty() {
        Ok(())
    } else {
        Err(ConfigErrors(errs))
    }
}

impl DatasetSection {
    fn check(&self, needs: Needs, errs: &mut Vec<String>) {
        if matches!(needs, Needs::Preprocess | Needs::Evaluate) {
            if !self.train.is_file() {
                errs.push(format!(
                    "[dataset] train file {} does not exist",
                    self.train.display()
                ));
            }
            if let Some(t) = &self.test {
                if !t.is_file() {
                    errs.push(format!(
                        "[dataset] test file {} does not exist",
                        t.display()
                    ));
                }
            }
        }
        if let Some(p) = &self.preset {
            if p != NSL_KDD_PRESET {
                errs.push(format!(
                    "[dataset] unknown preset {p:?} (known: {NSL_KDD_PRESET})"
                ));
            }
        } else if self.label_column.is_none() {
            errs.push("[dataset] label_column is required without a preset".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            errs.push(format!(
                "[dataset] train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            ));
        }
    }

    fn is_nsl_kdd(&self) -> bool {
        self.preset.as_deref() == Some(NSL_KDD_PRESET)
    }

    pub fn load_options(&self) -> LoadOptions {
        let mut opts = if self.is_nsl_kdd() {
            nsl_kdd_load_options()
        } else {
            LoadOptions::default()
        };
        if let Some(l) = &self.label_column {
            opts.label_column = Some(l.clone());
        }
        opts.categorical.extend(self.categorical.iter().cloned());
        opts.ignore.extend(self.ignore.iter().cloned());
        if let Some(names) = &self.column_names {
            opts.column_names = Some(names.clone());
        }
        opts
    }

    pub fn benign_label(&self) -> String {
        match &self.benign_label {
            Some(b) => b.clone(),
            None if self.is_nsl_kdd() => NSL_KDD_BENIGN.into(),
            None => "benign".into(),
        }
    }

    pub fn class_map(&self) -> BTreeMap<String, String> {
        let mut map = if self.is_nsl_kdd() {
            nsl_kdd_class_map()
        } else {
            BTreeMap::new()
        };
        map.extend(self.class_map.iter().map(|(k, v)| (k.clone(), v.clone())));
        map
    }
}

impl AutoencoderSection {
    fn check(&self, errs: &mut Vec<String>) {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            errs.push("[autoencoder] hidden must list at least one positive width".into());
        }
        if self.activation.parse::<Activation>().is_err() {
            errs.push(format!(
                "[autoencoder] unknown activation {:?} (tanh, relu, linear)",
                self.activation
            ));
        }
        for l in std::iter::once(&self.loss).chain(&self.score_loss) {
            if l.parse::<LossKind>().is_err() {
                errs.push(format!("[autoencoder] unknown loss {l:?} (mse, mae)"));
            }
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            errs.push(format!(
                "[autoencoder] l2 must be non-negative, got {}",
                self.l2
            ));
        }
        if self.batch_size == 0 {
            errs.push("[autoencoder] batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            errs.push(format!(
                "[autoencoder] learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
    }

    pub fn activation(&self) -> Activation {
        self.activation.parse().expect("validated")
    }

    pub fn loss(&self) -> LossKind {
        self.loss.parse().expect("validated")
    }

    pub fn score_loss(&self) -> LossKind {
        self.score_loss
            .as_deref()
            .map_or(self.loss(), |s| s.parse().expect("validated"))
    }
}

impl OcsvmSection {
    fn check(&self, errs: &mut Vec<String>) {
        match &self.gamma {
            GammaSetting::Value(g) if !(*g > 0.0 && g.is_finite()) => {
                errs.push(format!("[ocsvm] gamma must be positive, got {g}"))
            }
            GammaSetting::Rule(r) if r != "scale" => errs.push(format!(
                "[ocsvm] gamma must be a number or \"scale\", got {r:?}"
            )),
            _ => {}
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            errs.push(format!(
                "[ocsvm] tolerance must be positive, got {}",
                self.tolerance
            ));
        }
        if self.max_passes == 0 {
            errs.push("[ocsvm] max_passes must be positive".into());
        }
    }

    pub fn kernel(&self) -> KernelSpec {
        match self.gamma {
            GammaSetting::Value(g) => KernelSpec {
                gamma: Gamma::Value(g),
            },
            GammaSetting::Rule(_) => KernelSpec {
                gamma: Gamma::Scale,
            },
        }
    }

    pub fn smo(&self, seed: u64) -> SmoConfig {
        SmoConfig {
            tolerance: self.tolerance,
            max_passes: self.max_passes,
            seed,
            ..SmoConfig::default()
        }
    }
}

impl SearchSection {
    fn check(&self, errs: &mut Vec<String>) {
        if self.budget == 0 {
            errs.push("[search] budget must be at least 1".into());
        }
        for (name, empty) in [
            ("architectures", self.architectures.is_empty()),
            ("learning_rates", self.learning_rates.is_empty()),
            ("epoch_counts", self.epoch_counts.is_empty()),
            ("l2_lambdas", self.l2_lambdas.is_empty()),
        ] {
            if empty {
                errs.push(format!(
                    "[search] {name} must not be empty (empty search space)"
                ));
            }
        }
        if self
            .architectures
            .iter()
            .any(|a| a.is_empty() || a.contains(&0))
        {
            errs.push("[search] every architecture needs positive hidden widths".into());
        }
        if self
            .learning_rates
            .iter()
            .any(|v| !v.is_finite() || *v <= 0.0)
        {
            errs.push("[search] learning rates must be positive".into());
        }
        if self.l2_lambdas.iter().any(|v| !v.is_finite() || *v < 0.0) {
            errs.push("[search] l2 values must be non-negative".into());
        }
    }
}

impl SynthSection {
    pub fn spec(&self, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_benign: self.n_benign,
            n_per_attack_class: self.n_per_attack_class,
            n_features: self.n_features,
            benign_covariance_rank: self.rank,
            attack_offsets: self.attack_offsets.clone(),
            noise_sigma: self.noise_sigma,
            seed,
        }
    }
}
