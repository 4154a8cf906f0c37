use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const MODEL_FORMAT: &str = "zeroday-autoencoder/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Activation::Linear),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::InvalidParameter(format!(
                "unknown activation {other:?}"
            ))),
        }
    }
}

/// Per-instance reconstruction error: mean over features of the squared or
/// absolute residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Mae,
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "mae" => Ok(LossKind::Mae),
            other => Err(Error::InvalidParameter(format!("unknown loss {other:?}"))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Mse => "mse",
            LossKind::Mae => "mae",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Input, hidden..., output.
    pub layer_widths: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl Architecture {
    /// Symmetric `input → hidden... → input` stack with tanh hidden layers.
    pub fn new(input: usize, hidden: &[usize]) -> Self {
        let mut layer_widths = vec![input];
        layer_widths.extend_from_slice(hidden);
        layer_widths.push(input);
        Architecture {
            layer_widths,
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Linear,
        }
    }

    pub fn with_activation(mut self, act: Activation) -> Self {
        self.hidden_activation = act;
        self
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn hidden(&self) -> &[usize] {
        &self.layer_widths[1..self.layer_widths.len() - 1]
    }

    pub fn n_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.layer_widths;
        if w.len() < 3 {
            return Err(Error::InvalidParameter(
                "need at least one hidden layer".into(),
            ));
        }
        if w.contains(&0) {
            return Err(Error::InvalidParameter(
                "layer widths must be positive".into(),
            ));
        }
        if w[0] != w[w.len() - 1] {
            return Err(Error::InvalidParameter(format!(
                "input width {} differs from output width {}",
                w[0],
                w[w.len() - 1]
            )));
        }
        let bottleneck = *self.hidden().iter().min().expect("non-empty");
        if bottleneck >= w[0] {
            return Err(Error::InvalidParameter(format!(
                "bottleneck width {bottleneck} must be smaller than input width {}",
                w[0]
            )));
        }
        Ok(())
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.n_layers() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s: Vec<String> = self.layer_widths.iter().map(usize::to_string).collect();
        write!(f, "{}", s.join("-"))
    }
}

/// Dense feed-forward autoencoder. `weights[l]` has shape `(in_l, out_l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub architecture: Architecture,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub loss_kind: LossKind,
    pub l2_lambda: f64,
    /// Fingerprint id of the preprocessing pipeline the model was trained behind.
    pub pipeline_id: Option<String>,
}

/// Layer-wise intermediate values of a batch forward pass.
pub(crate) struct ForwardTrace {
    /// `pre[l]` is the pre-activation of layer `l`.
    pub pre: Vec<Array2<f64>>,
    /// `post[0]` is the input; `post[l + 1]` is the output of layer `l`.
    pub post: Vec<Array2<f64>>,
}

/// Builds a model with weights uniform in ±sqrt(6 / (fan_in + fan_out)) and
/// zero biases.
pub fn build_autoencoder(
    arch: &Architecture,
    l2_lambda: f64,
    seed: u64,
) -> Result<AutoencoderModel> {
    arch.validate()?;
    if !(l2_lambda >= 0.0 && l2_lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "l2 must be non-negative, got {l2_lambda}"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for pair in arch.layer_widths.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        weights.push(Array2::from_shape_fn((fan_in, fan_out), |_| {
            rng.random_range(-limit..limit)
        }));
        biases.push(Array1::zeros(fan_out));
    }
    Ok(AutoencoderModel {
        architecture: arch.clone(),
        weights,
        biases,
        loss_kind: LossKind::Mse,
        l2_lambda,
        pipeline_id: None,
    })
}

impl AutoencoderModel {
    pub fn with_loss(mut self, loss: LossKind) -> Self {
        self.loss_kind = loss;
        self
    }

    pub fn input_width(&self) -> usize {
        self.architecture.input_width()
    }

    pub fn n_parameters(&self) -> usize {
        self.weights.iter().map(Array2::len).sum::<usize>()
            + self.biases.iter().map(Array1::len).sum::<usize>()
    }

    /// Reconstruction of a single row. Accumulation order is fixed, so the
    /// result for a row never depends on which other rows are scored with it.
    pub fn forward(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.input_width() {
            return Err(Error::Dimension {
                expected: self.input_width(),
                actual: x.len(),
            });
        }
        Ok(self.forward_row(x))
    }

    fn forward_row(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut a = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let act = self.architecture.activation(l);
            let mut z = b.clone();
            for (ai, wrow) in a.iter().zip(w.outer_iter()) {
                z.scaled_add(*ai, &wrow);
            }
            z.mapv_inplace(|v| act.apply(v));
            a = z;
        }
        a
    }

    pub(crate) fn forward_batch(&self, x: ArrayView2<f64>) -> ForwardTrace {
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut post = Vec::with_capacity(self.weights.len() + 1);
        post.push(x.to_owned());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let act = self.architecture.activation(l);
            let z = post[l].dot(w) + b;
            post.push(z.mapv(|v| act.apply(v)));
            pre.push(z);
        }
        ForwardTrace { pre, post }
    }

    pub fn reconstruct(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_width(x)?;
        Ok(self
            .forward_batch(x.view())
            .post
            .pop()
            .expect("at least one layer"))
    }

    fn check_width(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.input_width() {
            return Err(Error::Dimension {
                expected: self.input_width(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_penalty(&self) -> f64 {
        self.weights
            .iter()
            .map(|w| w.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    /// Batch-mean reconstruction loss plus the L2 weight penalty.
    pub fn objective(&self, batch: &Array2<f64>) -> Result<f64> {
        Ok(mean_reconstruction_loss(self, batch, self.loss_kind)?
            + self.l2_lambda * self.weight_penalty())
    }

    /// All parameters in layer order: weights (row-major) then biases.
    pub fn flat_parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_parameters());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_flat_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_parameters() {
            return Err(Error::Dimension {
                expected: self.n_parameters(),
                actual: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().for_each(|v| *v = it.next().unwrap());
            b.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.flat_parameters().iter().all(|v| v.is_finite())
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            format: MODEL_FORMAT.into(),
            architecture: self.architecture.clone(),
            loss_kind: self.loss_kind,
            reconstruction_error: "feature-mean per instance".into(),
            l2_lambda: self.l2_lambda,
            pipeline_id: self.pipeline_id.clone(),
            layers: self
                .weights
                .iter()
                .zip(&self.biases)
                .map(|(w, b)| LayerDocument {
                    shape: [w.nrows(), w.ncols()],
                    weights: w.iter().copied().collect(),
                    biases: b.to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self> {
        if doc.format != MODEL_FORMAT {
            return Err(Error::Format(format!(
                "unsupported model format {:?}",
                doc.format
            )));
        }
        doc.architecture.validate()?;
        if doc.layers.len() != doc.architecture.n_layers() {
            return Err(Error::Format(
                "layer count does not match architecture".into(),
            ));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, layer) in doc.layers.into_iter().enumerate() {
            let expected = [
                doc.architecture.layer_widths[l],
                doc.architecture.layer_widths[l + 1],
            ];
            if layer.shape != expected || layer.biases.len() != expected[1] {
                return Err(Error::Format(format!(
                    "layer {l} shape {:?} != {:?}",
                    layer.shape, expected
                )));
            }
            weights.push(
                Array2::from_shape_vec((expected[0], expected[1]), layer.weights)
                    .map_err(|e| Error::Format(e.to_string()))?,
            );
            biases.push(Array1::from(layer.biases));
        }
        let model = AutoencoderModel {
            architecture: doc.architecture,
            weights,
            biases,
            loss_kind: doc.loss_kind,
            l2_lambda: doc.l2_lambda,
            pipeline_id: doc.pipeline_id,
        };
        if !model.is_finite() {
            return Err(Error::Format("model holds non-finite parameters".into()));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(s)?)
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

/// Serialized form of [`AutoencoderModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub architecture: Architecture,
    pub loss_kind: LossKind,
    pub reconstruction_error: String,
    pub l2_lambda: f64,
    pub pipeline_id: Option<String>,
    pub layers: Vec<LayerDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDocument {
    pub shape: [usize; 2],
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

pub fn reconstruction_error(
    x: ArrayView1<f64>,
    x_hat: ArrayView1<f64>,
    kind: LossKind,
) -> Result<f64> {
    if x.len() != x_hat.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            actual: x_hat.len(),
        });
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = x
        .iter()
        .zip(x_hat.iter())
        .map(|(a, b)| match kind {
            LossKind::Mse => (b - a) * (b - a),
            LossKind::Mae => (b - a).abs(),
        })
        .sum();
    Ok(sum / x.len() as f64)
}

pub(crate) fn mean_reconstruction_loss(
    model: &AutoencoderModel,
    x: &Array2<f64>,
    kind: LossKind,
) -> Result<f64> {
    if x.nrows() == 0 {
        return Err(Error::Data("empty batch".into()));
    }
    let scores = score_with(model, x, kind)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Per-row reconstruction error under the model's training loss.
pub fn score(model: &AutoencoderModel, x: &Array2<f64>) -> Result<Vec<f64>> {
    score_with(model, x, model.loss_kind)
}

/// Per-row reconstruction error under an explicit loss kind.
pub fn score_with(model: &AutoencoderModel, x: &Array2<f64>, kind: LossKind) -> Result<Vec<f64>> {
    model.check_width(x)?;
    Ok(x.axis_iter(Axis(0))
        .into_par_iter()
        .map(|row| {
            let rec = model.forward_row(row);
            reconstruction_error(row, rec.view(), kind).expect("widths checked")
        })
        .collect())
}

/// Fraction of scores strictly above `threshold`.
pub fn detect(scores: &[f64], threshold: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Data("no scores to threshold".into()));
    }
    Ok(scores.iter().filter(|s| **s > threshold).count() as f64 / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array};

    use super::*;

    fn linear_model(d: usize) -> AutoencoderModel {
        let arch = Architecture {
            layer_widths: vec![d, d - 1, d],
            hidden_activation: Activation::Linear,
            output_activation: Activation::Linear,
        };
        build_autoencoder(&arch, 0.0, 0).unwrap()
    }

    /// Linear model that reproduces inputs whose last coordinate is zero.
    fn projector(d: usize) -> AutoencoderModel {
        let mut m = linear_model(d);
        m.weights[0] = Array2::from_shape_fn((d, d - 1), |(i, j)| if i == j { 1.0 } else { 0.0 });
        m.weights[1] = Array2::from_shape_fn((d - 1, d), |(i, j)| if i == j { 1.0 } else { 0.0 });
        m
    }

    #[test]
    fn shapes_follow_widths() {
        let m = build_autoencoder(&Architecture::new(18, &[15, 9, 15]), 1e-4, 1).unwrap();
        let shapes: Vec<_> = m.weights.iter().map(|w| w.dim()).collect();
        assert_eq!(shapes, vec![(18, 15), (15, 9), (9, 15), (15, 18)]);
        let m = build_autoencoder(&Architecture::new(122, &[100, 60, 100]), 1e-3, 1).unwrap();
        let shapes: Vec<_> = m.weights.iter().map(|w| w.dim()).collect();
        assert_eq!(shapes, vec![(122, 100), (100, 60), (60, 100), (100, 122)]);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let arch = Architecture::new(10, &[6, 3, 6]);
        let a = build_autoencoder(&arch, 0.0, 5).unwrap();
        assert_eq!(a, build_autoencoder(&arch, 0.0, 5).unwrap());
        assert_ne!(a, build_autoencoder(&arch, 0.0, 6).unwrap());
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(a.weights[0].iter().all(|w| w.abs() <= limit));
        assert!(a.biases.iter().all(|b| b.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn invalid_architectures() {
        assert!(build_autoencoder(&Architecture::new(4, &[4]), 0.0, 0).is_err());
        assert!(build_autoencoder(&Architecture::new(4, &[]), 0.0, 0).is_err());
        let mut a = Architecture::new(4, &[2]);
        a.layer_widths[2] = 5;
        assert!(a.validate().is_err());
        assert!(build_autoencoder(&Architecture::new(4, &[2]), -1.0, 0).is_err());
    }

    #[test]
    fn identity_weights_reproduce_input() {
        let m = projector(4);
        let x = array![1.0, -2.0, 0.5, 0.0];
        assert_eq!(m.forward(x.view()).unwrap(), x);
        let s = score(&m, &array![[1.0, -2.0, 0.5, 0.0], [3.0, 1.0, 2.0, 0.0]]).unwrap();
        assert_eq!(s, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut m = linear_model(3);
        m.weights.iter_mut().for_each(|w| w.fill(0.0));
        assert_eq!(
            m.forward(array![1.0, 2.0, 3.0].view()).unwrap(),
            array![0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn random_model_output_finite() {
        let m = build_autoencoder(
            &Architecture::new(8, &[5, 2, 5]).with_activation(Activation::Relu),
            0.0,
            3,
        )
        .unwrap();
        let y = m
            .forward(array![1e3, -1e3, 5.0, 0.0, 1.0, 2.0, 3.0, 4.0].view())
            .unwrap();
        assert!(y.iter().all(|v| v.is_finite()));
        assert!(m.forward(array![1.0].view()).is_err());
    }

    #[test]
    fn reconstruction_error_values() {
        let z = array![0.0, 0.0];
        let o = array![1.0, 1.0];
        assert_eq!(
            reconstruction_error(z.view(), z.view(), LossKind::Mse).unwrap(),
            0.0
        );
        assert_eq!(
            reconstruction_error(z.view(), o.view(), LossKind::Mse).unwrap(),
            1.0
        );
        assert_eq!(
            reconstruction_error(z.view(), o.view(), LossKind::Mae).unwrap(),
            1.0
        );
        let x = array![1.0, 0.0, 2.0];
        let y = array![0.0, 0.0, 0.0];
        assert!(
            (reconstruction_error(x.view(), y.view(), LossKind::Mse).unwrap() - 5.0 / 3.0).abs()
                < 1e-15
        );
        assert_eq!(
            reconstruction_error(x.view(), y.view(), LossKind::Mae).unwrap(),
            1.0
        );
        assert!(reconstruction_error(x.view(), z.view(), LossKind::Mae).is_err());
    }

    #[test]
    fn detect_counts_strictly_above() {
        assert!((detect(&[0.04, 0.06, 0.2], 0.05).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(detect(&[0.04, 0.06, 0.2], 0.01).unwrap(), 1.0);
        assert_eq!(detect(&[0.05], 0.05).unwrap(), 0.0);
        assert!(detect(&[], 0.1).is_err());
    }

    #[test]
    fn scoring_is_row_independent() {
        let m = build_autoencoder(&Architecture::new(6, &[4, 2, 4]), 0.0, 9).unwrap();
        let x = Array::from_shape_fn((37, 6), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0);
        let full = score(&m, &x).unwrap();
        let mut parts = Vec::new();
        for chunk in x.axis_chunks_iter(Axis(0), 5) {
            parts.extend(score(&m, &chunk.to_owned()).unwrap());
        }
        assert_eq!(full, parts);
        let same = Array::from_shape_fn((4, 6), |(_, j)| j as f64);
        let s = score(&m, &same).unwrap();
        assert!(s.iter().all(|v| *v == s[0]));
    }

    #[test]
    fn model_json_round_trip() {
        let m = build_autoencoder(&Architecture::new(5, &[3, 2, 3]), 1e-3, 4)
            .unwrap()
            .with_loss(LossKind::Mae);
        let back = AutoencoderModel::from_json(&m.to_json()).unwrap();
        assert_eq!(m, back);
        assert_eq!(m.to_json(), back.to_json());
    }
}
