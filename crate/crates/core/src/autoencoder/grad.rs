//! Backpropagation for the autoencoder objective
//! `mean_rows(mean_features(loss(x̂ - x))) + λ Σ w²`.

use ndarray::{Array1, Array2, Axis, Zip};

use super::model::{AutoencoderModel, LossKind};
use crate::error::{Error, Result};

/// Gradient of the objective with respect to every weight and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

/// Analytic gradients on `batch`, plus the data (reconstruction) loss of the
/// batch, which the trainer reports.
pub fn gradients_with_loss(
    model: &AutoencoderModel,
    batch: &Array2<f64>,
) -> Result<(Gradients, f64)> {
    let (b, d) = batch.dim();
    if b == 0 {
        return Err(Error::Data("empty batch".into()));
    }
    if d != model.input_width() {
        return Err(Error::Dimension {
            expected: model.input_width(),
            actual: d,
        });
    }
    let trace = model.forward_batch(batch.view());
    let output = trace.post.last().expect("at least one layer");
    let scale = 1.0 / (b * d) as f64;

    let residual = output - batch;
    let (loss, mut delta) = match model.loss_kind {
        LossKind::Mse => (
            residual.iter().map(|r| r * r).sum::<f64>() * scale,
            residual.mapv(|r| 2.0 * r * scale),
        ),
        LossKind::Mae => (
            residual.iter().map(|r| r.abs()).sum::<f64>() * scale,
            residual.mapv(|r| {
                if r > 0.0 {
                    scale
                } else if r < 0.0 {
                    -scale
                } else {
                    0.0
                }
            }),
        ),
    };

    let n_layers = model.weights.len();
    let mut gw = vec![Array2::zeros((0, 0)); n_layers];
    let mut gb = vec![Array1::zeros(0); n_layers];
    for l in (0..n_layers).rev() {
        let act = if l + 1 == n_layers {
            model.architecture.output_activation
        } else {
            model.architecture.hidden_activation
        };
        // delta := dObjective/dz_l
        Zip::from(&mut delta)
            .and(&trace.pre[l])
            .and(&trace.post[l + 1])
            .for_each(|g, z, a| *g *= act.derivative(*z, *a));
        let mut w_grad = trace.post[l].t().dot(&delta);
        if model.l2_lambda > 0.0 {
            w_grad.scaled_add(2.0 * model.l2_lambda, &model.weights[l]);
        }
        gw[l] = w_grad;
        gb[l] = delta.sum_axis(Axis(0));
        if l > 0 {
            delta = delta.dot(&model.weights[l].t());
        }
    }
    Ok((
        Gradients {
            weights: gw,
            biases: gb,
        },
        loss,
    ))
}

pub fn gradients(model: &AutoencoderModel, batch: &Array2<f64>) -> Result<Gradients> {
    gradients_with_loss(model, batch).map(|(g, _)| g)
}

#[cfg(test)]
mod tests {
    use ndarray::Array;
    use rand::Rng;

    use super::super::model::{build_autoencoder, Activation, Architecture};
    use super::*;

    /// Central finite differences of `model.objective` over every parameter.
    fn numeric_gradient(model: &AutoencoderModel, batch: &Array2<f64>, h: f64) -> Vec<f64> {
        let base = model.flat_parameters();
        let mut probe = model.clone();
        (0..base.len())
            .map(|k| {
                let mut p = base.clone();
                p[k] = base[k] + h;
                probe.set_flat_parameters(&p).unwrap();
                let up = probe.objective(batch).unwrap();
                p[k] = base[k] - h;
                probe.set_flat_parameters(&p).unwrap();
                let down = probe.objective(batch).unwrap();
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
            .fold(0.0, f64::max)
    }

    #[test]
    fn matches_finite_differences_on_6_4_6() {
        let mut rng = crate::seed::rng(21);
        let batch = Array::from_shape_fn((7, 6), |_| rng.random_range(-1.0..1.0));
        for loss in [LossKind::Mse, LossKind::Mae] {
            for l2 in [0.0, 1e-3] {
                let model = build_autoencoder(&Architecture::new(6, &[4]), l2, 3)
                    .unwrap()
                    .with_loss(loss);
                let analytic = gradients(&model, &batch).unwrap().flat();
                let numeric = numeric_gradient(&model, &batch, 1e-5);
                let err = max_rel_err(&analytic, &numeric);
                assert!(err < 1e-5, "{loss} l2={l2}: {err}");
            }
        }
    }

    #[test]
    fn stationary_at_perfect_linear_reconstruction() {
        let arch = Architecture {
            layer_widths: vec![3, 2, 3],
            hidden_activation: Activation::Linear,
            output_activation: Activation::Linear,
        };
        let mut m = build_autoencoder(&arch, 0.0, 0).unwrap();
        m.weights[0] = Array2::from_shape_fn((3, 2), |(i, j)| if i == j { 1.0 } else { 0.0 });
        m.weights[1] = Array2::from_shape_fn((2, 3), |(i, j)| if i == j { 1.0 } else { 0.0 });
        let batch = ndarray::array![[1.0, 2.0, 0.0], [-1.0, 0.5, 0.0]];
        let g = gradients(&m, &batch).unwrap();
        assert!(g.flat().iter().all(|v| *v == 0.0));

        m.l2_lambda = 0.01;
        let g = gradients(&m, &batch).unwrap();
        for (gw, w) in g.weights.iter().zip(&m.weights) {
            assert_eq!(gw, &(w * 0.02));
        }
        assert!(g.biases.iter().all(|b| b.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn empty_batch_rejected() {
        let m = build_autoencoder(&Architecture::new(3, &[2]), 0.0, 0).unwrap();
        assert!(gradients(&m, &Array2::zeros((0, 3))).is_err());
        assert!(gradients(&m, &Array2::zeros((2, 4))).is_err());
    }
}
