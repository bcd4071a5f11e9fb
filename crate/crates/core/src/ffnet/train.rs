use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grad::layer_step;
use super::{layer_forward, layer_norm, FfModel, LossKind};
use crate::datasets::embed::{draw_wrong_label, write_embedded};
use crate::datasets::LabeledSample;
use crate::error::{Error, Result};
use crate::layers::ensure_finite_params;
use crate::numerics::{Matrix, Scalar};
use crate::sgd::{check_schedule, epoch_order, Trained};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FfHyper {
    pub lr: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub loss_kind: LossKind,
    pub symba_alpha: f64,
}

impl Default for FfHyper {
    fn default() -> Self {
        FfHyper {
            lr: 0.003,
            batch_size: 10,
            local_epochs: 3,
            loss_kind: LossKind::Ff,
            symba_alpha: 1.0,
        }
    }
}

impl FfHyper {
    pub fn validate(&self) -> Result<()> {
        check_schedule(self.lr, self.batch_size, self.local_epochs)?;
        if !(self.symba_alpha > 0.0 && self.symba_alpha.is_finite()) {
            return Err(Error::Argument(format!(
                "symba_alpha must be positive, got {}",
                self.symba_alpha
            )));
        }
        Ok(())
    }
}

/// Positive and negative input batches for the first layer. Negatives get
/// freshly drawn wrong labels on every call.
pub(crate) fn build_batches<T: Scalar, R: Rng + ?Sized>(
    samples: &[&LabeledSample<T>],
    num_labels: usize,
    rng: &mut R,
) -> (Matrix<T>, Matrix<T>) {
    let d = samples[0].pixels.len();
    let mut pos = Matrix::zeros(samples.len(), d);
    let mut neg = Matrix::zeros(samples.len(), d);
    for (r, s) in samples.iter().enumerate() {
        write_embedded(pos.row_mut(r), &s.pixels, s.label, num_labels);
        let wrong = draw_wrong_label(s.label, num_labels, rng);
        write_embedded(neg.row_mut(r), &s.pixels, wrong, num_labels);
    }
    (pos, neg)
}

/// Greedy layer-wise local training.
///
/// Each mini-batch is swept through the layers once. Layer `i` takes one
/// SGD step on its own objective, and its updated output is normalised
/// and forwarded as the input of layer `i + 1`. No gradient crosses layers.
/// The input model is left untouched.
pub fn local_train_ff<T: Scalar, R: Rng + ?Sized>(
    model: &FfModel<T>,
    data: &[&LabeledSample<T>],
    hyper: &FfHyper,
    rng: &mut R,
) -> Result<Trained<FfModel<T>>> {
    hyper.validate()?;
    if data.is_empty() {
        return Err(Error::Argument("client has no training data".into()));
    }
    let d = model.input_dim();
    if let Some(s) = data.iter().find(|s| s.pixels.len() != d) {
        return Err(Error::Shape(format!(
            "sample has {} pixels, model expects {d}",
            s.pixels.len()
        )));
    }
    let mut model = model.clone();
    let lr = T::lit(hyper.lr);
    let objective = model.objective(hyper.loss_kind, T::lit(hyper.symba_alpha));
    let depth = model.layers.len();
    let mut loss_sum = 0.0;
    let mut steps = 0;
    let mut batch: Vec<&LabeledSample<T>> = Vec::with_capacity(hyper.batch_size);

    for _ in 0..hyper.local_epochs {
        let order = epoch_order(data.len(), rng);
        for chunk in order.chunks(hyper.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i]));
            let (mut x_pos, mut x_neg) = build_batches(&batch, model.num_labels, rng);
            let mut batch_loss = 0.0;
            for i in 0..depth {
                let loss = layer_step(&mut model.layers[i], &x_pos, &x_neg, &objective, lr)?;
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!("layer {i} loss is {loss}")));
                }
                batch_loss += loss.as_f64();
                if i + 1 < depth {
                    x_pos = layer_norm(&layer_forward(&model.layers[i], &x_pos)?, model.norm_eps);
                    x_neg = layer_norm(&layer_forward(&model.layers[i], &x_neg)?, model.norm_eps);
                }
            }
            loss_sum += batch_loss / depth as f64;
            steps += 1;
        }
    }
    ensure_finite_params(&model, "forward-forward model")?;
    Ok(Trained {
        model,
        mean_loss: loss_sum / steps as f64,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ffnet::{goodness, layer_grad, FfLayer};
    use crate::layers::Dense;
    use crate::numerics::RngStream;

    fn toy_data(n: usize, rng: &mut RngStream) -> Vec<LabeledSample<f64>> {
        // d = 4, L = 2: pixels 0..2 hold the label code, pixels 2..4 carry
        // a class-dependent bump.
        (0..n)
            .map(|i| {
                let label = i % 2;
                let mut pixels = vec![0.0; 4];
                pixels[2 + label] = 0.8 + 0.2 * rng.random::<f64>();
                pixels[3 - label] = 0.1 * rng.random::<f64>();
                LabeledSample { pixels, label }
            })
            .collect()
    }

    fn toy_model(seed: u64) -> FfModel<f64> {
        let mut rng = RngStream::derive(seed, &[]);
        FfModel::init(4, &[8], 2.0, 2, &mut rng).unwrap()
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut rng = RngStream::derive(0, &[]);
        let data = toy_data(20, &mut rng);
        let refs: Vec<_> = data.iter().collect();
        let model = toy_model(1);
        let hyper = FfHyper {
            lr: 0.0,
            batch_size: 4,
            local_epochs: 2,
            ..FfHyper::default()
        };
        let out = local_train_ff(&model, &refs, &hyper, &mut rng).unwrap();
        assert_eq!(out.model, model);
        assert_eq!(out.steps, 10);
    }

    #[test]
    fn single_batch_single_layer_is_one_sgd_step() {
        let mut rng = RngStream::derive(2, &[]);
        let data = toy_data(6, &mut rng);
        let refs: Vec<_> = data.iter().collect();
        let model = toy_model(3);
        let hyper = FfHyper {
            lr: 0.1,
            batch_size: 6,
            local_epochs: 1,
            ..FfHyper::default()
        };
        let out = local_train_ff(&model, &refs, &hyper, &mut RngStream::derive(9, &[])).unwrap();

        // Replay the stream: one shuffle, then the negative labels.
        let mut replay = RngStream::derive(9, &[]);
        let order = epoch_order(refs.len(), &mut replay);
        let batch: Vec<_> = order.iter().map(|&i| refs[i]).collect();
        let (pos, neg) = build_batches(&batch, 2, &mut replay);
        let lg = layer_grad(
            &model.layers[0],
            &pos,
            &neg,
            &model.objective(LossKind::Ff, 1.0),
        )
        .unwrap();
        let mut expected: FfLayer<f64> = model.layers[0].clone();
        expected
            .weights
            .add_scaled(-0.1, &lg.grad.d_weights)
            .unwrap();
        for (b, g) in expected.bias.iter_mut().zip(&lg.grad.d_bias) {
            *b -= 0.1 * g;
        }
        let got = &out.model.layers[0];
        assert!(got.weights.max_abs_diff(&expected.weights) < 1e-12);
        for (p, q) in got.bias.iter().zip(&expected.bias) {
            assert!((p - q).abs() < 1e-12);
        }
        assert!((out.mean_loss - lg.loss).abs() < 1e-15);
    }

    #[test]
    fn separable_toy_orders_goodness_around_theta() {
        let mut rng = RngStream::derive(5, &[]);
        let data = toy_data(40, &mut rng);
        let refs: Vec<_> = data.iter().collect();
        let model = toy_model(6);
        let hyper = FfHyper {
            lr: 0.05,
            batch_size: 4,
            local_epochs: 20,
            ..FfHyper::default()
        };
        // 20 epochs x 10 batches = 200 steps.
        let out = local_train_ff(&model, &refs, &hyper, &mut rng).unwrap();
        assert_eq!(out.steps, 200);
        let (pos, neg) = build_batches(&refs, 2, &mut rng);
        let layer = &out.model.layers[0];
        let gp = goodness(&layer_forward(layer, &pos).unwrap());
        let gn = goodness(&layer_forward(layer, &neg).unwrap());
        let mp = gp.iter().sum::<f64>() / gp.len() as f64;
        let mn = gn.iter().sum::<f64>() / gn.len() as f64;
        assert!(mp > 2.0 && 2.0 > mn, "pos {mp}, neg {mn}");
    }

    #[test]
    fn training_is_bitwise_reproducible_and_pure() {
        let mut rng = RngStream::derive(7, &[]);
        let data = toy_data(30, &mut rng);
        let refs: Vec<_> = data.iter().collect();
        let model = FfModel::init(4, &[6, 5], 2.0, 2, &mut rng).unwrap();
        let before = model.clone();
        let hyper = FfHyper {
            lr: 0.03,
            batch_size: 7,
            local_epochs: 2,
            loss_kind: LossKind::Symba,
            symba_alpha: 1.0,
        };
        let a = local_train_ff(&model, &refs, &hyper, &mut RngStream::derive(1, &[2])).unwrap();
        let b = local_train_ff(&model, &refs, &hyper, &mut RngStream::derive(1, &[2])).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.mean_loss.to_bits(), b.mean_loss.to_bits());
        assert_eq!(model, before);
        assert_ne!(a.model, model);
    }

    #[test]
    fn rejects_empty_data_and_bad_hyper() {
        let model = toy_model(0);
        let mut rng = RngStream::derive(0, &[]);
        assert!(matches!(
            local_train_ff(&model, &[], &FfHyper::default(), &mut rng),
            Err(Error::Argument(_))
        ));
        let data = toy_data(2, &mut rng);
        let refs: Vec<_> = data.iter().collect();
        let bad = FfHyper {
            batch_size: 0,
            ..FfHyper::default()
        };
        assert!(local_train_ff(&model, &refs, &bad, &mut rng).is_err());
        let wrong = LabeledSample {
            pixels: vec![0.0; 5],
            label: 0,
        };
        assert!(matches!(
            local_train_ff(&model, &[&wrong], &FfHyper::default(), &mut rng),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn later_layers_do_not_affect_earlier_gradients() {
        let mut rng = RngStream::derive(8, &[]);
        let data = toy_data(8, &mut rng);
        let refs: Vec<_> = data.iter().collect();
        let mut model = FfModel::init(4, &[6, 5], 2.0, 2, &mut rng).unwrap();
        let (pos, neg) = build_batches(&refs, 2, &mut rng);
        let obj = model.objective(LossKind::Ff, 1.0);
        let before = layer_grad(&model.layers[0], &pos, &neg, &obj).unwrap();
        model.layers[1] = Dense::init_uniform(6, 5, &mut rng);
        let after = layer_grad(&model.layers[0], &pos, &neg, &obj).unwrap();
        assert_eq!(before.grad, after.grad);
    }
}
