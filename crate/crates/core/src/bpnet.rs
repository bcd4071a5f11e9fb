//! Backpropagation baseline: a rectified MLP with a linear classifier head,
//! trained on mean softmax cross-entropy with hand-written gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::LabeledSample;
use crate::error::{Error, Result};
use crate::layers::{
    dense_blocks, dense_blocks_mut, ensure_finite_params, relu_in_place, Dense, DenseGrad,
    Parameters,
};
use crate::numerics::{Matrix, Scalar};
use crate::sgd::{check_schedule, epoch_order, Trained};

#[derive(Clone, Debug, PartialEq)]
pub struct BpModel<T> {
    pub hidden: Vec<Dense<T>>,
    /// Maps the last hidden layer to one logit per class.
    pub head: Dense<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BpHyper {
    pub lr: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
}

impl Default for BpHyper {
    fn default() -> Self {
        BpHyper {
            lr: 0.003,
            batch_size: 10,
            local_epochs: 3,
        }
    }
}

/// Gradients for every layer, hidden layers first and the head last.
#[derive(Clone, Debug)]
pub struct BpGradients<T> {
    pub layers: Vec<DenseGrad<T>>,
    pub loss: T,
}

impl<T: Scalar> BpModel<T> {
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        widths: &[usize],
        num_labels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.is_empty() || widths.contains(&0) || num_labels == 0 {
            return Err(Error::Argument(format!("invalid hidden widths {widths:?}")));
        }
        let mut hidden = Vec::with_capacity(widths.len());
        let mut in_dim = input_dim;
        for &w in widths {
            hidden.push(Dense::init_uniform(in_dim, w, rng));
            in_dim = w;
        }
        let head = Dense::init_uniform(in_dim, num_labels, rng);
        Self::from_layers(hidden, head)
    }

    pub fn from_layers(hidden: Vec<Dense<T>>, head: Dense<T>) -> Result<Self> {
        let mut prev = hidden.first().map(Dense::in_dim);
        for (i, l) in hidden.iter().chain(std::iter::once(&head)).enumerate() {
            if Some(l.in_dim()) != prev {
                return Err(Error::Shape(format!("layer {i} does not match its input")));
            }
            if l.bias.len() != l.out_dim() {
                return Err(Error::Shape("bias length differs from layer width".into()));
            }
            prev = Some(l.out_dim());
        }
        Ok(BpModel { hidden, head })
    }

    pub fn input_dim(&self) -> usize {
        self.hidden[0].in_dim()
    }

    pub fn num_labels(&self) -> usize {
        self.head.out_dim()
    }

    fn layers(&self) -> impl Iterator<Item = &Dense<T>> {
        self.hidden.iter().chain(std::iter::once(&self.head))
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense<T>> {
        self.hidden
            .iter_mut()
            .chain(std::iter::once(&mut self.head))
    }

    /// Hidden activations (input first) and the logits.
    fn forward_trace(&self, x: &Matrix<T>) -> Result<(Vec<Matrix<T>>, Matrix<T>)> {
        let mut acts = Vec::with_capacity(self.hidden.len() + 1);
        acts.push(x.clone());
        for layer in &self.hidden {
            let mut z = layer.affine(acts.last().expect("non-empty"))?;
            relu_in_place(&mut z);
            acts.push(z);
        }
        let logits = self.head.affine(acts.last().expect("non-empty"))?;
        Ok((acts, logits))
    }
}

impl<T: Scalar> Parameters<T> for BpModel<T> {
    fn param_blocks(&self) -> Vec<&[T]> {
        dense_blocks(self.layers())
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [T]> {
        dense_blocks_mut(self.layers_mut())
    }

    fn same_architecture(&self, other: &Self) -> bool {
        self.hidden.len() == other.hidden.len()
            && self
                .layers()
                .zip(other.layers())
                .all(|(a, b)| a.weights.shape() == b.weights.shape())
    }
}

/// Raw logits, one row per input row.
pub fn forward_bp<T: Scalar>(model: &BpModel<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
    Ok(model.forward_trace(x)?.1)
}

/// Row-wise softmax.
pub fn softmax<T: Scalar>(logits: &Matrix<T>) -> Matrix<T> {
    let mut p = logits.clone();
    for r in 0..p.rows() {
        let row = p.row_mut(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    p
}

/// Mean softmax cross-entropy of `logits` against `labels`.
pub fn cross_entropy<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> T {
    let mut total = T::zero();
    for (row, &y) in logits.row_iter().zip(labels) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        total += lse - row[y];
    }
    total / T::lit(labels.len().max(1) as f64)
}

/// Exact gradients of the mean cross-entropy for every layer.
pub fn backprop_grads<T: Scalar>(
    model: &BpModel<T>,
    x: &Matrix<T>,
    labels: &[usize],
) -> Result<BpGradients<T>> {
    if labels.len() != x.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} rows",
            labels.len(),
            x.rows()
        )));
    }
    if x.rows() == 0 {
        return Err(Error::Argument("empty batch".into()));
    }
    let classes = model.num_labels();
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Value(format!("label {bad} with {classes} classes")));
    }
    let (acts, logits) = model.forward_trace(x)?;
    let loss = cross_entropy(&logits, labels);

    let inv_n = T::one() / T::lit(x.rows() as f64);
    let mut delta = softmax(&logits);
    for (r, &y) in labels.iter().enumerate() {
        delta.row_mut(r)[y] -= T::one();
    }
    let delta_scaled = delta.scale(inv_n);
    let mut delta = delta_scaled;

    let mut grads = Vec::with_capacity(model.hidden.len() + 1);
    let layers: Vec<&Dense<T>> = model.layers().collect();
    for (k, layer) in layers.iter().enumerate().rev() {
        let input = &acts[k];
        grads.push(DenseGrad {
            d_weights: delta.transa_matmul(input)?,
            d_bias: delta.column_sums(),
        });
        if k > 0 {
            // Back through the weights, then the rectifier gate of acts[k].
            let mut upstream = delta.matmul(&layer.weights)?;
            for (g, &a) in upstream.data_mut().iter_mut().zip(input.data()) {
                if a <= T::zero() {
                    *g = T::zero();
                }
            }
            delta = upstream;
        }
    }
    grads.reverse();
    Ok(BpGradients {
        layers: grads,
        loss,
    })
}

/// One in-place SGD step on the mean cross-entropy, returning the loss
/// before the step. Each layer's delta is propagated through its weights
/// before they are updated.
pub(crate) fn backprop_step<T: Scalar>(
    model: &mut BpModel<T>,
    x: &Matrix<T>,
    labels: &[usize],
    lr: T,
) -> Result<T> {
    let classes = model.num_labels();
    if labels.len() != x.rows() || x.rows() == 0 {
        return Err(Error::Shape(format!(
            "{} labels for {} rows",
            labels.len(),
            x.rows()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Value(format!("label {bad} with {classes} classes")));
    }
    let (acts, logits) = model.forward_trace(x)?;
    let loss = cross_entropy(&logits, labels);
    let inv_n = T::one() / T::lit(x.rows() as f64);
    let mut delta = softmax(&logits);
    for (r, &y) in labels.iter().enumerate() {
        delta.row_mut(r)[y] -= T::one();
    }
    let mut delta = delta.scale(inv_n);
    let depth = model.hidden.len();
    for k in (0..=depth).rev() {
        let layer = if k == depth {
            &mut model.head
        } else {
            &mut model.hidden[k]
        };
        let input = &acts[k];
        let upstream = if k > 0 {
            let mut up = delta.matmul(&layer.weights)?;
            for (g, &a) in up.data_mut().iter_mut().zip(input.data()) {
                if a <= T::zero() {
                    *g = T::zero();
                }
            }
            Some(up)
        } else {
            None
        };
        layer.apply_delta(lr, &delta, input)?;
        match upstream {
            Some(up) => delta = up,
            None => break,
        }
    }
    Ok(loss)
}

/// Argmax of the logits, ties to the smaller class.
pub fn predict_bp_batch<T: Scalar>(
    model: &BpModel<T>,
    samples: &[&LabeledSample<T>],
) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(512) {
        let x = stack_pixels(chunk, model.input_dim())?;
        let logits = forward_bp(model, &x)?;
        out.extend(logits.row_iter().map(crate::ffnet::argmax_scores));
    }
    Ok(out)
}

pub(crate) fn stack_pixels<T: Scalar>(
    samples: &[&LabeledSample<T>],
    d: usize,
) -> Result<Matrix<T>> {
    let mut x = Matrix::zeros(samples.len(), d);
    for (r, s) in samples.iter().enumerate() {
        if s.pixels.len() != d {
            return Err(Error::Shape(format!(
                "sample has {} pixels, model expects {d}",
                s.pixels.len()
            )));
        }
        x.row_mut(r).copy_from_slice(&s.pixels);
    }
    Ok(x)
}

/// Shuffled mini-batch SGD on a copy of `model`.
pub fn local_train_bp<T: Scalar, R: Rng + ?Sized>(
    model: &BpModel<T>,
    data: &[&LabeledSample<T>],
    hyper: &BpHyper,
    rng: &mut R,
) -> Result<Trained<BpModel<T>>> {
    check_schedule(hyper.lr, hyper.batch_size, hyper.local_epochs)?;
    if data.is_empty() {
        return Err(Error::Argument("client has no training data".into()));
    }
    let mut model = model.clone();
    let lr = T::lit(hyper.lr);
    let d = model.input_dim();
    let mut loss_sum = 0.0;
    let mut steps = 0;
    let mut batch = Vec::with_capacity(hyper.batch_size);
    let mut labels = Vec::with_capacity(hyper.batch_size);
    for _ in 0..hyper.local_epochs {
        let order = epoch_order(data.len(), rng);
        for chunk in order.chunks(hyper.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i]));
            labels.clear();
            labels.extend(batch.iter().map(|s| s.label));
            let x = stack_pixels(&batch, d)?;
            let loss = backprop_step(&mut model, &x, &labels, lr)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("cross-entropy is {loss}")));
            }
            loss_sum += loss.as_f64();
            steps += 1;
        }
    }
    ensure_finite_params(&model, "backprop model")?;
    Ok(Trained {
        model,
        mean_loss: loss_sum / steps as f64,
        steps,
    })
}
