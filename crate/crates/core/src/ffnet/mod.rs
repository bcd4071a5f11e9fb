//! Forward-Forward network: layer-local goodness objectives, greedy
//! layer-wise training and goodness-based prediction.

mod grad;
mod objective;
mod predict;
mod train;

pub use grad::{layer_grad, LayerGrad};
pub use objective::{ff_loss, goodness, goodness_row, layer_norm, symba_loss, LossKind, Objective};
pub use predict::{argmax_scores, label_scores, predict, predict_batch};
pub use train::{local_train_ff, FfHyper};

use rand::Rng;

use crate::error::{Error, Result};
use crate::layers::{dense_blocks, dense_blocks_mut, relu_in_place, Dense, Parameters};
use crate::numerics::{Matrix, Scalar};

pub type FfLayer<T> = Dense<T>;

pub const DEFAULT_THETA: f64 = 2.0;
pub const DEFAULT_NORM_EPS: f64 = 1e-8;

/// Rectified affine map, `max(0, x·Wᵀ + b)` per row.
pub fn layer_forward<T: Scalar>(layer: &FfLayer<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
    let mut z = layer.affine(x)?;
    relu_in_place(&mut z);
    Ok(z)
}

/// A stack of rectified layers with no classifier head.
#[derive(Clone, Debug, PartialEq)]
pub struct FfModel<T> {
    pub layers: Vec<FfLayer<T>>,
    /// Goodness threshold.
    pub theta: T,
    pub num_labels: usize,
    /// Added to the row norm before dividing between layers.
    pub norm_eps: T,
    /// Leave the first layer out of the prediction score.
    pub skip_first_goodness: bool,
}

impl<T: Scalar> FfModel<T> {
    /// Uniformly initialised model with the given hidden widths.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        widths: &[usize],
        theta: T,
        num_labels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.is_empty() || widths.contains(&0) {
            return Err(Error::Argument(format!("invalid hidden widths {widths:?}")));
        }
        let mut layers = Vec::with_capacity(widths.len());
        let mut in_dim = input_dim;
        for &w in widths {
            layers.push(Dense::init_uniform(in_dim, w, rng));
            in_dim = w;
        }
        Self::from_layers(layers, theta, num_labels)
    }

    pub fn from_layers(layers: Vec<FfLayer<T>>, theta: T, num_labels: usize) -> Result<Self> {
        let model = FfModel {
            layers,
            theta,
            num_labels,
            norm_eps: T::lit(DEFAULT_NORM_EPS),
            skip_first_goodness: false,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .layers
            .first()
            .ok_or_else(|| Error::Shape("model has no layers".into()))?;
        if first.in_dim() < self.num_labels {
            return Err(Error::Shape(format!(
                "input dimension {} cannot hold {} label pixels",
                first.in_dim(),
                self.num_labels
            )));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        for l in &self.layers {
            if l.bias.len() != l.out_dim() {
                return Err(Error::Shape("bias length differs from layer width".into()));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(Dense::out_dim).collect()
    }

    pub fn objective(&self, kind: LossKind, alpha: T) -> Objective<T> {
        Objective {
            kind,
            theta: self.theta,
            alpha,
        }
    }
}

impl<T: Scalar> Parameters<T> for FfModel<T> {
    fn param_blocks(&self) -> Vec<&[T]> {
        dense_blocks(self.layers.iter())
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [T]> {
        dense_blocks_mut(self.layers.iter_mut())
    }

    fn same_architecture(&self, other: &Self) -> bool {
        self.num_labels == other.num_labels
            && self.theta == other.theta
            && self.norm_eps == other.norm_eps
            && self.skip_first_goodness == other.skip_first_goodness
            && self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weights.shape() == b.weights.shape())
    }
}
