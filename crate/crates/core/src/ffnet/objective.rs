use serde::{Deserialize, Serialize};

use crate::datasets::Polarity;
use crate::numerics::scalar::{sigmoid, softplus};
use crate::numerics::{Matrix, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Independent logistic terms for positive and negative goodness.
    Ff,
    /// Logistic loss on the paired goodness gap.
    Symba,
}

/// Everything a layer needs to score its goodness.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Objective<T> {
    pub kind: LossKind,
    pub theta: T,
    pub alpha: T,
}

#[inline]
pub fn goodness_row<T: Scalar>(y: &[T]) -> T {
    y.iter().map(|&v| v * v).sum()
}

/// Sum of squared activities, one value per row.
pub fn goodness<T: Scalar>(y: &Matrix<T>) -> Vec<T> {
    y.row_iter().map(goodness_row).collect()
}

/// `−ln σ(g − θ)` for positive data, `−ln σ(θ − g)` for negative data.
pub fn ff_loss<T: Scalar>(g: T, theta: T, polarity: Polarity) -> T {
    match polarity {
        Polarity::Positive => softplus(theta - g),
        Polarity::Negative => softplus(g - theta),
    }
}

/// `softplus(−α(g_pos − g_neg)) / α`.
pub fn symba_loss<T: Scalar>(g_pos: T, g_neg: T, alpha: T) -> T {
    softplus(-alpha * (g_pos - g_neg)) / alpha
}

/// d ff_loss / dg.
#[inline]
pub(crate) fn ff_loss_slope<T: Scalar>(g: T, theta: T, polarity: Polarity) -> T {
    match polarity {
        Polarity::Positive => -sigmoid(theta - g),
        Polarity::Negative => sigmoid(g - theta),
    }
}

/// d symba_loss / d(g_pos − g_neg).
#[inline]
pub(crate) fn symba_loss_slope<T: Scalar>(gap: T, alpha: T) -> T {
    -sigmoid(-alpha * gap)
}

/// Divides every row by `‖row‖₂ + eps`, keeping only its direction.
pub fn layer_norm<T: Scalar>(y: &Matrix<T>, eps: T) -> Matrix<T> {
    let mut out = y.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let norm = goodness_row(row).sqrt();
        let inv = T::one() / (norm + eps);
        for v in row {
            *v *= inv;
        }
    }
    out
}
