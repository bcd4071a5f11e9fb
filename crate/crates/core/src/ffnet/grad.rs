use super::objective::{ff_loss_slope, symba_loss_slope};
use super::{ff_loss, goodness, layer_forward, symba_loss, FfLayer, LossKind, Objective};
use crate::datasets::Polarity;
use crate::error::{Error, Result};
use crate::layers::DenseGrad;
use crate::numerics::{Matrix, Scalar};

#[derive(Clone, Debug)]
pub struct LayerGrad<T> {
    pub grad: DenseGrad<T>,
    /// Batch loss the gradient belongs to.
    pub loss: T,
    pub mean_pos_goodness: T,
    pub mean_neg_goodness: T,
}

fn mean<T: Scalar>(v: &[T]) -> T {
    if v.is_empty() {
        T::zero()
    } else {
        v.iter().copied().sum::<T>() / T::lit(v.len() as f64)
    }
}

/// Scales row `n` of `y` by `2·slope[n]`: the gradient of the loss with
/// respect to the pre-activations, since dg/dz = 2y behind the rectifier.
fn backprop_goodness<T: Scalar>(y: &Matrix<T>, slope: &[T]) -> Matrix<T> {
    let mut d = y.clone();
    let two = T::lit(2.0);
    for (r, &s) in slope.iter().enumerate() {
        let k = two * s;
        for v in d.row_mut(r) {
            *v *= k;
        }
    }
    d
}

/// Pre-activation gradients of one layer's batch loss, before they are
/// contracted with the inputs.
struct Deltas<T> {
    d_pos: Matrix<T>,
    d_neg: Matrix<T>,
    loss: T,
    g_pos: Vec<T>,
    g_neg: Vec<T>,
}

fn layer_deltas<T: Scalar>(
    layer: &FfLayer<T>,
    pos: &Matrix<T>,
    neg: &Matrix<T>,
    objective: &Objective<T>,
) -> Result<Deltas<T>> {
    let y_pos = layer_forward(layer, pos)?;
    let y_neg = layer_forward(layer, neg)?;
    let g_pos = goodness(&y_pos);
    let g_neg = goodness(&y_neg);
    let theta = objective.theta;

    let (slope_pos, slope_neg, loss) = match objective.kind {
        LossKind::Ff => {
            if g_pos.is_empty() && g_neg.is_empty() {
                return Err(Error::Argument("empty batch".into()));
            }
            let np = T::lit(g_pos.len().max(1) as f64);
            let nn = T::lit(g_neg.len().max(1) as f64);
            let pos_terms: Vec<T> = g_pos
                .iter()
                .map(|&g| ff_loss(g, theta, Polarity::Positive))
                .collect();
            let neg_terms: Vec<T> = g_neg
                .iter()
                .map(|&g| ff_loss(g, theta, Polarity::Negative))
                .collect();
            let loss = mean(&pos_terms) + mean(&neg_terms);
            let sp = g_pos
                .iter()
                .map(|&g| ff_loss_slope(g, theta, Polarity::Positive) / np)
                .collect::<Vec<_>>();
            let sn = g_neg
                .iter()
                .map(|&g| ff_loss_slope(g, theta, Polarity::Negative) / nn)
                .collect::<Vec<_>>();
            (sp, sn, loss)
        }
        LossKind::Symba => {
            if g_pos.len() != g_neg.len() {
                return Err(Error::Shape(format!(
                    "paired loss needs equal batches, got {} positive and {} negative",
                    g_pos.len(),
                    g_neg.len()
                )));
            }
            if g_pos.is_empty() {
                return Err(Error::Argument("empty batch".into()));
            }
            let alpha = objective.alpha;
            let n = T::lit(g_pos.len() as f64);
            let mut loss = T::zero();
            let mut sp = Vec::with_capacity(g_pos.len());
            for (&gp, &gn) in g_pos.iter().zip(&g_neg) {
                loss += symba_loss(gp, gn, alpha);
                sp.push(symba_loss_slope(gp - gn, alpha) / n);
            }
            let sn = sp.iter().map(|&s| -s).collect();
            (sp, sn, loss / n)
        }
    };

    let d_pos = backprop_goodness(&y_pos, &slope_pos);
    let d_neg = backprop_goodness(&y_neg, &slope_neg);
    Ok(Deltas {
        d_pos,
        d_neg,
        loss,
        g_pos,
        g_neg,
    })
}

/// Gradient of one layer's mean batch loss with respect to its own weights
/// and bias.
///
/// `pos` and `neg` are the layer's inputs for positive and negative data.
/// With [`LossKind::Ff`] the loss is the mean positive term plus the mean
/// negative term (either side may be empty). With [`LossKind::Symba`] row `k`
/// of `pos` is paired with row `k` of `neg`.
pub fn layer_grad<T: Scalar>(
    layer: &FfLayer<T>,
    pos: &Matrix<T>,
    neg: &Matrix<T>,
    objective: &Objective<T>,
) -> Result<LayerGrad<T>> {
    let Deltas {
        d_pos,
        d_neg,
        loss,
        g_pos,
        g_neg,
    } = layer_deltas(layer, pos, neg, objective)?;
    let mut d_weights = d_pos.transa_matmul(pos)?;
    d_weights.add_scaled(T::one(), &d_neg.transa_matmul(neg)?)?;
    let mut d_bias = d_pos.column_sums();
    for (b, v) in d_bias.iter_mut().zip(d_neg.column_sums()) {
        *b += v;
    }
    Ok(LayerGrad {
        grad: DenseGrad { d_weights, d_bias },
        loss,
        mean_pos_goodness: mean(&g_pos),
        mean_neg_goodness: mean(&g_neg),
    })
}

/// One in-place SGD step on the layer's own loss, returning that loss.
/// Equivalent to [`layer_grad`] followed by a step, up to rounding, but
/// never materialises the weight gradient.
pub(crate) fn layer_step<T: Scalar>(
    layer: &mut FfLayer<T>,
    pos: &Matrix<T>,
    neg: &Matrix<T>,
    objective: &Objective<T>,
    lr: T,
) -> Result<T> {
    let d = layer_deltas(layer, pos, neg, objective)?;
    layer.apply_delta(lr, &d.d_pos, pos)?;
    layer.apply_delta(lr, &d.d_neg, neg)?;
    Ok(d.loss)
}
