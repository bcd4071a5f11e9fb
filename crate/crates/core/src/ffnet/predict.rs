use super::{goodness, goodness_row, layer_forward, layer_norm, FfModel};
use crate::datasets::embed::write_embedded;
use crate::datasets::{LabeledSample, EMBED_MAGNITUDE};
use crate::error::{Error, Result};
use crate::layers::relu_in_place;
use crate::numerics::{Matrix, Scalar};

const PREDICT_CHUNK: usize = 256;

/// First index of the largest score.
pub fn argmax_scores<T: Scalar>(scores: &[T]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn check_dim<T: Scalar>(model: &FfModel<T>, x: &LabeledSample<T>) -> Result<()> {
    if x.pixels.len() != model.input_dim() {
        return Err(Error::Shape(format!(
            "sample has {} pixels, model expects {}",
            x.pixels.len(),
            model.input_dim()
        )));
    }
    Ok(())
}

/// Total goodness for every candidate label, measured on the activities
/// before normalisation.
pub fn label_scores<T: Scalar>(model: &FfModel<T>, x: &LabeledSample<T>) -> Result<Vec<T>> {
    check_dim(model, x)?;
    let mut scores = Vec::with_capacity(model.num_labels);
    let mut input = Matrix::zeros(1, model.input_dim());
    for label in 0..model.num_labels {
        write_embedded(input.row_mut(0), &x.pixels, label, model.num_labels);
        let mut h = input.clone();
        let mut total = T::zero();
        for (i, layer) in model.layers.iter().enumerate() {
            let y = layer_forward(layer, &h)?;
            if !(i == 0 && model.skip_first_goodness) {
                total += goodness(&y)[0];
            }
            h = layer_norm(&y, model.norm_eps);
        }
        scores.push(total);
    }
    Ok(scores)
}

/// The label with the largest total goodness; ties go to the smaller label.
pub fn predict<T: Scalar>(model: &FfModel<T>, x: &LabeledSample<T>) -> Result<usize> {
    Ok(argmax_scores(&label_scores(model, x)?))
}

/// Batched [`predict`].
///
/// The label code only touches the first layer through `num_labels` input
/// columns, so the first-layer pre-activation is computed once with those
/// pixels cleared and each candidate adds its own weight column.
pub fn predict_batch<T: Scalar>(
    model: &FfModel<T>,
    samples: &[&LabeledSample<T>],
) -> Result<Vec<usize>> {
    let d = model.input_dim();
    let labels = model.num_labels;
    let first = &model.layers[0];
    let magnitude = T::lit(EMBED_MAGNITUDE);
    let mut out = Vec::with_capacity(samples.len());

    for chunk in samples.chunks(PREDICT_CHUNK) {
        let mut cleared = Matrix::zeros(chunk.len(), d);
        for (r, s) in chunk.iter().enumerate() {
            check_dim(model, s)?;
            let row = cleared.row_mut(r);
            row.copy_from_slice(&s.pixels);
            row[..labels].fill(T::zero());
        }
        let base = first.affine(&cleared)?;
        let mut scores = vec![T::zero(); chunk.len() * labels];
        for label in 0..labels {
            let mut y = base.clone();
            for r in 0..y.rows() {
                for (o, v) in y.row_mut(r).iter_mut().enumerate() {
                    *v += magnitude * first.weights.get(o, label);
                }
            }
            relu_in_place(&mut y);
            for (r, row) in y.row_iter().enumerate() {
                if !model.skip_first_goodness {
                    scores[r * labels + label] += goodness_row(row);
                }
            }
            let mut h = layer_norm(&y, model.norm_eps);
            for layer in &model.layers[1..] {
                let y = layer_forward(layer, &h)?;
                for (r, row) in y.row_iter().enumerate() {
                    scores[r * labels + label] += goodness_row(row);
                }
                h = layer_norm(&y, model.norm_eps);
            }
        }
        out.extend(scores.chunks_exact(labels).map(argmax_scores));
    }
    Ok(out)
}
