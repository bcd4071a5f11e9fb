//! Pieces shared by both local trainers.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// A locally trained model and the mean of its per-batch losses.
#[derive(Clone, Debug)]
pub struct Trained<M> {
    pub model: M,
    pub mean_loss: f64,
    pub steps: usize,
}

pub(crate) fn check_schedule(lr: f64, batch_size: usize, local_epochs: usize) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Argument(format!(
            "learning rate must be finite and >= 0, got {lr}"
        )));
    }
    if batch_size == 0 || local_epochs == 0 {
        return Err(Error::Argument(
            "batch_size and local_epochs must be at least 1".into(),
        ));
    }
    Ok(())
}

/// A fresh shuffle of `0..n` for one local epoch.
pub(crate) fn epoch_order<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}
