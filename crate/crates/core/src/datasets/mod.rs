//! Image datasets, label embedding and client partitioning.

mod cifar;
pub(crate) mod embed;
mod mnist;
mod partition;

pub use cifar::{load_cifar10, CIFAR_PIXELS, CIFAR_RECORD_BYTES};
pub use embed::{embed_label, make_negative, EmbeddedSample, Polarity, EMBED_MAGNITUDE};
pub use mnist::{load_mnist, load_mnist_split, MNIST_PIXELS};
pub use partition::{partition_iid, partition_noniid, ClientPartition};

/// Both supported datasets have ten classes.
pub const NUM_CLASSES: usize = 10;

/// A flattened image scaled to `[0, 1]` with its class id.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample<T> {
    pub pixels: Vec<T>,
    pub label: usize,
}

/// Loaded samples plus the number of classes.
#[derive(Clone, Debug)]
pub struct Dataset<T> {
    pub samples: Vec<LabeledSample<T>>,
    pub num_labels: usize,
}

impl<T> Dataset<T> {
    pub fn new(samples: Vec<LabeledSample<T>>, num_labels: usize) -> Self {
        Dataset {
            samples,
            num_labels,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Pixel count per sample (0 when empty).
    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.pixels.len())
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// References to the samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Vec<&LabeledSample<T>> {
        indices.iter().map(|&i| &self.samples[i]).collect()
    }

    /// Keeps the first `n` samples.
    pub fn truncate(&mut self, n: usize) {
        self.samples.truncate(n);
    }
}
