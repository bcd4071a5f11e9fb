//! CIFAR-10 binary version: 3073-byte records, a label byte followed by
//! 1024 red, 1024 green and 1024 blue bytes.

use std::fs;
use std::path::Path;

use super::{Dataset, LabeledSample, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::numerics::Scalar;

pub const CIFAR_PIXELS: usize = 32 * 32 * 3;
pub const CIFAR_RECORD_BYTES: usize = CIFAR_PIXELS + 1;

/// Loads and concatenates batch files in the order given. Pixel order is
/// kept channel-major as stored.
pub fn load_cifar10<T: Scalar, P: AsRef<Path>>(batch_paths: &[P]) -> Result<Dataset<T>> {
    let scale = T::lit(255.0);
    let mut samples = Vec::new();
    for path in batch_paths {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() % CIFAR_RECORD_BYTES != 0 {
            return Err(Error::Format {
                path: path.to_owned(),
                msg: format!(
                    "size {} is not a multiple of {CIFAR_RECORD_BYTES}",
                    bytes.len()
                ),
            });
        }
        samples.reserve(bytes.len() / CIFAR_RECORD_BYTES);
        for (i, rec) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
            let label = rec[0] as usize;
            if label >= NUM_CLASSES {
                return Err(Error::Value(format!(
                    "{}: record {i} has label {label}",
                    path.display()
                )));
            }
            samples.push(LabeledSample {
                pixels: rec[1..]
                    .iter()
                    .map(|&b| T::lit(f64::from(b)) / scale)
                    .collect(),
                label,
            });
        }
    }
    Ok(Dataset::new(samples, NUM_CLASSES))
}
