//! IDX files as distributed for MNIST: big-endian `u32` header fields,
//! then one unsigned byte per pixel or label.

use std::fs;
use std::path::Path;

use super::{Dataset, LabeledSample, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::numerics::Scalar;

pub const MNIST_PIXELS: usize = 28 * 28;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn check_header(path: &Path, bytes: &[u8], header_len: usize, magic: u32) -> Result<()> {
    if bytes.len() >= 4 {
        let found = read_u32_be(bytes, 0);
        if found != magic {
            return Err(Error::Format {
                path: path.to_owned(),
                msg: format!("magic number {found:#010x}, expected {magic:#010x}"),
            });
        }
    }
    if bytes.len() < header_len {
        return Err(Error::Length {
            path: path.to_owned(),
            expected: header_len,
            found: bytes.len(),
        });
    }
    Ok(())
}

pub(crate) fn parse_idx_images<'a>(
    path: &Path,
    bytes: &'a [u8],
) -> Result<(usize, usize, &'a [u8])> {
    check_header(path, bytes, 16, IMAGES_MAGIC)?;
    let count = read_u32_be(bytes, 4) as usize;
    let rows = read_u32_be(bytes, 8) as usize;
    let cols = read_u32_be(bytes, 12) as usize;
    let pixels = rows * cols;
    let expected = 16 + count * pixels;
    if bytes.len() < expected {
        return Err(Error::Length {
            path: path.to_owned(),
            expected,
            found: bytes.len(),
        });
    }
    Ok((count, pixels, &bytes[16..expected]))
}

pub(crate) fn parse_idx_labels<'a>(path: &Path, bytes: &'a [u8]) -> Result<&'a [u8]> {
    check_header(path, bytes, 8, LABELS_MAGIC)?;
    let count = read_u32_be(bytes, 4) as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(Error::Length {
            path: path.to_owned(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(&bytes[8..expected])
}

/// Loads an images/labels IDX pair. Pixels are `byte / 255`.
pub fn load_mnist<T: Scalar>(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Dataset<T>> {
    let (images_path, labels_path) = (images_path.as_ref(), labels_path.as_ref());
    let image_bytes = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let label_bytes = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let (count, pixels, raw) = parse_idx_images(images_path, &image_bytes)?;
    let labels = parse_idx_labels(labels_path, &label_bytes)?;
    if labels.len() != count {
        return Err(Error::Consistency(format!(
            "{} holds {count} images but {} holds {} labels",
            images_path.display(),
            labels_path.display(),
            labels.len()
        )));
    }
    let scale = T::lit(255.0);
    let mut samples = Vec::with_capacity(count);
    for (img, &label) in raw.chunks_exact(pixels.max(1)).zip(labels) {
        if label as usize >= NUM_CLASSES {
            return Err(Error::Value(format!(
                "{}: label {label} out of range",
                labels_path.display()
            )));
        }
        samples.push(LabeledSample {
            pixels: img.iter().map(|&b| T::lit(f64::from(b)) / scale).collect(),
            label: label as usize,
        });
    }
    Ok(Dataset::new(samples, NUM_CLASSES))
}

/// Loads `train-*` or `t10k-*` files from `dir` using the standard file names.
pub fn load_mnist_split<T: Scalar>(dir: impl AsRef<Path>, train: bool) -> Result<Dataset<T>> {
    let prefix = if train { "train" } else { "t10k" };
    let dir = dir.as_ref();
    load_mnist(
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}
