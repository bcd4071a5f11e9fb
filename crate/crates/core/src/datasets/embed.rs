use rand::Rng;

use super::LabeledSample;
use crate::numerics::Scalar;

/// Value written at the one-hot position; equal to the largest pixel value.
pub const EMBED_MAGNITUDE: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

/// An image whose first `num_labels` pixels hold a one-hot label.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedSample<T> {
    pub pixels: Vec<T>,
    pub polarity: Polarity,
    pub embedded_label: usize,
}

/// Copies `pixels` into `dst` and overwrites the leading `num_labels`
/// entries with the one-hot code of `label`.
#[inline]
pub(crate) fn write_embedded<T: Scalar>(
    dst: &mut [T],
    pixels: &[T],
    label: usize,
    num_labels: usize,
) {
    dst.copy_from_slice(pixels);
    dst[..num_labels].fill(T::zero());
    dst[label] = T::lit(EMBED_MAGNITUDE);
}

/// Panics if `label >= num_labels` or the image has fewer than
/// `num_labels` pixels.
pub fn embed_label<T: Scalar>(
    x: &LabeledSample<T>,
    label: usize,
    num_labels: usize,
) -> EmbeddedSample<T> {
    assert!(
        label < num_labels,
        "label {label} out of range 0..{num_labels}"
    );
    assert!(
        x.pixels.len() >= num_labels,
        "image too small for label code"
    );
    let mut pixels = vec![T::zero(); x.pixels.len()];
    write_embedded(&mut pixels, &x.pixels, label, num_labels);
    EmbeddedSample {
        pixels,
        polarity: if label == x.label {
            Polarity::Positive
        } else {
            Polarity::Negative
        },
        embedded_label: label,
    }
}

/// Uniformly random label different from `true_label`.
#[inline]
pub(crate) fn draw_wrong_label<R: Rng + ?Sized>(
    true_label: usize,
    num_labels: usize,
    rng: &mut R,
) -> usize {
    assert!(
        num_labels >= 2,
        "need at least two labels for a negative sample"
    );
    let j = rng.random_range(0..num_labels - 1);
    if j >= true_label {
        j + 1
    } else {
        j
    }
}

/// `x` with a uniformly drawn incorrect label embedded.
pub fn make_negative<T: Scalar, R: Rng + ?Sized>(
    x: &LabeledSample<T>,
    num_labels: usize,
    rng: &mut R,
) -> EmbeddedSample<T> {
    embed_label(x, draw_wrong_label(x.label, num_labels, rng), num_labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn sample(label: usize) -> LabeledSample<f64> {
        LabeledSample {
            pixels: (0..16).map(|i| i as f64 / 16.0).collect(),
            label,
        }
    }

    #[test]
    fn positive_embedding_writes_one_hot() {
        let e = embed_label(&sample(3), 3, 10);
        assert_eq!(e.polarity, Polarity::Positive);
        assert_eq!(e.embedded_label, 3);
        for (i, &p) in e.pixels[..10].iter().enumerate() {
            assert_eq!(p, if i == 3 { 1.0 } else { 0.0 });
        }
        assert_eq!(&e.pixels[10..], &sample(3).pixels[10..]);
    }

    #[test]
    fn wrong_label_is_negative() {
        let e = embed_label(&sample(3), 7, 10);
        assert_eq!(e.polarity, Polarity::Negative);
        assert_eq!(e.pixels[7], 1.0);
    }

    #[test]
    fn zero_image_only_has_the_code() {
        let x = LabeledSample {
            pixels: vec![0.0f64; 784],
            label: 5,
        };
        let e = embed_label(&x, 0, 10);
        assert_eq!(e.pixels[0], 1.0);
        assert_eq!(e.pixels.iter().filter(|&&p| p != 0.0).count(), 1);
    }

    #[test]
    fn re_embedding_is_idempotent() {
        let e = embed_label(&sample(2), 6, 10);
        let again = embed_label(
            &LabeledSample {
                pixels: e.pixels.clone(),
                label: 2,
            },
            6,
            10,
        );
        assert_eq!(again.pixels, e.pixels);
    }

    #[test]
    fn two_labels_always_pick_the_other() {
        let mut rng = RngStream::derive(0, &[]);
        let x = LabeledSample {
            pixels: vec![0.5f64; 4],
            label: 0,
        };
        for _ in 0..100 {
            let n = make_negative(&x, 2, &mut rng);
            assert_eq!(n.embedded_label, 1);
            assert_eq!(n.polarity, Polarity::Negative);
        }
    }

    #[test]
    fn negatives_never_hit_the_true_label() {
        let mut rng = RngStream::derive(1, &[]);
        for i in 0..100_000usize {
            let t = i % 10;
            assert_ne!(draw_wrong_label(t, 10, &mut rng), t);
        }
    }

    #[test]
    fn negative_labels_are_uniform() {
        // Chi-square against uniform over the nine wrong labels; 8 degrees of
        // freedom, 0.999 quantile is 26.12.
        let mut rng = RngStream::derive(2, &[]);
        let x = sample(3);
        let mut counts = [0usize; 10];
        let n = 10_000;
        for _ in 0..n {
            let e = make_negative(&x, 10, &mut rng);
            assert_eq!(e.polarity, Polarity::Negative);
            counts[e.embedded_label] += 1;
        }
        assert_eq!(counts[3], 0);
        let expected = n as f64 / 9.0;
        let sigma = (n as f64 * (1.0 / 9.0) * (8.0 / 9.0)).sqrt();
        let mut chi2 = 0.0;
        for (l, &c) in counts.iter().enumerate() {
            if l == 3 {
                continue;
            }
            assert!((c as f64 - expected).abs() < 3.0 * sigma, "label {l}: {c}");
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        assert!(chi2 < 26.12, "chi2 = {chi2}");
    }
}
