use super::{Matrix, Scalar};
use crate::error::{Error, Result};

/// Central-difference gradient of a scalar function of a matrix:
/// entry `i` is `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h`.
pub fn finite_diff_grad<T: Scalar>(
    mut f: impl FnMut(&Matrix<T>) -> T,
    x: &Matrix<T>,
    h: T,
) -> Result<Matrix<T>> {
    if h.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::Argument(format!("step must be positive, got {h}")));
    }
    let mut probe = x.clone();
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    let two_h = h + h;
    for i in 0..x.data().len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "function is not finite when probing entry {i}"
            )));
        }
        grad.data_mut()[i] = (plus - minus) / two_h;
    }
    Ok(grad)
}

/// `‖a − b‖∞ / max(‖a‖∞, ‖b‖∞, floor)`; the floor keeps near-zero gradients
/// from turning rounding noise into large relative errors.
pub fn relative_error<T: Scalar>(a: &[T], b: &[T], floor: T) -> T {
    let mut diff = T::zero();
    let mut scale = floor;
    for (&x, &y) in a.iter().zip(b) {
        diff = diff.max((x - y).abs());
        scale = scale.max(x.abs()).max(y.abs());
    }
    diff / scale
}
