//! Affine layers shared by both model families, and the flat parameter view
//! used by aggregation and checkpoints.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::matrix::axpy;
use crate::numerics::{Matrix, Scalar};

/// `y = x·Wᵀ + b` with `W` stored `out_dim × in_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(weights: Matrix<T>, bias: Vec<T>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::Shape(format!(
                "bias of length {} for {} output units",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Dense { weights, bias })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            weights: Matrix::zeros(out_dim, in_dim),
            bias: vec![T::zero(); out_dim],
        }
    }

    /// Weights and biases drawn from `U(−1/√in_dim, 1/√in_dim)`.
    pub fn init_uniform<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        let mut draw = || T::lit(rng.random_range(-bound..=bound));
        let weights = Matrix::from_fn(out_dim, in_dim, |_, _| draw());
        let bias = (0..out_dim).map(|_| draw()).collect();
        Dense { weights, bias }
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.data().len() + self.bias.len()
    }

    /// `x·Wᵀ + b`, one row per sample.
    pub fn affine(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.cols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, layer expects {}",
                x.cols(),
                self.in_dim()
            )));
        }
        let mut z = x.matmul_transb(&self.weights)?;
        z.add_row_vector(&self.bias)?;
        Ok(z)
    }

    /// One SGD step; fails if the result is not finite.
    pub fn sgd_step(&mut self, lr: T, grad: &DenseGrad<T>) -> Result<()> {
        self.weights.add_scaled(-lr, &grad.d_weights)?;
        if grad.d_bias.len() != self.bias.len() {
            return Err(Error::Shape("bias gradient length".into()));
        }
        for (b, &g) in self.bias.iter_mut().zip(&grad.d_bias) {
            *b -= lr * g;
        }
        self.weights.ensure_finite("layer weights")?;
        if self.bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::Numeric("layer bias contains NaN or infinity".into()));
        }
        Ok(())
    }
}

impl<T: Scalar> Dense<T> {
    /// In-place `W -= lr·δᵀ·x` and `b -= lr·Σᵣ δᵣ`: the SGD step for output
    /// deltas `delta` on inputs `x`, accumulated row by row without building
    /// the gradient. Finiteness is left to the caller.
    pub(crate) fn apply_delta(&mut self, lr: T, delta: &Matrix<T>, x: &Matrix<T>) -> Result<()> {
        if delta.rows() != x.rows() || delta.cols() != self.out_dim() || x.cols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "delta {:?} and input {:?} do not fit a {}x{} layer",
                delta.shape(),
                x.shape(),
                self.out_dim(),
                self.in_dim()
            )));
        }
        for (d_row, x_row) in delta.row_iter().zip(x.row_iter()) {
            for (o, &d) in d_row.iter().enumerate() {
                if d != T::zero() {
                    axpy(self.weights.row_mut(o), -lr * d, x_row);
                    self.bias[o] -= lr * d;
                }
            }
        }
        Ok(())
    }
}

/// Gradient of a scalar loss with respect to one `Dense` layer.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrad<T> {
    pub d_weights: Matrix<T>,
    pub d_bias: Vec<T>,
}

pub(crate) fn relu_in_place<T: Scalar>(z: &mut Matrix<T>) {
    for v in z.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// A model viewed as an ordered list of flat parameter blocks.
///
/// Two models with the same architecture yield blocks of identical lengths
/// in the same order.
pub trait Parameters<T: Scalar>: Clone {
    fn param_blocks(&self) -> Vec<&[T]>;

    fn param_blocks_mut(&mut self) -> Vec<&mut [T]>;

    /// Non-parameter properties (dimensions, hyperparameters baked into the
    /// model) that must agree before two models can be averaged.
    fn same_architecture(&self, other: &Self) -> bool;

    fn param_count(&self) -> usize {
        self.param_blocks().iter().map(|b| b.len()).sum()
    }
}

/// Fails if any parameter is NaN or infinite.
pub(crate) fn ensure_finite_params<T: Scalar, M: Parameters<T>>(
    model: &M,
    what: &str,
) -> Result<()> {
    if model
        .param_blocks()
        .iter()
        .all(|b| b.iter().all(|v| v.is_finite()))
    {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "{what} parameters contain NaN or infinity"
        )))
    }
}

pub(crate) fn dense_blocks<'a, T: Scalar>(
    layers: impl Iterator<Item = &'a Dense<T>>,
) -> Vec<&'a [T]> {
    layers
        .flat_map(|l| [l.weights.data(), l.bias.as_slice()])
        .collect()
}

pub(crate) fn dense_blocks_mut<'a, T: Scalar>(
    layers: impl Iterator<Item = &'a mut Dense<T>>,
) -> Vec<&'a mut [T]> {
    layers
        .flat_map(|l| {
            let Dense { weights, bias } = l;
            [weights.data_mut(), bias.as_mut_slice()]
        })
        .collect()
}
