//! Binary model checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic        8 bytes  "FFWDCKPT"
//! version      u32      1
//! kind         u8       0 = forward-forward, 1 = backprop
//! scalar       u8       bytes per parameter (4 or 8)
//! flags        u8       bit 0: skip first layer when predicting (FF)
//! reserved     u8       0
//! num_labels   u32
//! theta        f64      goodness threshold (0 for backprop)
//! norm_eps     f64      (0 for backprop)
//! layer_count  u32      backprop counts the head as its last layer
//! per layer    u32 in_dim, u32 out_dim, weights (out x in, row major), bias
//! ```

use std::path::Path;

use crate::bpnet::BpModel;
use crate::error::{Error, Result};
use crate::ffnet::FfModel;
use crate::layers::Dense;
use crate::numerics::{Matrix, Scalar};

pub const MAGIC: &[u8; 8] = b"FFWDCKPT";
pub const VERSION: u32 = 1;

const KIND_FF: u8 = 0;
const KIND_BP: u8 = 1;
const FLAG_SKIP_FIRST: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Checkpoint<T> {
    Ff(FfModel<T>),
    Bp(BpModel<T>),
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let (kind, flags, num_labels, theta, eps, layers): (
            u8,
            u8,
            usize,
            f64,
            f64,
            Vec<&Dense<T>>,
        ) = match self {
            Checkpoint::Ff(m) => (
                KIND_FF,
                if m.skip_first_goodness {
                    FLAG_SKIP_FIRST
                } else {
                    0
                },
                m.num_labels,
                m.theta.as_f64(),
                m.norm_eps.as_f64(),
                m.layers.iter().collect(),
            ),
            Checkpoint::Bp(m) => (
                KIND_BP,
                0,
                m.num_labels(),
                0.0,
                0.0,
                m.hidden.iter().chain(std::iter::once(&m.head)).collect(),
            ),
        };
        out.extend_from_slice(&[kind, T::BYTES as u8, flags, 0]);
        out.extend_from_slice(&(num_labels as u32).to_le_bytes());
        out.extend_from_slice(&theta.to_le_bytes());
        out.extend_from_slice(&eps.to_le_bytes());
        out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
        for layer in layers {
            out.extend_from_slice(&(layer.in_dim() as u32).to_le_bytes());
            out.extend_from_slice(&(layer.out_dim() as u32).to_le_bytes());
            for v in layer.weights.data().iter().chain(&layer.bias) {
                v.write_le(&mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(format_error("bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format_error(&format!("unsupported version {version}")));
        }
        let head = r.take(4)?;
        let (kind, width, flags) = (head[0], head[1] as usize, head[2]);
        if width != T::BYTES {
            return Err(format_error(&format!(
                "checkpoint stores {width}-byte scalars, expected {}",
                T::BYTES
            )));
        }
        let num_labels = r.u32()? as usize;
        let theta = r.f64()?;
        let eps = r.f64()?;
        let count = r.u32()? as usize;
        let mut layers = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let in_dim = r.u32()? as usize;
            let out_dim = r.u32()? as usize;
            let weights = r.scalars::<T>(
                in_dim
                    .checked_mul(out_dim)
                    .ok_or_else(|| format_error("layer too large"))?,
            )?;
            let bias = r.scalars::<T>(out_dim)?;
            layers.push(Dense::new(Matrix::new(out_dim, in_dim, weights)?, bias)?);
        }
        if r.pos != bytes.len() {
            return Err(format_error("trailing bytes"));
        }
        match kind {
            KIND_FF => {
                let mut m = FfModel::from_layers(layers, T::lit(theta), num_labels)?;
                m.norm_eps = T::lit(eps);
                m.skip_first_goodness = flags & FLAG_SKIP_FIRST != 0;
                m.validate()?;
                Ok(Checkpoint::Ff(m))
            }
            KIND_BP => {
                let head = layers
                    .pop()
                    .ok_or_else(|| format_error("backprop model without head"))?;
                Ok(Checkpoint::Bp(BpModel::from_layers(layers, head)?))
            }
            k => Err(format_error(&format!("unknown model kind {k}"))),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format { msg, .. } => Error::Format {
                path: path.to_path_buf(),
                msg,
            },
            other => other,
        })
    }
}

fn format_error(msg: &str) -> Error {
    Error::Format {
        path: "<checkpoint>".into(),
        msg: msg.into(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| format_error("truncated checkpoint"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn scalars<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>> {
        let len = n
            .checked_mul(T::BYTES)
            .ok_or_else(|| format_error("layer too large"))?;
        Ok(self
            .take(len)?
            .chunks_exact(T::BYTES)
            .map(T::read_le)
            .collect())
    }
}
