//! Federated learning simulator comparing Forward-Forward local training
//! against a backpropagation FedAvg baseline.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the CLI and the experiment
//! runner use.

pub mod bpnet;
pub mod checkpoint;
pub mod datasets;
mod error;
pub mod experiment;
pub mod federation;
pub mod ffnet;
pub mod layers;
pub mod numerics;
pub mod sgd;

pub use error::{Error, Result};
pub use numerics::{Matrix, RngStream, Scalar};

pub type Matrix64 = numerics::Matrix<f64>;
pub type Sample64 = datasets::LabeledSample<f64>;
pub type Dataset64 = datasets::Dataset<f64>;
pub type FfModel64 = ffnet::FfModel<f64>;
pub type BpModel64 = bpnet::BpModel<f64>;

pub type Matrix32 = numerics::Matrix<f32>;
pub type FfModel32 = ffnet::FfModel<f32>;
pub type BpModel32 = bpnet::BpModel<f32>;
