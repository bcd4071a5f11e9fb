//! FedAvg orchestration: client sampling, local training, weighted
//! parameter averaging and per-round bookkeeping.
//!
//! Every random decision draws from a stream addressed by the experiment
//! seed and a fixed path (see [`streams`]), and aggregation always reduces
//! in ascending client order, so results do not depend on whether clients
//! train sequentially or in parallel.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bpnet::{local_train_bp, predict_bp_batch, BpHyper, BpModel};
use crate::datasets::{ClientPartition, Dataset, LabeledSample};
use crate::error::{Error, Result};
use crate::ffnet::{local_train_ff, predict_batch, FfHyper, FfModel};
use crate::layers::Parameters;
use crate::numerics::{RngStream, Scalar};
use crate::sgd::Trained;

/// Leading path element of every stream the simulator derives.
pub mod streams {
    /// `[INIT]`: global model initialisation.
    pub const INIT: u64 = 1;
    /// `[PARTITION]`: assignment of rows to clients.
    pub const PARTITION: u64 = 2;
    /// `[SAMPLING, round]`: which clients take part in a round.
    pub const SAMPLING: u64 = 3;
    /// `[CLIENT, round, client]`: one client's local training.
    pub const CLIENT: u64 = 4;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    BySampleCount,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainerKind {
    Ff,
    Bp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FederationConfig {
    pub m_clients: usize,
    pub participation_fraction: f64,
    pub global_rounds: usize,
    pub aggregation_weighting: Weighting,
    pub seed: u64,
    /// Train the sampled clients of a round on the rayon pool.
    pub parallel_clients: bool,
    /// When false every `wall_seconds` is reported as 0, which makes the
    /// whole metrics log reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            m_clients: 100,
            participation_fraction: 0.1,
            global_rounds: 1500,
            aggregation_weighting: Weighting::BySampleCount,
            seed: 0,
            parallel_clients: false,
            record_wall_time: true,
        }
    }
}

impl FederationConfig {
    pub fn clients_per_round(&self) -> usize {
        clients_per_round(self.m_clients, self.participation_fraction)
    }
}

/// `⌈fraction · m⌉`, clamped to `1..=m`. A tiny tolerance keeps products
/// such as `0.7 · 10` from rounding up to an extra client.
pub fn clients_per_round(m: usize, fraction: f64) -> usize {
    let k = (fraction * m as f64 - 1e-9).ceil();
    (k.max(1.0) as usize).min(m)
}

/// One row of the metrics log.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub test_accuracy: f64,
    /// `None` for the round-0 evaluation of the initial model.
    pub mean_train_loss: Option<f64>,
    pub wall_seconds: f64,
    pub sampled_clients: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct RoundState<M> {
    pub round_index: usize,
    pub global_model: M,
    pub history: Vec<RoundMetrics>,
}

/// A model family the server can federate.
pub trait FederatedModel<T: Scalar>: Parameters<T> + Send + Sync {
    type Hyper: Sync;

    fn local_train(
        &self,
        data: &[&LabeledSample<T>],
        hyper: &Self::Hyper,
        rng: &mut RngStream,
    ) -> Result<Trained<Self>>;

    fn predict_many(&self, samples: &[&LabeledSample<T>]) -> Result<Vec<usize>>;
}

impl<T: Scalar> FederatedModel<T> for FfModel<T> {
    type Hyper = FfHyper;

    fn local_train(
        &self,
        data: &[&LabeledSample<T>],
        hyper: &FfHyper,
        rng: &mut RngStream,
    ) -> Result<Trained<Self>> {
        local_train_ff(self, data, hyper, rng)
    }

    fn predict_many(&self, samples: &[&LabeledSample<T>]) -> Result<Vec<usize>> {
        predict_batch(self, samples)
    }
}

impl<T: Scalar> FederatedModel<T> for BpModel<T> {
    type Hyper = BpHyper;

    fn local_train(
        &self,
        data: &[&LabeledSample<T>],
        hyper: &BpHyper,
        rng: &mut RngStream,
    ) -> Result<Trained<Self>> {
        local_train_bp(self, data, hyper, rng)
    }

    fn predict_many(&self, samples: &[&LabeledSample<T>]) -> Result<Vec<usize>> {
        predict_bp_batch(self, samples)
    }
}

/// Fraction of `test` the model classifies correctly.
pub fn evaluate<T: Scalar, M: FederatedModel<T>>(model: &M, test: &Dataset<T>) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Evaluation("test set is empty".into()));
    }
    let refs: Vec<_> = test.samples.iter().collect();
    let preds = model.predict_many(&refs)?;
    let correct = preds
        .iter()
        .zip(&test.samples)
        .filter(|(p, s)| **p == s.label)
        .count();
    Ok(correct as f64 / test.len() as f64)
}

/// `⌈fraction · m⌉` distinct client ids drawn without replacement, sorted.
pub fn sample_clients<R: Rng + ?Sized>(m: usize, fraction: f64, rng: &mut R) -> Vec<usize> {
    let k = clients_per_round(m, fraction);
    let mut ids = rand::seq::index::sample(rng, m, k).into_vec();
    ids.sort_unstable();
    ids
}

/// Parameter-wise weighted mean of `models`, reduced in the order given.
///
/// The mean is accumulated in `f64` as a running update
/// `μ += (wᵢ / Σw) · (xᵢ − μ)`, so averaging identical models returns them
/// bit for bit.
pub fn aggregate<T: Scalar, M: Parameters<T>>(
    models: &[M],
    sample_counts: &[usize],
    weighting: Weighting,
) -> Result<M> {
    let first = models
        .first()
        .ok_or_else(|| Error::Argument("nothing to aggregate".into()))?;
    if sample_counts.len() != models.len() {
        return Err(Error::Argument(format!(
            "{} sample counts for {} models",
            sample_counts.len(),
            models.len()
        )));
    }
    if sample_counts.contains(&0) {
        return Err(Error::Argument(
            "client sample counts must be positive".into(),
        ));
    }
    if let Some(i) = models.iter().position(|m| !m.same_architecture(first)) {
        return Err(Error::Shape(format!(
            "model {i} does not match the architecture of model 0"
        )));
    }
    let weights: Vec<f64> = sample_counts
        .iter()
        .map(|&n| match weighting {
            Weighting::BySampleCount => n as f64,
            Weighting::Uniform => 1.0,
        })
        .collect();

    let mut out = first.clone();
    let mut means: Vec<Vec<f64>> = first
        .param_blocks()
        .iter()
        .map(|b| b.iter().map(|v| v.as_f64()).collect())
        .collect();
    let mut total = weights[0];
    for (model, &w) in models.iter().zip(&weights).skip(1) {
        total += w;
        let step = w / total;
        for (mean, block) in means.iter_mut().zip(model.param_blocks()) {
            for (m, &x) in mean.iter_mut().zip(block) {
                *m += step * (x.as_f64() - *m);
            }
        }
    }
    for (dst, mean) in out.param_blocks_mut().into_iter().zip(&means) {
        for (d, &m) in dst.iter_mut().zip(mean) {
            *d = T::lit(m);
        }
    }
    Ok(out)
}

/// Output of the training half of a round, before evaluation.
#[derive(Clone, Debug)]
pub struct RoundUpdate<M> {
    pub model: M,
    pub clients: Vec<usize>,
    pub mean_train_loss: f64,
}

/// Everything a round needs besides the current global model.
pub struct Federation<'a, T: Scalar, M: FederatedModel<T>> {
    pub config: FederationConfig,
    pub hyper: M::Hyper,
    pub train: &'a Dataset<T>,
    pub test: &'a Dataset<T>,
    pub partition: &'a ClientPartition,
}

impl<'a, T: Scalar, M: FederatedModel<T>> Federation<'a, T, M> {
    pub fn new(
        config: FederationConfig,
        hyper: M::Hyper,
        train: &'a Dataset<T>,
        test: &'a Dataset<T>,
        partition: &'a ClientPartition,
    ) -> Result<Self> {
        if partition.num_clients() != config.m_clients {
            return Err(Error::Argument(format!(
                "partition has {} clients, config expects {}",
                partition.num_clients(),
                config.m_clients
            )));
        }
        if !(config.participation_fraction > 0.0 && config.participation_fraction <= 1.0) {
            return Err(Error::Argument(format!(
                "participation fraction {} outside (0, 1]",
                config.participation_fraction
            )));
        }
        partition.validate(train.len())?;
        Ok(Federation {
            config,
            hyper,
            train,
            test,
            partition,
        })
    }

    pub fn client_stream(&self, round: usize, client: usize) -> RngStream {
        RngStream::derive(
            self.config.seed,
            &[streams::CLIENT, round as u64, client as u64],
        )
    }

    /// One client's update: a pure function of the global model, the
    /// client's own rows and its stream.
    pub fn client_update(&self, global: &M, round: usize, client: usize) -> Result<Trained<M>> {
        let data = self.train.select(self.partition.client(client));
        let mut rng = self.client_stream(round, client);
        global.local_train(&data, &self.hyper, &mut rng)
    }

    /// Sampling, local training and aggregation for round `round` (1-based).
    pub fn train_round(&self, global: &M, round: usize) -> Result<RoundUpdate<M>> {
        let mut sampler = RngStream::derive(self.config.seed, &[streams::SAMPLING, round as u64]);
        let clients = sample_clients(
            self.config.m_clients,
            self.config.participation_fraction,
            &mut sampler,
        );
        let updates: Vec<Result<Trained<M>>> = if self.config.parallel_clients {
            clients
                .par_iter()
                .map(|&c| self.client_update(global, round, c))
                .collect()
        } else {
            clients
                .iter()
                .map(|&c| self.client_update(global, round, c))
                .collect()
        };
        let updates = updates.into_iter().collect::<Result<Vec<_>>>()?;
        let counts: Vec<usize> = clients
            .iter()
            .map(|&c| self.partition.client(c).len())
            .collect();
        let mean_train_loss =
            updates.iter().map(|u| u.mean_loss).sum::<f64>() / updates.len() as f64;
        let models: Vec<M> = updates.into_iter().map(|u| u.model).collect();
        let model = aggregate(&models, &counts, self.config.aggregation_weighting)?;
        Ok(RoundUpdate {
            model,
            clients,
            mean_train_loss,
        })
    }

    /// Round 0: the untrained model evaluated on the test set.
    pub fn initial_state(&self, model: M) -> Result<RoundState<M>> {
        let start = Instant::now();
        let acc = evaluate(&model, self.test)?;
        let metrics = RoundMetrics {
            round: 0,
            test_accuracy: acc,
            mean_train_loss: None,
            wall_seconds: self.elapsed(start),
            sampled_clients: Vec::new(),
        };
        Ok(RoundState {
            round_index: 0,
            global_model: model,
            history: vec![metrics],
        })
    }

    fn elapsed(&self, start: Instant) -> f64 {
        if self.config.record_wall_time {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        }
    }

    pub fn run_round(&self, state: RoundState<M>) -> Result<RoundState<M>> {
        let start = Instant::now();
        let round = state.round_index + 1;
        let update = self.train_round(&state.global_model, round)?;
        let acc = evaluate(&update.model, self.test)?;
        let mut history = state.history;
        history.push(RoundMetrics {
            round,
            test_accuracy: acc,
            mean_train_loss: Some(update.mean_train_loss),
            wall_seconds: self.elapsed(start),
            sampled_clients: update.clients,
        });
        Ok(RoundState {
            round_index: round,
            global_model: update.model,
            history,
        })
    }

    /// `global_rounds` rounds starting from `model`.
    pub fn run(&self, model: M) -> Result<RoundState<M>> {
        self.run_with(model, |_| {})
    }

    /// Like [`run`](Self::run), calling `observe` after every round.
    pub fn run_with(
        &self,
        model: M,
        mut observe: impl FnMut(&RoundMetrics),
    ) -> Result<RoundState<M>> {
        let mut state = self.initial_state(model)?;
        observe(state.history.last().expect("round 0"));
        for _ in 0..self.config.global_rounds {
            state = self.run_round(state)?;
            observe(state.history.last().expect("just pushed"));
        }
        Ok(state)
    }
}

/// Free-function form of [`Federation::run_round`].
pub fn run_round<T: Scalar, M: FederatedModel<T>>(
    state: RoundState<M>,
    federation: &Federation<'_, T, M>,
) -> Result<RoundState<M>> {
    federation.run_round(state)
}
