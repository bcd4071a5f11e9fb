use std::path::Path;

use super::{DatasetKind, ExperimentConfig, MetricsLog};
use crate::bpnet::{BpHyper, BpModel};
use crate::checkpoint::Checkpoint;
use crate::datasets::{
    load_cifar10, load_mnist_split, partition_iid, partition_noniid, ClientPartition, Dataset,
};
use crate::error::{Error, Result};
use crate::federation::{
    streams, FederatedModel, Federation, FederationConfig, RoundMetrics, TrainerKind,
};
use crate::ffnet::{FfHyper, FfModel};
use crate::numerics::{RngStream, Scalar};

/// Execution settings that do not change what is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub parallel_clients: bool,
    /// Off makes the metrics CSV reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            parallel_clients: false,
            record_wall_time: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub log: MetricsLog,
    pub model: Checkpoint<f64>,
}

/// Train and test splits of the configured dataset.
pub fn load_datasets<T: Scalar>(
    dataset: DatasetKind,
    dir: &Path,
) -> Result<(Dataset<T>, Dataset<T>)> {
    match dataset {
        DatasetKind::Mnist => Ok((load_mnist_split(dir, true)?, load_mnist_split(dir, false)?)),
        DatasetKind::Cifar10 => {
            let train: Vec<_> = (1..=5)
                .map(|i| dir.join(format!("data_batch_{i}.bin")))
                .collect();
            Ok((
                load_cifar10(&train)?,
                load_cifar10(&[dir.join("test_batch.bin")])?,
            ))
        }
    }
}

pub fn federation_config(config: &ExperimentConfig, options: RunOptions) -> FederationConfig {
    FederationConfig {
        m_clients: config.m_clients,
        participation_fraction: config.fraction,
        global_rounds: config.rounds,
        aggregation_weighting: config.weighting,
        seed: config.seed,
        parallel_clients: options.parallel_clients,
        record_wall_time: options.record_wall_time,
    }
}

pub fn build_partition<T>(
    config: &ExperimentConfig,
    train: &Dataset<T>,
) -> Result<ClientPartition> {
    let mut rng = RngStream::derive(config.seed, &[streams::PARTITION]);
    if config.iid {
        partition_iid(train.len(), config.m_clients, &mut rng)
    } else {
        partition_noniid(
            &train.labels(),
            config.m_clients,
            config.shards_per_client,
            &mut rng,
        )
    }
}

pub fn ff_hyper(config: &ExperimentConfig) -> FfHyper {
    FfHyper {
        lr: config.lr,
        batch_size: config.batch_size,
        local_epochs: config.local_epochs,
        loss_kind: config.loss,
        symba_alpha: config.symba_alpha,
    }
}

pub fn bp_hyper(config: &ExperimentConfig) -> BpHyper {
    BpHyper {
        lr: config.lr,
        batch_size: config.batch_size,
        local_epochs: config.local_epochs,
    }
}

pub fn init_ff<T: Scalar>(
    config: &ExperimentConfig,
    input_dim: usize,
    num_labels: usize,
) -> Result<FfModel<T>> {
    let mut rng = RngStream::derive(config.seed, &[streams::INIT]);
    let mut model = FfModel::init(
        input_dim,
        &config.widths(),
        T::lit(config.theta),
        num_labels,
        &mut rng,
    )?;
    model.skip_first_goodness = config.skip_first_layer_goodness;
    Ok(model)
}

pub fn init_bp<T: Scalar>(
    config: &ExperimentConfig,
    input_dim: usize,
    num_labels: usize,
) -> Result<BpModel<T>> {
    let mut rng = RngStream::derive(config.seed, &[streams::INIT]);
    BpModel::init(input_dim, &config.widths(), num_labels, &mut rng)
}

/// Loads the configured dataset and runs the experiment.
pub fn run_experiment(config: &ExperimentConfig, options: RunOptions) -> Result<ExperimentOutcome> {
    let (train, test) = load_datasets(config.dataset, &config.data_dir)?;
    run_with_data(config, options, &train, &test, |_| {})
}

/// Runs the experiment on already loaded data, calling `observe` after the
/// initial evaluation and after every round.
pub fn run_with_data(
    config: &ExperimentConfig,
    options: RunOptions,
    train: &Dataset<f64>,
    test: &Dataset<f64>,
    observe: impl FnMut(&RoundMetrics),
) -> Result<ExperimentOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    if test.dim() != train.dim() {
        return Err(Error::Shape(format!(
            "train rows have {} pixels, test rows {}",
            train.dim(),
            test.dim()
        )));
    }
    let partition = build_partition(config, train)?;
    let fed_config = federation_config(config, options);
    let labels = train.num_labels;
    match config.trainer {
        TrainerKind::Ff => {
            let model = init_ff(config, train.dim(), labels)?;
            let fed = Federation::new(fed_config, ff_hyper(config), train, test, &partition)?;
            drive(&fed, model, observe, Checkpoint::Ff)
        }
        TrainerKind::Bp => {
            let model = init_bp(config, train.dim(), labels)?;
            let fed = Federation::new(fed_config, bp_hyper(config), train, test, &partition)?;
            drive(&fed, model, observe, Checkpoint::Bp)
        }
    }
}

fn drive<M: FederatedModel<f64>>(
    fed: &Federation<'_, f64, M>,
    model: M,
    observe: impl FnMut(&RoundMetrics),
    wrap: fn(M) -> Checkpoint<f64>,
) -> Result<ExperimentOutcome> {
    let state = fed.run_with(model, observe)?;
    Ok(ExperimentOutcome {
        log: MetricsLog::new(state.history),
        model: wrap(state.global_model),
    })
}
