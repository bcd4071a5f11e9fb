use std::time::Instant;

use super::run::{
    bp_hyper, build_partition, federation_config, ff_hyper, init_bp, init_ff, RunOptions,
};
use super::ExperimentConfig;
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::federation::{FederatedModel, Federation};

/// Median seconds per global round for both trainers at one batch size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimingRow {
    pub batch_size: usize,
    pub ff_seconds: f64,
    pub bp_seconds: f64,
}

impl TimingRow {
    /// How many times slower the forward-forward round is.
    pub fn ratio(&self) -> f64 {
        self.ff_seconds / self.bp_seconds
    }
}

/// Times the training part of a global round (sampling, local training and
/// aggregation, not test evaluation) for each batch size. Each trainer runs
/// one untimed warm-up round followed by `repeats` timed rounds, clients
/// train sequentially, and the median is reported. Both trainers share the
/// data, partition, seed and hidden shape.
pub fn time_rounds(
    config: &ExperimentConfig,
    batch_sizes: &[usize],
    repeats: usize,
    train: &Dataset<f64>,
    test: &Dataset<f64>,
) -> Result<Vec<TimingRow>> {
    if repeats == 0 {
        return Err(Error::Argument("need at least one timed round".into()));
    }
    let partition = build_partition(config, train)?;
    batch_sizes
        .iter()
        .map(|&b| {
            let mut cfg = config.clone();
            cfg.batch_size = b;
            cfg.validate()?;
            let fed_config = federation_config(&cfg, RunOptions::default());
            let ff = Federation::new(fed_config.clone(), ff_hyper(&cfg), train, test, &partition)?;
            let ff_seconds =
                median_round(&ff, init_ff(&cfg, train.dim(), train.num_labels)?, repeats)?;
            let bp = Federation::new(fed_config, bp_hyper(&cfg), train, test, &partition)?;
            let bp_seconds =
                median_round(&bp, init_bp(&cfg, train.dim(), train.num_labels)?, repeats)?;
            Ok(TimingRow {
                batch_size: b,
                ff_seconds,
                bp_seconds,
            })
        })
        .collect()
}

fn median_round<M: FederatedModel<f64>>(
    fed: &Federation<'_, f64, M>,
    model: M,
    repeats: usize,
) -> Result<f64> {
    let mut model = fed.train_round(&model, 1)?.model;
    let mut times = Vec::with_capacity(repeats);
    for round in 2..2 + repeats {
        let start = Instant::now();
        model = fed.train_round(&model, round)?.model;
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}
