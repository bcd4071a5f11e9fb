//! Named bundles of configs for the published experiment grid.

use std::path::PathBuf;

use super::{DatasetKind, ExperimentConfig};
use crate::datasets::{CIFAR_PIXELS, MNIST_PIXELS, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::federation::TrainerKind;
use crate::ffnet::LossKind;

pub const PRESET_NAMES: [&str; 4] = ["table1", "table2", "table3", "symba"];

/// Mini-batch sizes of the timing study.
pub const TIMING_BATCHES: [usize; 9] = [1, 4, 16, 64, 128, 256, 512, 1024, 2048];

#[derive(Clone, Debug, PartialEq)]
pub enum Preset {
    /// Independent training runs, one CSV each.
    Runs(Vec<ExperimentConfig>),
    /// Timing sweeps: one base config per dataset and the batch sizes.
    Timing {
        configs: Vec<ExperimentConfig>,
        batches: Vec<usize>,
    },
}

pub fn preset(name: &str) -> Result<Preset> {
    match name {
        "table1" => Ok(Preset::Runs(accuracy_grid(DatasetKind::Mnist, "table1"))),
        "table3" => Ok(Preset::Runs(accuracy_grid(DatasetKind::Cifar10, "table3"))),
        "table2" => Ok(Preset::Timing {
            configs: [DatasetKind::Cifar10, DatasetKind::Mnist]
                .into_iter()
                .map(|d| ExperimentConfig {
                    dataset: d,
                    data_dir: d.default_dir(),
                    ..ExperimentConfig::default()
                })
                .collect(),
            batches: TIMING_BATCHES.to_vec(),
        }),
        "symba" => Ok(Preset::Runs(symba_grid())),
        other => Err(Error::Argument(format!(
            "unknown preset {other:?}, expected one of {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}

fn accuracy_grid(dataset: DatasetKind, tag: &str) -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for depth in [2, 3] {
        for trainer in [TrainerKind::Bp, TrainerKind::Ff] {
            for iid in [true, false] {
                out.push(ExperimentConfig {
                    dataset,
                    data_dir: dataset.default_dir(),
                    trainer,
                    depth,
                    iid,
                    output_csv: csv_name(tag, trainer_name(trainer), depth, iid),
                    ..ExperimentConfig::default()
                });
            }
        }
    }
    out
}

fn symba_grid() -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for dataset in [DatasetKind::Mnist, DatasetKind::Cifar10] {
        for depth in [2, 3, 4] {
            for loss in [LossKind::Ff, LossKind::Symba] {
                let loss_name = match loss {
                    LossKind::Ff => "ff",
                    LossKind::Symba => "symba",
                };
                out.push(ExperimentConfig {
                    dataset,
                    data_dir: dataset.default_dir(),
                    loss,
                    depth,
                    iid: false,
                    output_csv: csv_name(
                        &format!("symba_{}", dataset.name()),
                        loss_name,
                        depth,
                        false,
                    ),
                    ..ExperimentConfig::default()
                });
            }
        }
    }
    out
}

fn trainer_name(t: TrainerKind) -> &'static str {
    match t {
        TrainerKind::Ff => "ff",
        TrainerKind::Bp => "bp",
    }
}

fn csv_name(tag: &str, method: &str, depth: usize, iid: bool) -> PathBuf {
    let split = if iid { "iid" } else { "noniid" };
    PathBuf::from(format!("{tag}_{method}_d{depth}_{split}.csv"))
}

pub fn input_dim(dataset: DatasetKind) -> usize {
    match dataset {
        DatasetKind::Mnist => MNIST_PIXELS,
        DatasetKind::Cifar10 => CIFAR_PIXELS,
    }
}

/// Trainable parameters of the configured model, computed from shapes alone.
pub fn param_count(config: &ExperimentConfig) -> usize {
    let mut n = 0;
    let mut fan_in = input_dim(config.dataset);
    for w in config.widths() {
        n += fan_in * w + w;
        fan_in = w;
    }
    if config.trainer == TrainerKind::Bp {
        n += fan_in * NUM_CLASSES + NUM_CLASSES;
    }
    n
}

/// Millions with two decimals, truncated rather than rounded
/// (2,037,500 reads "2.03M").
pub fn format_millions(n: usize) -> String {
    let hundredths = n / 10_000;
    format!("{}.{:02}M", hundredths / 100, hundredths % 100)
}
