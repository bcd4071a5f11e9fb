use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::{TrainerKind, Weighting};
use crate::ffnet::LossKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mnist,
    Cifar10,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar10 => "cifar10",
        }
    }

    /// Where the raw files are looked for when `data_dir` is not given.
    pub fn default_dir(self) -> PathBuf {
        Path::new("data").join(self.name())
    }
}

macro_rules! from_str_names {
    ($ty:ty { $($name:literal => $variant:expr),* $(,)? }) => {
        impl std::str::FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($name => Ok($variant),)*
                    _ => Err(format!("expected one of: {}", [$($name),*].join(", "))),
                }
            }
        }
    };
}

from_str_names!(DatasetKind { "mnist" => DatasetKind::Mnist, "cifar10" => DatasetKind::Cifar10 });
from_str_names!(TrainerKind { "ff" => TrainerKind::Ff, "bp" => TrainerKind::Bp });
from_str_names!(LossKind { "ff" => LossKind::Ff, "symba" => LossKind::Symba });
from_str_names!(Weighting {
    "by_sample_count" => Weighting::BySampleCount,
    "uniform" => Weighting::Uniform,
});

/// A fully resolved, validated experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub data_dir: PathBuf,
    pub trainer: TrainerKind,
    pub loss: LossKind,
    pub depth: usize,
    pub width: usize,
    pub iid: bool,
    pub m_clients: usize,
    pub fraction: f64,
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub theta: f64,
    pub symba_alpha: f64,
    pub seed: u64,
    pub output_csv: PathBuf,
    pub weighting: Weighting,
    pub shards_per_client: usize,
    pub skip_first_layer_goodness: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetKind::Mnist,
            data_dir: DatasetKind::Mnist.default_dir(),
            trainer: TrainerKind::Ff,
            loss: LossKind::Ff,
            depth: 3,
            width: 500,
            iid: true,
            m_clients: 100,
            fraction: 0.1,
            rounds: 1500,
            local_epochs: 3,
            batch_size: 10,
            lr: 0.003,
            theta: 2.0,
            symba_alpha: 1.0,
            seed: 0,
            output_csv: PathBuf::from("metrics.csv"),
            weighting: Weighting::BySampleCount,
            shards_per_client: 2,
            skip_first_layer_goodness: false,
        }
    }
}

/// A partial config: the contents of a JSON file or a set of command-line
/// flags. Layers are applied over the defaults in order, later ones winning.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub dataset: Option<DatasetKind>,
    pub data_dir: Option<PathBuf>,
    pub trainer: Option<TrainerKind>,
    pub loss: Option<LossKind>,
    pub depth: Option<usize>,
    pub width: Option<usize>,
    pub iid: Option<bool>,
    pub m_clients: Option<usize>,
    pub fraction: Option<f64>,
    pub rounds: Option<usize>,
    pub local_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub theta: Option<f64>,
    pub symba_alpha: Option<f64>,
    pub seed: Option<u64>,
    pub output_csv: Option<PathBuf>,
    pub weighting: Option<Weighting>,
    pub shards_per_client: Option<usize>,
    pub skip_first_layer_goodness: Option<bool>,
}

impl ConfigLayer {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

impl ExperimentConfig {
    /// Defaults, then each layer in turn, then validation.
    pub fn resolve<'a>(layers: impl IntoIterator<Item = &'a ConfigLayer>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for layer in layers {
            cfg.apply(layer);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `overrides` on top of this config and re-validates.
    pub fn with(&self, overrides: &ConfigLayer) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    /// `data_dir` follows a change of dataset unless it was set to
    /// something other than the old dataset's default.
    fn apply(&mut self, layer: &ConfigLayer) {
        let follows = self.data_dir == self.dataset.default_dir();
        macro_rules! overlay {
            ($($field:ident),*) => {
                $(if let Some(v) = &layer.$field { self.$field = v.clone(); })*
            };
        }
        overlay!(
            dataset,
            data_dir,
            trainer,
            loss,
            depth,
            width,
            iid,
            m_clients,
            fraction,
            rounds,
            local_epochs,
            batch_size,
            lr,
            theta,
            symba_alpha,
            seed,
            output_csv,
            weighting,
            shards_per_client,
            skip_first_layer_goodness
        );
        if follows && layer.data_dir.is_none() {
            self.data_dir = self.dataset.default_dir();
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_int("depth", self.depth, 1, 64)?;
        check_int("width", self.width, 1, 1_000_000)?;
        check_int("m_clients", self.m_clients, 1, 1_000_000)?;
        check_int("rounds", self.rounds, 0, 10_000_000)?;
        check_int("local_epochs", self.local_epochs, 1, 10_000)?;
        check_int("batch_size", self.batch_size, 1, 1_000_000)?;
        check_int("shards_per_client", self.shards_per_client, 1, 10_000)?;
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::Validation(format!(
                "fraction = {} outside (0, 1]",
                self.fraction
            )));
        }
        check_real("lr", self.lr, 0.0, 100.0)?;
        check_real("theta", self.theta, 0.0, 1e6)?;
        check_real("symba_alpha", self.symba_alpha, f64::MIN_POSITIVE, 1e3)?;
        if self.trainer == TrainerKind::Bp && self.loss == LossKind::Symba {
            return Err(Error::Validation(
                "loss = symba only applies to trainer = ff".into(),
            ));
        }
        Ok(())
    }

    pub fn widths(&self) -> Vec<usize> {
        vec![self.width; self.depth]
    }
}

fn check_int(name: &str, v: usize, lo: usize, hi: usize) -> Result<()> {
    if (lo..=hi).contains(&v) {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "{name} = {v} outside [{lo}, {hi}]"
        )))
    }
}

fn check_real(name: &str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if v >= lo && v <= hi {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "{name} = {v} outside [{lo}, {hi}]"
        )))
    }
}

/// File values over defaults, then flags over both.
pub fn parse_config(file: Option<&Path>, flags: &ConfigLayer) -> Result<ExperimentConfig> {
    let file_layer = match file {
        Some(p) => ConfigLayer::from_file(p)?,
        None => ConfigLayer::default(),
    };
    ExperimentConfig::resolve([&file_layer, flags])
}
