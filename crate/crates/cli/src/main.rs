use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fedfwd::checkpoint::Checkpoint;
use fedfwd::experiment::{
    evaluate, format_millions, load_datasets, param_count, parse_config, preset, run_with_data,
    time_rounds, write_metrics, ConfigLayer, DatasetKind, ExperimentConfig, Preset, RoundMetrics,
    RunOptions, TimingRow,
};
use fedfwd::federation::{TrainerKind, Weighting};
use fedfwd::ffnet::LossKind;

#[derive(Parser)]
#[command(
    name = "fedfwd",
    version,
    about = "Federated forward-forward training simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its per-round metrics CSV.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        exec: Exec,
        /// Write the final global model to this checkpoint file.
        #[arg(long)]
        save_model: Option<PathBuf>,
    },
    /// Median seconds per global round for both trainers at each batch size.
    Time {
        #[arg(long, value_delimiter = ',', default_values_t = [1, 4, 16, 64, 128, 256, 512, 1024, 2048])]
        batches: Vec<usize>,
        /// Timed rounds per measurement, after one warm-up round.
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a named experiment bundle: table1, table2, table3 or symba.
    Preset {
        name: String,
        /// Directory for the metrics CSVs.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Print the resolved configs as JSON instead of running them.
        #[arg(long)]
        dry_run: bool,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        exec: Exec,
    },
    /// Print the parameter count of the configured model.
    Params {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Test accuracy of a saved checkpoint.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, default_value = "mnist")]
        dataset: DatasetKind,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Exec {
    /// Train the sampled clients of a round in parallel.
    #[arg(long)]
    parallel: bool,
    /// Write 0 in the wall_seconds column so reruns give identical files.
    #[arg(long)]
    no_wall_time: bool,
    /// Suppress per-round progress on stderr.
    #[arg(long, short)]
    quiet: bool,
}

impl Exec {
    fn options(&self) -> RunOptions {
        RunOptions {
            parallel_clients: self.parallel,
            record_wall_time: !self.no_wall_time,
        }
    }
}

/// Command-line overrides; each wins over the config file.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    dataset: Option<DatasetKind>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    trainer: Option<TrainerKind>,
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    iid: Option<bool>,
    #[arg(long)]
    m_clients: Option<usize>,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    local_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    lr: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    symba_alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_csv: Option<PathBuf>,
    #[arg(long)]
    weighting: Option<Weighting>,
    #[arg(long)]
    shards_per_client: Option<usize>,
    #[arg(long)]
    skip_first_layer_goodness: Option<bool>,
}

impl Overrides {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            dataset: self.dataset,
            data_dir: self.data_dir.clone(),
            trainer: self.trainer,
            loss: self.loss,
            depth: self.depth,
            width: self.width,
            iid: self.iid,
            m_clients: self.m_clients,
            fraction: self.fraction,
            rounds: self.rounds,
            local_epochs: self.local_epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            theta: self.theta,
            symba_alpha: self.symba_alpha,
            seed: self.seed,
            output_csv: self.output_csv.clone(),
            weighting: self.weighting,
            shards_per_client: self.shards_per_client,
            skip_first_layer_goodness: self.skip_first_layer_goodness,
        }
    }
}

fn main() {
    if let Err(e) = real_main() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn real_main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            overrides,
            exec,
            save_model,
        } => {
            let cfg = parse_config(config.as_deref(), &overrides.layer())?;
            run_one(&cfg, &cfg.output_csv, &exec, save_model.as_deref())
        }
        Command::Time {
            batches,
            repeats,
            config,
            overrides,
        } => {
            let cfg = parse_config(config.as_deref(), &overrides.layer())?;
            println!("{TIMING_HEADER}");
            print_timing(&cfg, &batches, repeats)
        }
        Command::Preset {
            name,
            out_dir,
            dry_run,
            overrides,
            exec,
        } => run_preset(&name, &out_dir, dry_run, &overrides.layer(), &exec),
        Command::Params { config, overrides } => {
            let cfg = parse_config(config.as_deref(), &overrides.layer())?;
            let n = param_count(&cfg);
            println!("{n} ({})", format_millions(n));
            Ok(())
        }
        Command::Eval {
            checkpoint,
            dataset,
            data_dir,
        } => {
            let dir = data_dir.unwrap_or_else(|| dataset.default_dir());
            let (_, test) = load_datasets::<f64>(dataset, &dir)?;
            let acc = match Checkpoint::<f64>::load(&checkpoint)? {
                Checkpoint::Ff(m) => evaluate(&m, &test)?,
                Checkpoint::Bp(m) => evaluate(&m, &test)?,
            };
            println!("{acc:.6}");
            Ok(())
        }
    }
}

fn run_one(
    cfg: &ExperimentConfig,
    csv: &Path,
    exec: &Exec,
    save_model: Option<&Path>,
) -> Result<()> {
    let (train, test) = load_datasets::<f64>(cfg.dataset, &cfg.data_dir).with_context(|| {
        format!(
            "loading {} from {}",
            cfg.dataset.name(),
            cfg.data_dir.display()
        )
    })?;
    let quiet = exec.quiet;
    let outcome = run_with_data(cfg, exec.options(), &train, &test, |m: &RoundMetrics| {
        if !quiet {
            let loss = m
                .mean_train_loss
                .map(|l| format!("{l:.4}"))
                .unwrap_or_else(|| "-".into());
            eprintln!(
                "round {:>5}  acc {:.4}  loss {loss}  {:.2}s",
                m.round, m.test_accuracy, m.wall_seconds
            );
        }
    })?;
    write_metrics(&outcome.log, csv)?;
    if let Some(path) = save_model {
        outcome.model.save(path)?;
    }
    if let Some(acc) = outcome.log.final_accuracy() {
        println!("{}: final test accuracy {acc:.4}", csv.display());
    }
    Ok(())
}

const TIMING_HEADER: &str = "dataset,batch_size,ff_seconds,bp_seconds,ratio";

fn print_timing(cfg: &ExperimentConfig, batches: &[usize], repeats: usize) -> Result<()> {
    let (train, test) = load_datasets::<f64>(cfg.dataset, &cfg.data_dir).with_context(|| {
        format!(
            "loading {} from {}",
            cfg.dataset.name(),
            cfg.data_dir.display()
        )
    })?;
    for &b in batches {
        let [row]: [TimingRow; 1] = time_rounds(cfg, &[b], repeats, &train, &test)?
            .try_into()
            .expect("one batch size in, one row out");
        println!(
            "{},{},{:.6},{:.6},{:.3}",
            cfg.dataset.name(),
            row.batch_size,
            row.ff_seconds,
            row.bp_seconds,
            row.ratio()
        );
    }
    Ok(())
}

fn run_preset(
    name: &str,
    out_dir: &Path,
    dry_run: bool,
    overrides: &ConfigLayer,
    exec: &Exec,
) -> Result<()> {
    let preset = preset(name)?;
    let configs = match &preset {
        Preset::Runs(c) | Preset::Timing { configs: c, .. } => c
            .iter()
            .map(|c| c.with(overrides))
            .collect::<fedfwd::Result<Vec<_>>>()?,
    };
    if dry_run {
        for c in &configs {
            println!("{}", serde_json::to_string(c)?);
        }
        return Ok(());
    }
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    match preset {
        Preset::Runs(_) => {
            for cfg in &configs {
                run_one(cfg, &out_dir.join(&cfg.output_csv), exec, None)?;
            }
        }
        Preset::Timing { batches, .. } => {
            if configs.is_empty() {
                bail!("preset {name} has no configs");
            }
            println!("{TIMING_HEADER}");
            for cfg in &configs {
                print_timing(cfg, &batches, 3)?;
            }
        }
    }
    Ok(())
}
