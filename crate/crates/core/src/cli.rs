//! Command-line pipeline: data generation, training, evaluation and prediction.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::dataio::{
    load_checkpoint, load_scene, load_split, save_checkpoint, write_atomic, write_dataset, Split,
};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::net::ModelConfig;
use crate::synth::{generate_dataset, WorldConfig};
use crate::trainer::{evaluate, train_with, EpochLog, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "crossing-intent", version, about = "Pedestrian crossing intention from traffic scenes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        num: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Label flip probability, in [0, 0.5). Overrides the config file.
        #[arg(long)]
        noise: Option<f64>,
        /// World settings as JSON; missing fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a model on the train split and write a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// Step size; chosen from the typical node count when omitted.
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Zero the signal-state features.
        #[arg(long)]
        ablate_signals: bool,
        #[arg(long)]
        out: PathBuf,
        /// Training settings as JSON; flags override individual fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Network sizes as JSON.
        #[arg(long)]
        model_config: Option<PathBuf>,
        /// Per-epoch loss CSV; defaults to the checkpoint path with `.loss.csv`.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Score a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// CSV report path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Predict intention and trajectory for one scene file.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scene: PathBuf,
    },
}

/// Parses `args` (including the program name) and runs the command,
/// writing human-readable output to `out`.
pub fn run_from<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::validation("arguments", e.to_string()))?;
    run(cli.command, out)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Parse {
        path: path.to_path_buf(),
        source,
    })
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|source| Error::Io {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

pub fn run(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::GenData {
            out: dir,
            num,
            seed,
            noise,
            config,
        } => {
            let mut world: WorldConfig = match config {
                Some(p) => read_json(&p)?,
                None => WorldConfig::default(),
            };
            if let Some(n) = noise {
                world.noise = n;
            }
            world.validate()?;
            let scenes = generate_dataset(&world, num, seed)?;
            let m = write_dataset(&dir, &scenes, seed, Some(&world))?;
            write_out(
                out,
                &format!(
                    "wrote {} scenes to {} (train {}, val {}, test {})\n",
                    num,
                    dir.display(),
                    m.train.len(),
                    m.val.len(),
                    m.test.len()
                ),
            )
        }
        Command::Train {
            data,
            epochs,
            lr,
            batch_size,
            seed,
            ablate_signals,
            out: ckpt_path,
            config,
            model_config,
            log,
        } => {
            let mut tc: TrainConfig = match config {
                Some(p) => read_json(&p)?,
                None => TrainConfig::default(),
            };
            if let Some(e) = epochs {
                tc.epochs = e;
            }
            if lr.is_some() {
                tc.learning_rate = lr;
            }
            if let Some(b) = batch_size {
                tc.batch_size = b;
            }
            if let Some(s) = seed {
                tc.seed = s;
            }
            tc.validate()?;
            let mut mc: ModelConfig = match model_config {
                Some(p) => read_json(&p)?,
                None => ModelConfig::default(),
            };
            mc.ablate_signals |= ablate_signals;
            mc.validate()?;

            let train = load_split(&data, Split::Train)?;
            let val = load_split(&data, Split::Val)?;
            let log_path = log.unwrap_or_else(|| {
                let mut p = ckpt_path.clone().into_os_string();
                p.push(".loss.csv");
                PathBuf::from(p)
            });
            let mut csv = format!("{}\n", EpochLog::CSV_HEADER);
            let ckpt = train_with(&train, &val, &mc, &tc, |entry| {
                csv.push_str(&entry.csv_row());
                csv.push('\n');
                // Best effort: the final log is written again below.
                let _ = write_atomic(&log_path, csv.as_bytes());
                let _ = writeln!(
                    out,
                    "epoch {:>3}  train {:.6}  val {}",
                    entry.epoch,
                    entry.train_loss,
                    entry.val_loss.map_or("-".into(), |v| format!("{v:.6}"))
                );
            })?;
            write_atomic(&log_path, csv.as_bytes())?;
            save_checkpoint(&ckpt_path, &ckpt)?;
            write_out(
                out,
                &format!(
                    "learning rate {:?}; checkpoint {}; loss log {}\n",
                    ckpt.train_config.learning_rate.unwrap_or_default(),
                    ckpt_path.display(),
                    log_path.display()
                ),
            )
        }
        Command::Eval {
            checkpoint,
            data,
            split,
            report,
        } => {
            let split: Split = split.parse()?;
            let ckpt = load_checkpoint(&checkpoint)?;
            let scenes = load_split(&data, split)?;
            let name = if ckpt.config.ablate_signals { "ablated" } else { "full" };
            let r = evaluate(&ckpt.model()?, &scenes, name)?;
            if let Some(path) = report {
                write_atomic(&path, report_csv(&r).as_bytes())?;
            }
            write_out(out, &r.to_key_value())
        }
        Command::Predict { checkpoint, scene } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let seq = load_scene(&scene)?;
            let p = ckpt.model()?.forward(&seq)?;
            let mut text = format!(
                "probability {:.6}\ndecision {}\ntrajectory\n",
                p.probability,
                if p.crossing { "CROSS" } else { "NOT-CROSS" }
            );
            for (k, [x, y]) in p.trajectory.iter().enumerate() {
                text.push_str(&format!("{} {:.3} {:.3}\n", k + 1, x, y));
            }
            write_out(out, &text)
        }
    }
}

pub fn report_csv(r: &MetricsReport) -> String {
    format!("{}\n{}\n", MetricsReport::CSV_HEADER, r.csv_row())
}
