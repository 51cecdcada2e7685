//! `unitstyle`: corpus generation, training, conversion and evaluation.

mod config;
mod convert;
mod error;
mod evaluate;
mod gen;
mod gradcheck;
mod output;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{Key, RunConfig};
use error::{CliError, EXIT_INPUT, EXIT_OK};

#[derive(Parser)]
#[command(name = "unitstyle", version, about = "Speaking-style conversion over discrete speech units")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "INT")]
    threads: Option<usize>,
    /// Sets any config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = parse_set)]
    set: Vec<(String, String)>,
}

fn parse_set(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-speaker corpus with ground truth.
    GenCorpus {
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        train_utterances: Option<usize>,
        #[arg(long)]
        test_scripts: Option<usize>,
    },
    /// Train the duration predictor.
    TrainDur(TrainArgs),
    /// Train the pitch predictor.
    TrainPitch(TrainArgs),
    /// Convert every utterance of a manifest to other speakers.
    Convert {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        dur_ckpt: Option<PathBuf>,
        #[arg(long)]
        pitch_ckpt: Option<PathBuf>,
        /// rhythm, pitch, both, or copy (unconverted baseline).
        #[arg(long)]
        mode: Option<String>,
        /// Target speaker id, or `all` for every other speaker.
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        source: Option<String>,
    },
    /// Score converted outputs against a reference manifest.
    Evaluate {
        #[arg(long)]
        converted: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
        /// frame or segment.
        #[arg(long)]
        aggregation: Option<String>,
        /// Extra comma-separated silence labels.
        #[arg(long)]
        silence_extra: Option<String>,
    },
    /// Finite-difference gradient check of both models.
    GradCheck {
        /// both, dur or pitch.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// f32 or f64.
    #[arg(long)]
    dtype: Option<String>,
}

#[derive(Default)]
struct Flags(Vec<(String, String)>);

impl Flags {
    fn add<V: ToString>(&mut self, key: &str, v: Option<V>) {
        if let Some(v) = v {
            self.0.push((key.to_string(), v.to_string()));
        }
    }

    fn add_path(&mut self, key: &str, v: Option<PathBuf>) {
        self.add(key, v.map(|p| p.display().to_string()));
    }
}

fn train_flags(f: &mut Flags, a: TrainArgs) {
    f.add_path("manifest", a.manifest);
    f.add("epochs", a.epochs);
    f.add("batch_size", a.batch_size);
    f.add("lr", a.lr);
    f.add("dtype", a.dtype);
}

type Runner = fn(&mut RunConfig) -> Result<(), CliError>;

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let common = cli.common;
    // `--set` first so that dedicated flags win over it.
    let mut f = Flags(common.set);
    f.add("seed", common.seed);
    f.add_path("out", common.out);
    f.add("threads", common.threads);
    let (name, keys, run): (&'static str, Vec<Key>, Runner) = match cli.command {
        Command::GenCorpus {
            preset,
            train_utterances,
            test_scripts,
        } => {
            f.add("preset", preset);
            f.add("train_utterances", train_utterances);
            f.add("test_scripts", test_scripts);
            ("gen-corpus", gen::keys(), gen::run)
        }
        Command::TrainDur(a) => {
            train_flags(&mut f, a);
            ("train-dur", train::keys(train::Kind::Dur), |c| train::run(train::Kind::Dur, c))
        }
        Command::TrainPitch(a) => {
            train_flags(&mut f, a);
            ("train-pitch", train::keys(train::Kind::Pitch), |c| train::run(train::Kind::Pitch, c))
        }
        Command::Convert {
            manifest,
            dur_ckpt,
            pitch_ckpt,
            mode,
            target,
            source,
        } => {
            f.add_path("manifest", manifest);
            f.add_path("dur_ckpt", dur_ckpt);
            f.add_path("pitch_ckpt", pitch_ckpt);
            f.add("mode", mode);
            f.add("target", target);
            f.add("source", source);
            ("convert", convert::keys(), convert::run)
        }
        Command::Evaluate {
            converted,
            reference,
            aggregation,
            silence_extra,
        } => {
            f.add_path("converted", converted);
            f.add_path("reference", reference);
            f.add("aggregation", aggregation);
            f.add("silence_extra", silence_extra);
            ("evaluate", evaluate::keys(), evaluate::run)
        }
        Command::GradCheck {
            kind,
            tolerance,
            corrupt_gradient,
        } => {
            f.add("kind", kind);
            f.add("tolerance", tolerance);
            f.add("corrupt_gradient", corrupt_gradient.then_some(true));
            ("grad-check", gradcheck::keys(), gradcheck::run)
        }
    };
    let mut cfg = RunConfig::resolve(name, &keys, common.config.as_deref(), &f.0)?;
    let threads: usize = cfg.value("threads")?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::internal(format!("thread pool: {e}")))?;
    run(&mut cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help and version go to stdout and are not errors.
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            println!("{}", json!({ "event": "error", "message": e.to_string(), "exit_code": e.exit_code() }));
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
