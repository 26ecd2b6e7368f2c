use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use adsr_transcribe::config::PipelineConfig;
use adsr_transcribe::pipeline;
use adsr_transcribe::toy::ToyDataConfig;
use adsr_transcribe::{Error, Result};

/// Offline polyphonic piano transcription.
#[derive(Debug, Parser)]
#[command(name = "adsr", version)]
struct Cli {
    /// JSON pipeline configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for simulation, dataset rendering and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Segment filter threshold.
    #[arg(long, global = true)]
    theta: Option<f64>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// WAV audio to a filtered spectrogram container.
    Features { audio: PathBuf, out: PathBuf },
    /// Render the synthetic eight-key training set into a directory.
    ToyData {
        out: PathBuf,
        #[arg(long)]
        pieces: Option<usize>,
        #[arg(long)]
        seconds: Option<f64>,
    },
    /// Train the reference network on a directory of WAV and note-list pairs.
    TrainToy { dataset: PathBuf, out: PathBuf },
    /// Network activations for a WAV file or spectrogram container.
    Infer { weights: PathBuf, input: PathBuf, out: PathBuf },
    /// Viterbi-decode activations into candidate note segments (JSON).
    Decode {
        activations: PathBuf,
        out: PathBuf,
        /// HMM specification (JSON); defaults to the configured one.
        #[arg(long)]
        hmm: Option<PathBuf>,
    },
    /// Threshold decoded segments into a note list (.mid or .tsv).
    Filter { segments: PathBuf, activations: PathBuf, out: PathBuf },
    /// Synthetic activations for a note list.
    Simulate {
        notes: PathBuf,
        out: PathBuf,
        /// Number of frames; defaults to the last offset plus the bump width.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Score estimated notes against reference notes (files or directories).
    Eval {
        reference: PathBuf,
        estimate: PathBuf,
        /// Write the JSON report here; a table is always printed.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Audio to notes with a trained network.
    Transcribe { weights: PathBuf, audio: PathBuf, out: PathBuf },
    /// Print the default configuration as JSON.
    DefaultConfig,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.simulation.seed = seed;
        cfg.training.seed = seed;
    }
    if let Some(theta) = cli.theta {
        cfg.filter.theta = theta;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Features { audio, out } => {
            pipeline::cmd_features(&cfg, audio, out)?;
        }
        Command::ToyData { out, pieces, seconds } => {
            let defaults = ToyDataConfig::default();
            let data = ToyDataConfig {
                pieces: pieces.unwrap_or(defaults.pieces),
                piece_seconds: seconds.unwrap_or(defaults.piece_seconds),
                seed: cli.seed.unwrap_or(defaults.seed),
                ..defaults
            };
            pipeline::cmd_toy_data(&data, out)?;
        }
        Command::TrainToy { dataset, out } => {
            let report = pipeline::cmd_train_toy(&cfg, dataset, out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Infer { weights, input, out } => {
            pipeline::cmd_infer(&cfg, weights, input, out)?;
        }
        Command::Decode { activations, out, hmm } => {
            pipeline::cmd_decode(&cfg, activations, hmm.as_deref(), out)?;
        }
        Command::Filter { segments, activations, out } => {
            pipeline::cmd_filter(&cfg, segments, activations, cli.theta, out)?;
        }
        Command::Simulate { notes, out, frames } => {
            pipeline::cmd_simulate(&cfg, notes, *frames, out)?;
        }
        Command::Eval { reference, estimate, out } => {
            let report = pipeline::cmd_eval(&cfg, reference, estimate, out.as_deref())?;
            print!("{}", pipeline::render_table(&report));
        }
        Command::Transcribe { weights, audio, out } => {
            pipeline::cmd_transcribe(&cfg, weights, audio, out)?;
        }
        Command::DefaultConfig => print!("{}", PipelineConfig::default().to_json()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
