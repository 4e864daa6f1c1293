//! `dsmt`: generate synthetic data, train, track, evaluate, benchmark
//! matchers and plot trajectories.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dsmt_core::Error;

#[derive(Debug, Parser)]
#[command(name = "dsmt", version, about = "Multi-target tracking with learned costs and exact flow inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Structured hinge loss through the solver.
    End2end,
    /// Independent classifiers plus a line search for the start/end costs.
    Piecewise,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the sequences of a synthetic benchmark profile.
    Gen {
        /// Benchmark profile: smoke, standard or hard.
        #[arg(long)]
        profile: String,
        /// Output data directory (one seq_XXXX directory per sequence).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Generate without noise, misses or clutter.
        #[arg(long)]
        noiseless: bool,
    },
    /// Train a cost model on labeled sequences.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Run configuration (TOML). Defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::End2end)]
        mode: Mode,
        /// Output checkpoint.
        #[arg(long)]
        out: PathBuf,
        /// Training log; defaults to the checkpoint path with `.log` appended.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Overrides `train.seed` of the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Track every sequence of a data directory with a trained model.
    Track {
        /// A data directory or a single sequence directory.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file for a single sequence, or directory of
        /// `seq_XXXX.txt` files for several.
        #[arg(long)]
        out: PathBuf,
    },
    /// CLEAR MOT evaluation of tracking results against labels.
    Eval {
        /// Result file, or directory of `seq_XXXX.txt` result files.
        #[arg(long)]
        hyp: PathBuf,
        /// Label file, or data directory holding `seq_XXXX/labels.txt`.
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Text report; a JSON copy is written next to it with `.json` appended.
        #[arg(long)]
        out: PathBuf,
    },
    /// Pair-matching error of the affinity baselines and the learned matcher.
    MatchBench {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bird's-eye SVG of tracked trajectories.
    Plot {
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Diverged { .. } | Error::NonFinite(_) | Error::NegativeCycle(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Gen { profile, out, seed, noiseless } => commands::gen(&profile, &out, seed, noiseless),
        Command::Train { data, config, mode, out, log, seed } => {
            commands::train(&data, config.as_deref(), mode, &out, log.as_deref(), seed)
        }
        Command::Track { data, model, config, out } => commands::track(&data, &model, config.as_deref(), &out),
        Command::Eval { hyp, gt, config, out } => commands::eval(&hyp, &gt, config.as_deref(), &out),
        Command::MatchBench { data, model, config, out } => commands::match_bench(&data, &model, config.as_deref(), &out),
        Command::Plot { tracks, out } => commands::plot(&tracks, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
