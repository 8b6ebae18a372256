use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use perfcast::data::Split;
use perfcast::series::Interval;
use perfcast_cli::{commands, CliError};

/// Technical-indicator forecasting with a FAVOR+ Performer encoder.
#[derive(Parser, Debug)]
#[command(name = "perfcast", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run seed; overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load and window the data, write manifest.json.
    Prepare {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model, write model.ckpt, losses.csv and train_report.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint on one split, write metrics and predictions.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Config naming the data to score; model settings come from the checkpoint.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[command(flatten)]
        common: Common,
    },
    /// Time exact vs FAVOR+ attention over sequence lengths, write bench.csv.
    Bench {
        /// Comma-separated sequence lengths.
        #[arg(long, value_delimiter = ',', default_values_t = [256, 512, 1024, 2048])]
        lengths: Vec<usize>,
        #[arg(long, default_value_t = 16)]
        d_k: usize,
        #[arg(long, default_value_t = 64)]
        r: usize,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a synthetic sine + AR(1) candle series as CSV.
    Synth {
        #[arg(long, default_value_t = 5_000)]
        len: usize,
        #[arg(long, value_enum, default_value = "hourly")]
        interval: IntervalArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Destination CSV file.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Validation,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum IntervalArg {
    Hourly,
    Daily,
}

impl From<IntervalArg> for Interval {
    fn from(i: IntervalArg) -> Interval {
        match i {
            IntervalArg::Hourly => Interval::Hourly,
            IntervalArg::Daily => Interval::Daily,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Prepare { config, common } => commands::prepare(&commands::resolve(&config, &common.out, common.seed)?),
        Command::Train { config, common } => commands::train(&commands::resolve(&config, &common.out, common.seed)?),
        Command::Evaluate {
            checkpoint,
            config,
            split,
            common,
        } => commands::evaluate(&checkpoint, &commands::resolve(&config, &common.out, common.seed)?, split.into()),
        Command::Bench {
            lengths,
            d_k,
            r,
            reps,
            out,
            seed,
        } => commands::bench(lengths, d_k, r, reps, seed, &out),
        Command::Synth { len, interval, seed, out } => commands::synth(len, interval.into(), seed, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("perfcast: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
