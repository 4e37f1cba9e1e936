use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ctpred_cli::commands::{self, ModelKind, TrainArgs};
use ctpred_cli::config::RunConfig;
use ctpred_core::channelsim::Mode;
use ctpred_core::training::GradientPath;

#[derive(Parser)]
#[command(name = "ctpred", version, about = "Continuous-time mmWave channel prediction experiments")]
struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set n_subcarriers=32`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Seed for every random draw; overrides `seed` from the file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 gives bit-exact reruns.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Train,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum GradArg {
    Tape,
    Adjoint,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, value_enum, default_value = "train")]
        mode: ModeArg,
    },
    /// Train a TN-ODE model or a discrete baseline.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "tnode")]
        model: ModelKind,
        #[arg(long, value_enum)]
        grad: Option<GradArg>,
        /// Per-epoch loss trace; defaults to `<out>.loss.csv`.
        #[arg(long)]
        loss_csv: Option<PathBuf>,
        /// Continue from the checkpoint at `--out` if it exists.
        #[arg(long)]
        resume: bool,
    },
    /// Per-slot NMSE and rate report for a test dataset.
    Evaluate {
        /// TN-ODE checkpoint.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Comma list of `outdated`, `gru=PATH`, `fc=PATH`; perfect CSI is
        /// always included.
        #[arg(long, default_value = "outdated")]
        baselines: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of TN-ODE gradients on one sample.
    Gradcheck {
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
        #[arg(long, default_value_t = 64)]
        probes: usize,
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
    },
    /// Counted multiplications against the complexity formulas.
    Flops,
}

fn run(cli: Cli) -> ctpred_core::Result<()> {
    let mut sets = cli.sets;
    if let Some(seed) = cli.seed {
        sets.push(format!("seed={seed}"));
    }
    if let Command::Train { grad: Some(g), .. } = &cli.command {
        let path = match g {
            GradArg::Tape => GradientPath::Tape,
            GradArg::Adjoint => GradientPath::Adjoint,
        };
        sets.push(format!("gradient_path={}", format!("{path:?}").to_lowercase()));
    }
    let rc = RunConfig::load(cli.config.as_deref(), &sets)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ctpred_core::Error::config("threads", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ctpred_core::Error::config("threads", e.to_string()))?;
    }
    match cli.command {
        Command::Generate { out, samples, mode } => {
            let mode = match mode {
                ModeArg::Train => Mode::Train,
                ModeArg::Test => Mode::Test,
            };
            commands::generate(&rc, &out, samples, mode)
        }
        Command::Train {
            data,
            out,
            model,
            loss_csv,
            resume,
            ..
        } => commands::train(
            &rc,
            &TrainArgs {
                data: &data,
                out: &out,
                model,
                loss_csv: loss_csv.as_deref(),
                resume,
            },
        ),
        Command::Evaluate {
            model,
            data,
            baselines,
            out,
        } => commands::evaluate(&rc, model.as_deref(), &data, &baselines, &out),
        Command::Gradcheck { tolerance, probes, step } => commands::gradcheck(&rc, tolerance, probes, step),
        Command::Flops => commands::flops(&rc),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
