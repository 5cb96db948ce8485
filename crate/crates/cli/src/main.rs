//! `nfkit` command-line interface.
//!
//! Exit codes: 0 ok, 1 usage or config error, 2 resource guard, 3 property
//! failure, 4 numeric failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nfkit::selftest::Level;
use nfkit::train::LossKind;
use nfkit::GroupTag;

/// An error that carries its own exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.msg)
    }
}

impl std::error::Error for Failure {}

#[derive(Parser)]
#[command(
    name = "nfkit",
    version,
    about = "Permutation-equivariant neural functionals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate parameter-sharing orbits of a weight space and write them as JSON.
    DeriveSharing {
        /// Spec JSON: a spec object or a list of neuron counts.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = "np")]
        group: GroupTag,
        #[arg(long)]
        out: PathBuf,
        /// Override the weight-space dimension guard.
        #[arg(long)]
        max_dim: Option<usize>,
    },
    /// Run the built-in property suites.
    Selftest {
        #[arg(long, default_value = "quick")]
        level: Level,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Flip the sign of one adjoint term (test fixture).
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Generate a synthetic weight-space dataset.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// inr_classify, predict_gen, or edit.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        fit_steps: Option<usize>,
        #[arg(long)]
        fit_lr: Option<f64>,
        /// SIREN hidden widths, comma separated.
        #[arg(long, value_delimiter = ',')]
        hidden: Option<Vec<usize>>,
        /// dilate or contrast.
        #[arg(long)]
        transform: Option<String>,
    },
    /// Train a model from a run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        eval_every: Option<usize>,
    },
    /// Evaluate a checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// bce, mse, or cross_entropy; defaults to the model's head.
        #[arg(long)]
        loss: Option<LossKind>,
    },
    /// Apply a trained editor to a SIREN and render before/after images.
    Edit {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        size: Option<usize>,
    },
    /// Render a SIREN (or an image container) to a PGM file.
    Render {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        size: usize,
        #[arg(long, default_value_t = 30.0)]
        omega0: f64,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::DeriveSharing {
            spec,
            group,
            out,
            max_dim,
        } => commands::derive_sharing(&spec, group, &out, max_dim),
        Command::Selftest {
            level,
            seed,
            json,
            inject_fault,
        } => commands::selftest(level, seed, inject_fault, json.as_deref()),
        Command::GenData {
            config,
            out,
            kind,
            n_train,
            n_test,
            seed,
            resolution,
            fit_steps,
            fit_lr,
            hidden,
            transform,
        } => commands::gen_data(
            config.as_deref(),
            commands::GenOverrides {
                kind,
                n_train,
                n_test,
                seed,
                resolution,
                fit_steps,
                fit_lr,
                hidden,
                transform,
            },
            &out,
        ),
        Command::Train {
            config,
            data,
            out,
            steps,
            lr,
            batch_size,
            seed,
            eval_every,
        } => commands::train(
            &config,
            commands::TrainOverrides {
                data,
                out,
                steps,
                lr,
                batch_size,
                seed,
                eval_every,
            },
        ),
        Command::Eval {
            checkpoint,
            data,
            split,
            loss,
        } => commands::eval(&checkpoint, &data, &split, loss),
        Command::Edit {
            checkpoint,
            input,
            out,
            size,
        } => commands::edit(&checkpoint, &input, &out, size),
        Command::Render {
            input,
            out,
            size,
            omega0,
        } => commands::render_cmd(&input, &out, size, omega0),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(f) = err.downcast_ref::<Failure>() {
        return f.code;
    }
    match err.downcast_ref::<nfkit::Error>() {
        Some(nfkit::Error::ResourceLimit { .. }) => 2,
        Some(nfkit::Error::Numeric(_) | nfkit::Error::UndefinedMetric(_)) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
