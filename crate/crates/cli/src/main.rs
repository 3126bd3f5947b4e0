use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ews_cli::commands::{
    cmd_bench, cmd_dump_tables, cmd_explain, cmd_gen_sample, cmd_prepare, cmd_train, ExplainInput,
};
use ews_cli::config::{load, Overrides};
use ews_cli::{CliError, CliResult};
use ews_core::synth::SynthConfig;

/// Early-warning benchmark: prepare exports, compare models against
/// MEWS/NEWS2, train deployable bundles.
#[derive(Debug, Parser)]
#[command(name = "ews-bench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding measurements.csv and encounters.csv.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Comma-separated scorers, e.g. gbdt_goss,mews,news2.
    #[arg(long)]
    models: Option<String>,
    /// Comma-separated subset of cv10, logo, window.
    #[arg(long)]
    schemes: Option<String>,
    /// False-negative cost relative to a false positive.
    #[arg(long)]
    cost_ratio: Option<f64>,
    /// History used by cv10 and logo (1..=5).
    #[arg(long)]
    timestamps: Option<usize>,
    /// Reuse a matrix cache written by `prepare` instead of the CSV exports.
    #[arg(long)]
    matrix: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the imputed feature matrix and preprocessing report.
    Prepare {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate every configured model and protocol under each scheme.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Print the MEWS and NEWS2 band tables as CSV.
    DumpTables,
    /// Explain one window with a trained bundle.
    Explain {
        #[arg(long)]
        model: PathBuf,
        /// Window JSON document.
        #[arg(
            long,
            conflicts_with = "encounter",
            required_unless_present = "encounter"
        )]
        window: Option<PathBuf>,
        /// Encounter id in the exports under --data-dir.
        #[arg(long)]
        encounter: Option<String>,
        /// Scoring time for --encounter; defaults to its outcome time.
        #[arg(long, requires = "encounter")]
        at: Option<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Fit one model on the whole dataset and write a deployable bundle.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long, default_value = "gbdt_goss")]
        algorithm: String,
        /// Bundle output path.
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Write a seeded synthetic cohort in the export format.
    GenSample {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5000)]
        encounters: usize,
        #[arg(long, default_value_t = 2020)]
        seed: u64,
        /// Hospital (1..=6) with noisier, weaker signals.
        #[arg(long)]
        shifted_hospital: Option<usize>,
    },
}

fn overrides(run: &RunArgs, eval: Option<&EvalArgs>) -> Overrides {
    Overrides {
        data_dir: run.data_dir.clone(),
        matrix_dir: eval.and_then(|e| e.matrix.clone()),
        out: run.out.clone(),
        seed: run.seed,
        models: eval.and_then(|e| e.models.clone()),
        schemes: eval.and_then(|e| e.schemes.clone()),
        cost_ratio: eval.and_then(|e| e.cost_ratio),
        timestamps: eval.and_then(|e| e.timestamps),
    }
}

fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Prepare { run } => {
            cmd_prepare(&load(run.config.as_deref(), &overrides(&run, None))?)
        }
        Command::Bench { run, eval } => {
            cmd_bench(&load(run.config.as_deref(), &overrides(&run, Some(&eval)))?)
        }
        Command::DumpTables => Ok(cmd_dump_tables()),
        Command::Explain {
            model,
            window,
            encounter,
            at,
            run,
        } => {
            let input = match (window, encounter) {
                (Some(w), _) => ExplainInput::Window(w),
                (None, Some(id)) => ExplainInput::Encounter {
                    cfg: Box::new(load(run.config.as_deref(), &overrides(&run, None))?),
                    id,
                    at,
                },
                (None, None) => unreachable!("clap requires one input"),
            };
            cmd_explain(&model, &input)
        }
        Command::Train {
            run,
            eval,
            algorithm,
            bundle,
        } => cmd_train(
            &load(run.config.as_deref(), &overrides(&run, Some(&eval)))?,
            &algorithm,
            &bundle,
        ),
        Command::GenSample {
            out,
            encounters,
            seed,
            shifted_hospital,
        } => {
            let cfg = SynthConfig {
                encounters,
                seed,
                shifted_hospital,
                ..SynthConfig::default()
            };
            cmd_gen_sample(&cfg, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(CliError::Config(String::new()).exit_code() as u8);
        }
    };
    let result = std::panic::catch_unwind(|| run(cli))
        .unwrap_or_else(|_| Err(CliError::Internal("unexpected panic".into())));
    match result {
        Ok(text) => {
            let mut out = std::io::stdout().lock();
            let _ = out.write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
