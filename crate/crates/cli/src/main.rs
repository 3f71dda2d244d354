mod commands;
mod config;
mod error;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use recast_core::{ModelKind, ResponseKind};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "recast", version, about = "Calibrate source models to small target datasets with a Cauchy random effect")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Use the shortened chain, predictive and replicate settings.
    #[arg(long, global = true)]
    desk_scale: bool,
    /// Name of the response column in CSV inputs.
    #[arg(long, global = true)]
    label_col: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a source model on a CSV and save it.
    FitSource {
        #[arg(long)]
        data: PathBuf,
        /// linear, logistic or mlp.
        #[arg(long)]
        kind: ModelKind,
        /// continuous or binary; required for mlp.
        #[arg(long)]
        response: Option<ResponseKind>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample the calibration posterior on a labelled target CSV.
    Calibrate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Thinned posterior sample (CSV).
        #[arg(long)]
        out: PathBuf,
        /// Also write the retained chain.
        #[arg(long)]
        chain_out: Option<PathBuf>,
    },
    /// Point predictions and prediction sets for every row of a CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        posterior: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Miscoverage levels, comma separated or repeated.
        #[arg(long, value_delimiter = ',', default_value = "0.05")]
        alpha: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the simulation grid.
    Replicate {
        /// Results CSV; defaults to output.results from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue an interrupted run.
        #[arg(long)]
        resume: bool,
        /// Restrict the grid to one response type.
        #[arg(long)]
        response: Option<ResponseKind>,
    },
    /// Summaries of a posterior sample, a chain or a results file.
    Diagnostics {
        #[arg(long, conflicts_with_all = ["chain", "results"])]
        posterior: Option<PathBuf>,
        #[arg(long, conflicts_with = "results")]
        chain: Option<PathBuf>,
        #[arg(long)]
        results: Option<PathBuf>,
    },
}

fn resolve(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(common.config.as_deref(), common.desk_scale)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.threads {
        cfg.output.threads = t;
    }
    if let Some(l) = &common.label_col {
        cfg.data.label_col = l.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli.common)?;
    match cli.command {
        Command::FitSource {
            data,
            kind,
            response,
            out,
        } => commands::fit_source(&cfg, &data, kind, response, &out),
        Command::Calibrate {
            model,
            target,
            out,
            chain_out,
        } => commands::calibrate(&cfg, &model, &target, &out, chain_out.as_deref()),
        Command::Predict {
            model,
            posterior,
            test,
            alpha,
            out,
        } => commands::predict(&cfg, &model, &posterior, &test, &alpha, &out),
        Command::Replicate { out, resume, response } => {
            let out = out.unwrap_or_else(|| cfg.output.results.clone());
            commands::replicate(&cfg, &out, resume, response)
        }
        Command::Diagnostics {
            posterior,
            chain,
            results,
        } => match (posterior, chain, results) {
            (Some(p), None, None) => commands::diagnose_posterior(&p),
            (None, Some(c), None) => commands::diagnose_chain(&c),
            (None, None, Some(r)) => commands::diagnose_results(&r),
            _ => Err(CliError::Config("give exactly one of --posterior, --chain, --results".into())),
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("recast: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
