//! `bue` — construct, verify, and optimize unbiased estimators for
//! fixed-design linear models, exactly, over finite discrete distributions.
//!
//! Exit codes: 0 success/confirmed, 1 checked-and-false, 2 precondition
//! violated, 3 parse failure, 4 semantic mismatch between inputs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use bue_core::{Error, Result};

use config::{ExperimentConfig, JsonSource, MatrixSource};

#[derive(Parser)]
#[command(
    name = "bue",
    version,
    about = "Construct, verify, and optimize unbiased estimators for fixed-design linear models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file; individual flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Design matrix: inline JSON rows or a path to a JSON file.
    #[arg(long)]
    design: Option<String>,
    /// Error covariance: inline JSON rows or a path (identity when absent).
    #[arg(long)]
    sigma: Option<String>,
    /// Residual tolerance for verdicts.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Seed recorded for randomized suites; commands themselves are
    /// deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file for the main artifact; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format for tabular artifacts: csv or json.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Construct an unbiased estimator with a nontrivial quadratic kernel.
    ConstructUb {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Check an estimator against the unbiased-class constraints.
    CheckKoopmann {
        /// Estimator: inline JSON or a path to a JSON file.
        #[arg(long)]
        estimator: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Minimize directional variance over the unbiased class.
    MinVariance {
        /// Distribution: inline JSON or a path to a JSON file.
        #[arg(long)]
        distribution: Option<String>,
        /// Direction in coefficient space, as an inline JSON list.
        #[arg(long)]
        direction: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compare the unbiased-for-zero space against the constraint span.
    VerifyRepresentation {
        /// Witness distribution: inline JSON or a path.
        #[arg(long)]
        witness: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Emit witness distributions with prescribed exact moments.
    Witness {
        /// Which construction: mean, mean-cov, or composite.
        #[arg(long)]
        kind: Option<String>,
        /// Observation the composite witness must dominate (inline JSON list).
        #[arg(long)]
        y: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate named estimators against named distributions.
    Table {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn resolved_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &common.design {
        cfg.design = Some(MatrixSource::from_flag(d)?);
    }
    if let Some(s) = &common.sigma {
        cfg.sigma = Some(MatrixSource::from_flag(s)?);
    }
    if let Some(seed) = common.seed {
        cfg.seed = Some(seed);
    }
    if let Some(format) = &common.format {
        cfg.format = Some(format.clone());
    }
    if let Some(out) = &common.out {
        cfg.output_path = Some(out.display().to_string());
    }
    Ok(cfg)
}

fn parse_vector_flag(value: &str) -> Result<DVector<f64>> {
    let list: Vec<f64> = serde_json::from_str(value)
        .map_err(|e| Error::Parse(format!("expected a JSON list of numbers: {e}")))?;
    bue_core::jsonio::vector_from_list(&list)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::ConstructUb { common } => {
            let cfg = resolved_config(&common)?;
            let design = cfg.design_matrix()?;
            let out = cfg.output_path.as_ref().map(PathBuf::from);
            commands::construct_ub(&design, out.as_deref())
        }
        Command::CheckKoopmann { estimator, common } => {
            let cfg = resolved_config(&common)?;
            let design = cfg.design_matrix()?;
            let sigma = cfg.sigma_matrix(design.n())?;
            let source = match estimator {
                Some(flag) => JsonSource::from_flag(&flag)?,
                None => cfg.estimator.clone().ok_or_else(|| {
                    Error::Precondition("an estimator is required (--estimator or config)".into())
                })?,
            };
            commands::check_koopmann(&design, &sigma, &source.estimator()?, common.tol)
        }
        Command::MinVariance {
            distribution,
            direction,
            common,
        } => {
            let cfg = resolved_config(&common)?;
            let design = cfg.design_matrix()?;
            let sigma = cfg.sigma_matrix(design.n())?;
            let f_source = match distribution {
                Some(flag) => JsonSource::from_flag(&flag)?,
                None => cfg.distribution.clone().ok_or_else(|| {
                    Error::Precondition(
                        "a distribution is required (--distribution or config)".into(),
                    )
                })?,
            };
            let direction = match direction {
                Some(flag) => Some(parse_vector_flag(&flag)?),
                None => match &cfg.direction {
                    Some(list) => Some(bue_core::jsonio::vector_from_list(list)?),
                    None => None,
                },
            };
            let out = cfg.output_path.as_ref().map(PathBuf::from);
            commands::min_variance(
                &design,
                &sigma,
                &f_source.distribution()?,
                direction,
                out.as_deref(),
            )
        }
        Command::VerifyRepresentation { witness, common } => {
            let mut cfg = resolved_config(&common)?;
            if let Some(flag) = witness {
                cfg.witness = Some(JsonSource::from_flag(&flag)?);
            }
            commands::verify_representation(&cfg)
        }
        Command::Witness { kind, y, common } => {
            let mut cfg = resolved_config(&common)?;
            if let Some(y_flag) = y {
                cfg.y = Some(
                    serde_json::from_str(&y_flag)
                        .map_err(|e| Error::Parse(format!("expected a JSON list for y: {e}")))?,
                );
            }
            let kind = kind
                .or_else(|| cfg.kind.clone())
                .unwrap_or_else(|| "mean".to_string());
            let out = cfg.output_path.as_ref().map(PathBuf::from);
            commands::witness(&cfg, &kind, out.as_deref())
        }
        Command::Table { common } => {
            let cfg = resolved_config(&common)?;
            let out = cfg.output_path.as_ref().map(PathBuf::from);
            commands::table(&cfg, out.as_deref())
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Parse(_) => 3,
        Error::MomentMismatch(_) | Error::InfeasibleWitness(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    // Restore default SIGPIPE behavior so piping into e.g. `head` terminates
    // the process quietly instead of panicking on a failed stdout write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
