//! Command-line front end: experiment runs, method comparison, target
//! correlation analysis, and model bundle inspection.

mod compare;
mod config;
mod runner;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{ArgGroup, Args, Parser, Subcommand};

use mtr::dataset::{load_dataset, TargetSpec};
use mtr::eval::{
    correlation_matrix_to_csv, correlation_summary, pairwise_target_correlations,
    upper_triangle_values,
};
use mtr::rlc::read_manifest;

use crate::config::Overrides;

#[derive(Parser)]
#[command(
    name = "mtr",
    version,
    about = "Multi-target regression experiments with random linear target combinations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run(RunArgs),
    /// Compare methods statistically from a result table CSV.
    Compare(CompareArgs),
    /// Compute pairwise target correlations for one dataset.
    Correlations(CorrelationsArgs),
    /// Print the parameters of a saved model bundle.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file (TOML).
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the fold count of every cross-validated dataset.
    #[arg(long)]
    folds: Option<usize>,
    /// Override the ensemble size sweep (comma separated).
    #[arg(long, value_delimiter = ',')]
    r: Option<Vec<usize>>,
    /// Override the combination size sweep (comma separated).
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Override the boosting iteration count.
    #[arg(long)]
    iterations: Option<usize>,
    /// Override the boosting learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Override the output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker threads for the cell pool (0 = one per core).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct CompareArgs {
    /// Result table CSV with a `method,<dataset>,...` header.
    table: PathBuf,
    /// Significance level for the critical difference (0.05 or 0.10).
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Directory for comparison.json and comparison.txt; defaults to the
    /// table's directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("target_spec").required(true).args(["targets", "names"])))]
struct CorrelationsArgs {
    /// Dataset file (.arff or .csv).
    data: PathBuf,
    /// Number of trailing columns that are targets.
    #[arg(long)]
    targets: Option<usize>,
    /// Target attribute names (comma separated).
    #[arg(long, value_delimiter = ',')]
    names: Option<Vec<String>>,
    /// Directory for matrix.csv, pairs.csv, and summary.json.
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    /// Model bundle directory.
    bundle: PathBuf,
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(args),
        Command::Compare(args) => {
            let output_dir = args.output_dir.clone().unwrap_or_else(|| {
                let parent = args.table.parent().unwrap_or(Path::new("."));
                if parent.as_os_str().is_empty() {
                    PathBuf::from(".")
                } else {
                    parent.to_path_buf()
                }
            });
            compare::compare_methods(&args.table, args.alpha, &output_dir)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Correlations(args) => {
            correlations(&args)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Inspect(args) => {
            let manifest = read_manifest(&args.bundle)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let overrides = Overrides {
        seed: args.seed,
        folds: args.folds,
        r: args.r,
        k: args.k,
        iterations: args.iterations,
        learning_rate: args.learning_rate,
        output_dir: args.output_dir,
        jobs: args.jobs,
    };
    let config = config::load_config(&args.config, &overrides)?;
    if runner::run_experiment(&config)? {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("one or more cells failed; details in manifest.json");
        Ok(ExitCode::FAILURE)
    }
}

fn correlations(args: &CorrelationsArgs) -> Result<()> {
    let spec = match (&args.targets, &args.names) {
        (Some(n), None) => TargetSpec::LastK(*n),
        (None, Some(names)) => TargetSpec::Names(names.clone()),
        _ => unreachable!("clap enforces exactly one of --targets/--names"),
    };
    let data = load_dataset(&args.data, &spec, true)?;
    let (matrix, warnings) = pairwise_target_correlations(&data.y)?;
    let summary = correlation_summary(&matrix)?;

    fs::create_dir_all(&args.output_dir)?;
    fs::write(
        args.output_dir.join("matrix.csv"),
        correlation_matrix_to_csv(&matrix),
    )?;

    let mut pairs = String::from("target_a,target_b,correlation,abs_correlation\n");
    let q = data.target_names.len();
    for a in 0..q {
        for b in (a + 1)..q {
            let value = matrix[[a, b]];
            pairs.push_str(&format!(
                "{},{},{},{}\n",
                data.target_names[a],
                data.target_names[b],
                value,
                value.abs()
            ));
        }
    }
    fs::write(args.output_dir.join("pairs.csv"), pairs)?;

    let abs_values: Vec<f64> = upper_triangle_values(&matrix)
        .into_iter()
        .map(f64::abs)
        .collect();
    let summary_json = serde_json::json!({
        "targets": data.target_names,
        "pairs": abs_values.len(),
        "median_abs_correlation": summary.median_abs,
        "stdev_abs_correlation": summary.stdev_abs,
        "warnings": warnings,
    });
    fs::write(
        args.output_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary_json)?,
    )?;

    for warning in &warnings {
        eprintln!("warning: {warning}");
    }
    println!("targets: {}", data.target_names.join(", "));
    println!("median |correlation| = {:.4}", summary.median_abs);
    if let Some(stdev) = summary.stdev_abs {
        println!("stdev  |correlation| = {stdev:.4}");
    }
    println!(
        "wrote matrix.csv, pairs.csv, summary.json to {}",
        args.output_dir.display()
    );
    Ok(())
}
