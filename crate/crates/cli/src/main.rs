use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use irs_core::experiments::{emit_plotdata, run_experiment, ExperimentId, ExperimentSpec};

#[derive(Parser)]
#[command(
    name = "irsbf",
    version,
    about = "Double-IRS beamforming experiment runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec and write CSV, summary and plot series.
    Run {
        spec: PathBuf,
        /// Master seed (overrides the spec file).
        #[arg(long)]
        seed: Option<u64>,
        /// Monte-Carlo draws per sweep point (overrides the spec file).
        #[arg(long)]
        draws: Option<usize>,
        /// Output directory (overrides the spec file; default `out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List the known experiment ids.
    ListExperiments,
    /// Parse and check a spec without running it.
    Validate { spec: PathBuf },
}

fn run(
    spec_path: PathBuf,
    seed: Option<u64>,
    draws: Option<usize>,
    out: Option<PathBuf>,
    threads: Option<usize>,
) -> Result<bool> {
    let mut spec = ExperimentSpec::from_file(&spec_path)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    if let Some(d) = draws {
        spec.draws = d;
    }
    let out_dir = out
        .or_else(|| spec.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    if let Some(t) = threads {
        anyhow::ensure!(t >= 1, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring worker threads")?;
    }
    let start = Instant::now();
    let art = run_experiment(&spec, &out_dir)?;
    let series = emit_plotdata(&art.csv, &out_dir.join("plot"))?;
    let rec = &art.summary_record;
    println!(
        "{}: {} points x {} draws in {:.1} s ({} failed draws)",
        rec.experiment,
        rec.points.len(),
        rec.draws,
        start.elapsed().as_secs_f64(),
        rec.failed_draws
    );
    println!("csv: {}", art.csv.display());
    println!("summary: {}", art.summary.display());
    println!("plot series: {}", series.len());
    for a in &rec.assertions {
        println!(
            "[{}] {}: {}",
            if a.passed { "PASS" } else { "FAIL" },
            a.name,
            a.detail
        );
    }
    Ok(rec.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run {
            spec,
            seed,
            draws,
            out,
            threads,
        } => run(spec, seed, draws, out, threads),
        Command::ListExperiments => {
            for id in ExperimentId::ALL {
                println!("{:<24} {}", id.as_str(), id.description());
            }
            Ok(true)
        }
        Command::Validate { spec } => ExperimentSpec::from_file(&spec)
            .and_then(|s| s.plan())
            .map(|plan| {
                println!(
                    "{}: ok ({} sweep points over {}, {} methods, {} draws)",
                    plan.id.as_str(),
                    plan.points.len(),
                    plan.axis.name(),
                    plan.methods.len(),
                    plan.draws
                );
                true
            })
            .map_err(Into::into),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        // embedded assertions failed; artifacts are still written
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
