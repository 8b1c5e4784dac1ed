//! `majority-sim`: run single simulations, plan sweeps and figure recipes,
//! and analyse their CSV output.
//!
//! Setting `MAJORITY_SIM_OUT` redirects every command's output directory.
//! An explicit `--out` still wins over it.

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use majority_core::experiments::analysis::{cluster_report, tradeoff_report, Fit, FitKind};
use majority_core::experiments::{
    execute, figure_recipe, load_plan, parse_strategy_token, CsvSink, ExecutionSummary, ExperimentPlan, Horizon,
    OUTPUT_DIR_ENV,
};
use majority_core::{Error, PolyaMoveRule, StrategyConfig};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "majority-sim", version, about = "Simulator for the N-agent, N-choice majority game")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its CSV files.
    Run(RunArgs),
    /// Execute every run of a plan file.
    Sweep {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Execute the built-in plan for one figure.
    Figure {
        /// fig2 ... fig9
        #[arg(long)]
        name: String,
        /// Divide every N by this (1 is full scale).
        #[arg(long, default_value_t = 2)]
        scale: u32,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Cluster-size density of the last snapshot of each run.
    Clusters {
        /// One or more `*.clusters.csv` files.
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        bin: u32,
        /// exp, gamma or none
        #[arg(long, default_value = "none")]
        fit: String,
    },
    /// First slice each run reaches the threshold, with its occupancy.
    Tradeoff {
        /// Directory holding `*.rows.csv` files.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        threshold: f64,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Strategy kind, e.g. no-learning, ex-ante-symmetric, polya.
    #[arg(long)]
    strategy: String,
    #[arg(long)]
    agents: usize,
    #[arg(long)]
    horizon: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long)]
    f1: Option<f64>,
    #[arg(long)]
    f2: Option<f64>,
    #[arg(long)]
    f: Option<f64>,
    #[arg(long)]
    m: Option<i64>,
    /// compare or free
    #[arg(long)]
    polya_move_rule: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    stride: u64,
    /// Keep going after convergence.
    #[arg(long)]
    run_to_horizon: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::IncompleteSweep { .. } => 4,
        Error::Io { .. } | Error::Format { .. } => 3,
        _ => 2,
    }
}

/// Applies the output-directory precedence: flag, then environment, then plan.
fn output_dir(flag: Option<PathBuf>, fallback: PathBuf) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from)).unwrap_or(fallback)
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Run(args) => {
            let plan = single_run_plan(args)?;
            report(&plan, execute(&plan, 1)?);
            Ok(())
        }
        Command::Sweep { plan, workers } => {
            let mut plan = load_plan(&plan)?;
            plan.outputs = output_dir(None, plan.outputs);
            report(&plan, execute(&plan, workers)?);
            Ok(())
        }
        Command::Figure { name, scale, out, workers } => {
            let mut plan = figure_recipe(&name, scale)?;
            plan.outputs = output_dir(out, plan.outputs);
            report(&plan, execute(&plan, workers)?);
            Ok(())
        }
        Command::Clusters { inputs, bin, fit } => clusters(&inputs, bin, fit.parse()?),
        Command::Tradeoff { input, threshold } => tradeoff(&input, threshold),
    }
}

fn single_run_plan(args: RunArgs) -> Result<ExperimentPlan, Error> {
    let (kind, token_rule) = parse_strategy_token(&args.strategy)?;
    let rule = match args.polya_move_rule {
        Some(r) => r.parse()?,
        None => token_rule,
    };
    let strategy = StrategyConfig {
        kind,
        k: args.k,
        f1: args.f1,
        f2: args.f2,
        f: args.f,
        m: args.m,
        polya_move_rule: if kind == majority_core::StrategyKind::Polya { rule } else { PolyaMoveRule::Compare },
    };
    let plan = ExperimentPlan {
        name: "run".into(),
        horizon: Horizon::Fixed(args.horizon),
        strategy_grid: vec![strategy],
        n_grid: vec![args.agents],
        seeds: vec![args.seed],
        outputs: output_dir(args.out, PathBuf::from("results")),
        record_stride: args.stride,
        run_to_horizon: args.run_to_horizon,
        snapshots: Vec::new(),
        tradeoff_threshold: None,
    };
    plan.validate()?;
    Ok(plan)
}

fn report(plan: &ExperimentPlan, summary: ExecutionSummary) {
    if summary.skipped {
        println!("{}: outputs already complete, nothing to do", plan.name);
    } else {
        println!("{}: {} runs completed", plan.name, summary.runs_completed);
    }
    for f in &summary.files {
        println!("  {}  {}  {} bytes", f.sha256, plan.outputs.join(&f.path).display(), f.bytes);
    }
    println!("  manifest: {}", summary.manifest_path.display());
}

#[derive(Serialize)]
struct DensityLine<'a> {
    group: &'a str,
    runs: usize,
    bin_lower: u32,
    bin_upper: u32,
    density: f64,
    fit: &'a str,
    param1: Option<f64>,
    param2: Option<f64>,
}

fn stdout_io(e: io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn clusters(inputs: &[PathBuf], bin: u32, fit: FitKind) -> Result<(), Error> {
    let groups = cluster_report(inputs, bin, fit)?;
    let mut sink = CsvSink::new(io::stdout().lock());
    for g in &groups {
        let (name, p1, p2) = match g.fit {
            Some(Fit::Exponential { rate }) => ("exp", Some(rate), None),
            Some(Fit::Gamma { shape, scale }) => ("gamma", Some(shape), Some(scale)),
            None => ("", None, None),
        };
        for (&lower, &density) in &g.histogram.density {
            sink.write(&DensityLine {
                group: &g.label,
                runs: g.runs,
                bin_lower: lower,
                bin_upper: lower + bin - 1,
                density,
                fit: name,
                param1: p1,
                param2: p2,
            })
            .map_err(stdout_io)?;
        }
    }
    sink.flush().map_err(stdout_io)
}

fn tradeoff(input: &std::path::Path, threshold: f64) -> Result<(), Error> {
    let rep = tradeoff_report(input, threshold)?;
    let mut sink = CsvSink::new(io::stdout().lock());
    for e in &rep.entries {
        sink.write(e).map_err(stdout_io)?;
    }
    sink.flush().map_err(stdout_io)?;
    let mut err = io::stderr().lock();
    let _ = writeln!(err, "runs below threshold: {}", rep.unreached);
    match rep.spearman {
        Some(rho) => {
            let _ = writeln!(err, "spearman(t_star, occupied_fraction) = {rho}");
        }
        None => {
            let _ = writeln!(err, "spearman undefined for these points");
        }
    }
    Ok(())
}
