//! Runs every point of a plan and persists the results.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::output::{
    bytes_digest, create_csv, file_digest, ClusterRow, CsvSink, ResultRow, StrategyColumns,
};
use super::plan::{ExperimentPlan, RunSpec, SCHEMA_VERSION};
use crate::engine::{drive, RunOptions, Simulation, SliceRecord};
use crate::error::{Error, Result};
use crate::metrics::{cluster_sizes, convergence_scaling, tradeoff_point, TradeoffPoint};

/// Manifest entry for one output file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFile {
    /// File name relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Seed ledger entry: everything needed to re-run one trajectory alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub run_id: usize,
    pub strategy: String,
    pub n: usize,
    pub seed: u64,
    /// Agent `i` draws from stream `first_stream + i`.
    pub first_stream: u64,
    pub stream_count: u64,
    pub horizon: u64,
    pub final_slice: u64,
    pub convergence_slice: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub experiment: String,
    pub plan_digest: String,
    pub complete: bool,
    pub runs_total: usize,
    pub runs_completed: usize,
    pub runs: Vec<LedgerEntry>,
    pub files: Vec<ManifestFile>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExecutionSummary {
    pub runs_completed: usize,
    /// True when an intact, complete manifest made the call a no-op.
    pub skipped: bool,
    pub manifest_path: PathBuf,
    pub files: Vec<ManifestFile>,
}

/// Per-run summary line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub run_id: usize,
    pub experiment: String,
    pub strategy: String,
    pub n: usize,
    pub k: Option<usize>,
    pub f1: Option<f64>,
    pub f2: Option<f64>,
    pub f: Option<f64>,
    pub m: Option<i64>,
    pub seed: u64,
    pub horizon: u64,
    pub final_slice: u64,
    pub convergence_slice: Option<u64>,
    pub final_occupied_fraction: f64,
    pub final_avg_max_prob: f64,
}

/// `T(N)/N` table row for one strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub experiment: String,
    pub strategy: String,
    pub n: usize,
    pub runs: usize,
    pub converged_runs: usize,
    pub mean_t: f64,
    pub std_t: f64,
    pub mean_ratio: f64,
    pub std_ratio: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub experiment: String,
    pub strategy: String,
    pub n: usize,
    pub m: Option<i64>,
    pub seed: u64,
    pub threshold: f64,
    pub t_star: Option<u64>,
    pub occupied_fraction: Option<f64>,
}

/// Result of simulating one grid point.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub spec: RunSpec,
    pub records: Vec<SliceRecord>,
    pub convergence_slice: Option<u64>,
    /// `(slice, cluster sizes)` at each snapshot, ending with the final slice.
    pub snapshots: Vec<(u64, Vec<u32>)>,
    pub tradeoff: Option<TradeoffPoint>,
}

/// Simulates one grid point at full slice resolution.
pub fn simulate(plan: &ExperimentPlan, spec: &RunSpec) -> Result<RunOutcome> {
    let sim = Simulation::new(&spec.config, &spec.strategy)?;
    let mut snapshots = Vec::new();
    let opts = RunOptions {
        stride: 1,
        run_to_horizon: plan.run_to_horizon,
    };
    let traj = drive(sim, spec.config.horizon(), opts, |s| {
        let slice = s.world().slice();
        if plan.snapshots.contains(&slice) {
            snapshots.push((slice, cluster_sizes(s.world().occupancy(), 1)));
        }
    })?;
    let final_slice = traj.last().slice;
    if snapshots.last().map(|s| s.0) != Some(final_slice) {
        snapshots.push((final_slice, cluster_sizes(&traj.final_occupancy, 1)));
    }
    let tradeoff = plan
        .tradeoff_threshold
        .and_then(|t| tradeoff_point(&traj, spec.strategy.m.unwrap_or(0), t));
    Ok(RunOutcome {
        spec: spec.clone(),
        records: traj.records,
        convergence_slice: traj.convergence_slice,
        snapshots,
        tradeoff,
    })
}

pub fn manifest_path(plan: &ExperimentPlan) -> PathBuf {
    plan.outputs.join(format!("{}.manifest.json", plan.name))
}

/// Digest of everything in the plan except where its outputs go.
pub fn plan_digest(plan: &ExperimentPlan) -> String {
    let mut p = plan.clone();
    p.outputs = PathBuf::new();
    let json = serde_json::to_vec(&p).expect("plans always serialize");
    bytes_digest(&json)
}

/// Reads the manifest of `plan`, if one exists.
pub fn read_manifest(path: &Path) -> Result<Option<Manifest>> {
    match fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes).map(Some).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn manifest_is_current(plan: &ExperimentPlan, manifest: &Manifest) -> bool {
    manifest.complete
        && manifest.plan_digest == plan_digest(plan)
        && manifest.files.iter().all(|f| {
            file_digest(&plan.outputs.join(&f.path)).is_ok_and(|d| d == f.sha256)
        })
}

struct Sinks {
    rows: CsvSink<std::io::BufWriter<fs::File>>,
    clusters: CsvSink<std::io::BufWriter<fs::File>>,
    runs: CsvSink<std::io::BufWriter<fs::File>>,
    tradeoff: Option<CsvSink<std::io::BufWriter<fs::File>>>,
}

fn file_names(plan: &ExperimentPlan) -> [String; 5] {
    let n = &plan.name;
    [
        format!("{n}.rows.csv"),
        format!("{n}.clusters.csv"),
        format!("{n}.runs.csv"),
        format!("{n}.tradeoff.csv"),
        format!("{n}.scaling.csv"),
    ]
}

/// Executes every `(strategy, N, seed)` combination of `plan` with a pool of
/// `worker_count` threads. Output bytes do not depend on `worker_count`.
pub fn execute(plan: &ExperimentPlan, worker_count: usize) -> Result<ExecutionSummary> {
    plan.validate()?;
    if worker_count == 0 {
        return Err(Error::invalid("worker_count must be positive"));
    }
    let manifest_file = manifest_path(plan);
    if let Some(existing) = read_manifest(&manifest_file).ok().flatten() {
        if manifest_is_current(plan, &existing) {
            return Ok(ExecutionSummary {
                runs_completed: existing.runs_completed,
                skipped: true,
                manifest_path: manifest_file,
                files: existing.files,
            });
        }
    }
    fs::create_dir_all(&plan.outputs).map_err(|e| Error::io(&plan.outputs, e))?;
    let _ = fs::remove_file(&manifest_file);

    let runs = plan.runs()?;
    let mut ledger = Vec::with_capacity(runs.len());
    let result = write_outputs(plan, &runs, worker_count, &mut ledger);
    let names = file_names(plan);
    let files = collect_files(&plan.outputs, &names);
    let complete = result.is_ok() && ledger.len() == runs.len();
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        experiment: plan.name.clone(),
        plan_digest: plan_digest(plan),
        complete,
        runs_total: runs.len(),
        runs_completed: ledger.len(),
        runs: ledger,
        files,
    };
    let manifest_write = write_manifest(&manifest_file, &manifest);
    match (result, manifest_write) {
        (Ok(()), Ok(())) => Ok(ExecutionSummary {
            runs_completed: manifest.runs_completed,
            skipped: false,
            manifest_path: manifest_file,
            files: manifest.files,
        }),
        (Ok(()), Err(e)) => Err(e),
        (Err(e), _) => Err(Error::IncompleteSweep {
            manifest: manifest_file,
            source: Box::new(e),
        }),
    }
}

fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    json.push(b'\n');
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

fn collect_files(dir: &Path, names: &[String]) -> Vec<ManifestFile> {
    names
        .iter()
        .filter_map(|name| {
            let path = dir.join(name);
            let bytes = fs::metadata(&path).ok()?.len();
            let sha256 = file_digest(&path).ok()?;
            Some(ManifestFile {
                path: name.clone(),
                sha256,
                bytes,
            })
        })
        .collect()
}

fn write_outputs(
    plan: &ExperimentPlan,
    runs: &[RunSpec],
    worker_count: usize,
    ledger: &mut Vec<LedgerEntry>,
) -> Result<()> {
    let names = file_names(plan);
    let dir = &plan.outputs;
    for name in &names {
        let _ = fs::remove_file(dir.join(name));
    }
    let mut sinks = Sinks {
        rows: create_csv(&dir.join(&names[0]))?,
        clusters: create_csv(&dir.join(&names[1]))?,
        runs: create_csv(&dir.join(&names[2]))?,
        tradeoff: match plan.tradeoff_threshold {
            Some(_) => Some(create_csv(&dir.join(&names[3]))?),
            None => None,
        },
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count)
        .build()
        .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?;

    // (strategy index, N) -> convergence slices
    let mut convergence: BTreeMap<(usize, usize), Vec<Option<u64>>> = BTreeMap::new();
    let chunk = (worker_count * 4).max(1);
    for batch in runs.chunks(chunk) {
        let outcomes: Vec<Result<RunOutcome>> = pool.install(|| batch.par_iter().map(|r| simulate(plan, r)).collect());
        for outcome in outcomes {
            let outcome = outcome?;
            write_run(plan, &outcome, &mut sinks)?;
            let spec = &outcome.spec;
            convergence
                .entry((spec.strategy_index, spec.config.n_agents()))
                .or_default()
                .push(outcome.convergence_slice);
            ledger.push(LedgerEntry {
                run_id: spec.run_id,
                strategy: spec.strategy.label(),
                n: spec.config.n_agents(),
                seed: spec.config.seed(),
                first_stream: 0,
                stream_count: spec.config.n_agents() as u64,
                horizon: spec.config.horizon(),
                final_slice: outcome.records.last().map_or(0, |r| r.slice),
                convergence_slice: outcome.convergence_slice,
            });
        }
    }
    let flush = |sink: &mut CsvSink<_>, name: &String| sink.flush().map_err(|e| Error::io(dir.join(name), e));
    flush(&mut sinks.rows, &names[0])?;
    flush(&mut sinks.clusters, &names[1])?;
    flush(&mut sinks.runs, &names[2])?;
    if let Some(t) = sinks.tradeoff.as_mut() {
        flush(t, &names[3])?;
    }
    write_scaling(plan, &convergence, &dir.join(&names[4]))
}

fn write_run(plan: &ExperimentPlan, outcome: &RunOutcome, sinks: &mut Sinks) -> Result<()> {
    let dir = &plan.outputs;
    let names = file_names(plan);
    let spec = &outcome.spec;
    let cols = StrategyColumns::of(&spec.strategy);
    let n = spec.config.n_agents();
    let seed = spec.config.seed();
    let last = outcome.records.last().expect("every run records slice 0");
    let io = |i: usize| {
        let p = dir.join(&names[i]);
        move |e: std::io::Error| Error::io(p, e)
    };
    for rec in &outcome.records {
        if rec.slice % plan.record_stride == 0 || rec.slice == last.slice {
            sinks.rows.write(&ResultRow::new(&plan.name, &cols, n, seed, rec)).map_err(io(0))?;
        }
    }
    for (slice, sizes) in &outcome.snapshots {
        for &size in sizes {
            sinks
                .clusters
                .write(&ClusterRow::new(&plan.name, &cols, n, seed, *slice, size))
                .map_err(io(1))?;
        }
    }
    sinks
        .runs
        .write(&RunRow {
            run_id: spec.run_id,
            experiment: plan.name.clone(),
            strategy: cols.strategy.clone(),
            n,
            k: cols.k,
            f1: cols.f1,
            f2: cols.f2,
            f: cols.f,
            m: cols.m,
            seed,
            horizon: spec.config.horizon(),
            final_slice: last.slice,
            convergence_slice: outcome.convergence_slice,
            final_occupied_fraction: last.occupied_fraction,
            final_avg_max_prob: last.avg_max_prob,
        })
        .map_err(io(2))?;
    if let (Some(sink), Some(threshold)) = (sinks.tradeoff.as_mut(), plan.tradeoff_threshold) {
        sink.write(&TradeoffRow {
            experiment: plan.name.clone(),
            strategy: cols.strategy.clone(),
            n,
            m: cols.m,
            seed,
            threshold,
            t_star: outcome.tradeoff.map(|t| t.t_star),
            occupied_fraction: outcome.tradeoff.map(|t| t.occupied_fraction_at_t_star),
        })
        .map_err(io(3))?;
    }
    Ok(())
}

/// Writes the ratio table for every strategy whose converged runs cover at
/// least three distinct N. Nothing is written when no strategy qualifies.
fn write_scaling(
    plan: &ExperimentPlan,
    convergence: &BTreeMap<(usize, usize), Vec<Option<u64>>>,
    path: &Path,
) -> Result<()> {
    let mut rows = Vec::new();
    for (si, strategy) in plan.strategy_grid.iter().enumerate() {
        let mut points = Vec::new();
        let mut totals = BTreeMap::new();
        for (&(s, n), slices) in convergence.range((si, 0)..=(si, usize::MAX)) {
            debug_assert_eq!(s, si);
            totals.insert(n, slices.len());
            points.extend(slices.iter().flatten().map(|&t| (n, t)));
        }
        let Ok(scaling) = convergence_scaling(&points) else { continue };
        let token = StrategyColumns::of(strategy).strategy;
        for r in scaling.ratios {
            rows.push(ScalingRow {
                experiment: plan.name.clone(),
                strategy: token.clone(),
                n: r.n,
                runs: totals.get(&r.n).copied().unwrap_or(0),
                converged_runs: r.runs,
                mean_t: r.mean_t,
                std_t: r.std_t,
                mean_ratio: r.mean_ratio,
                std_ratio: r.std_ratio,
                slope: scaling.slope,
                intercept: scaling.intercept,
                r_squared: scaling.r_squared,
            });
        }
    }
    if rows.is_empty() {
        return Ok(());
    }
    let mut sink = create_csv(path)?;
    for r in &rows {
        sink.write(r).map_err(|e| Error::io(path, e))?;
    }
    let mut inner = sink.into_inner().map_err(|e| Error::io(path, e))?;
    inner.flush().map_err(|e| Error::io(path, e))
}
