use std::fs;
use std::path::Path;

use majority_core::experiments::{
    execute, figure_recipe, parse_plan, read_csv, read_manifest, ExperimentPlan, Horizon, ResultRow, RunRow,
    ScalingRow,
};
use majority_core::{run, Error, SimConfig, StrategyConfig};

fn plan(dir: &Path) -> ExperimentPlan {
    ExperimentPlan {
        name: "grid".into(),
        horizon: Horizon::Fixed(300),
        strategy_grid: vec![StrategyConfig::no_learning(), StrategyConfig::ex_ante_asymmetric(0.5).with_k(2)],
        n_grid: vec![10, 25],
        seeds: vec![1, 2, 3],
        outputs: dir.to_path_buf(),
        record_stride: 5,
        run_to_horizon: false,
        snapshots: vec![10],
        tradeoff_threshold: None,
    }
}

#[test]
fn grid_cardinality_reaches_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let summary = execute(&plan(dir.path()), 2).unwrap();
    assert_eq!(summary.runs_completed, 12);
    let manifest = read_manifest(&summary.manifest_path).unwrap().unwrap();
    assert!(manifest.complete);
    assert_eq!(manifest.runs.len(), 12);
    assert!(manifest.runs.iter().all(|r| r.stream_count == r.n as u64));
    let runs: Vec<RunRow> = read_csv(&dir.path().join("grid.runs.csv")).unwrap();
    assert_eq!(runs.len(), 12);
}

#[test]
fn digests_do_not_depend_on_worker_count() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sa = execute(&plan(a.path()), 1).unwrap();
    let sb = execute(&plan(b.path()), 8).unwrap();
    assert_eq!(sa.files, sb.files);
    assert_eq!(fs::read(&sa.manifest_path).unwrap(), fs::read(&sb.manifest_path).unwrap());
}

#[test]
fn rerunning_a_complete_sweep_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let p = plan(dir.path());
    let first = execute(&p, 1).unwrap();
    let before = fs::metadata(dir.path().join("grid.rows.csv")).unwrap().modified().unwrap();
    let second = execute(&p, 1).unwrap();
    assert!(!first.skipped);
    assert!(second.skipped);
    assert_eq!(first.files, second.files);
    assert_eq!(before, fs::metadata(dir.path().join("grid.rows.csv")).unwrap().modified().unwrap());

    // A tampered file forces a fresh run that restores it.
    fs::write(dir.path().join("grid.rows.csv"), "junk").unwrap();
    let third = execute(&p, 1).unwrap();
    assert!(!third.skipped);
    assert_eq!(third.files, first.files);
}

#[test]
fn io_failure_leaves_an_incomplete_manifest() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("grid.runs.csv")).unwrap();
    let err = execute(&plan(dir.path()), 1).unwrap_err();
    assert!(matches!(err, Error::IncompleteSweep { .. }), "{err:?}");
    let manifest = read_manifest(&dir.path().join("grid.manifest.json")).unwrap().unwrap();
    assert!(!manifest.complete);
    assert!(manifest.runs_completed < manifest.runs_total);
}

#[test]
fn rows_match_an_independent_run() {
    let dir = tempfile::tempdir().unwrap();
    let p = plan(dir.path());
    execute(&p, 1).unwrap();
    let rows: Vec<ResultRow> = read_csv(&dir.path().join("grid.rows.csv")).unwrap();
    let traj = run(&SimConfig::single(25, 300, 2).unwrap(), &StrategyConfig::no_learning()).unwrap();
    let ours: Vec<&ResultRow> = rows.iter().filter(|r| r.strategy == "no-learning" && r.n == 25 && r.seed == 2).collect();
    let expected: Vec<_> = traj
        .records
        .iter()
        .filter(|r| r.slice % 5 == 0 || r.slice == traj.last().slice)
        .collect();
    assert_eq!(ours.len(), expected.len());
    for (row, rec) in ours.iter().zip(expected) {
        assert_eq!(row.slice, rec.slice);
        assert_eq!(row.occupied_count, rec.occupied_count);
        assert_eq!(row.avg_max_prob.to_bits(), rec.avg_max_prob.to_bits());
        assert_eq!([row.top1, row.top2, row.top3], rec.top_counts);
        assert_eq!(row.converged_flag, rec.converged);
    }
    assert!(ours.iter().all(|r| r.k == Some(1) && r.f.is_none() && r.m.is_none()));
}

#[test]
fn figure_two_emits_the_ratio_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = figure_recipe("fig2", 10).unwrap();
    p.outputs = dir.path().to_path_buf();
    execute(&p, 1).unwrap();
    let table: Vec<ScalingRow> = read_csv(&dir.path().join("fig2.scaling.csv")).unwrap();
    assert_eq!(table.iter().map(|r| r.n).collect::<Vec<_>>(), p.n_grid);
    for r in &table {
        assert_eq!(r.converged_runs, 10);
        assert!((r.mean_ratio - r.mean_t / r.n as f64).abs() < 1e-9);
    }
}

#[test]
fn plan_file_round_trip_through_execute() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "schema_version = 1\nname = \"t\"\nn_grid = [12]\nseeds = [9]\nhorizon = 50\noutputs = {:?}\n\n[[strategy]]\nkind = \"polya\"\nm = 3\n",
        dir.path().to_str().unwrap()
    );
    let p = parse_plan(&text, Path::new("inline.toml")).unwrap();
    assert_eq!(p.record_stride, 1);
    let s = execute(&p, 1).unwrap();
    assert_eq!(s.runs_completed, 1);
    assert!(dir.path().join("t.clusters.csv").exists());
}
