//! Post-hoc analyses over emitted data files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::output::{read_csv, ClusterRow, ResultRow, RunKey};
use crate::error::{Error, Result};
use crate::metrics::{cluster_pdf, fit_exponential, fit_gamma, spearman, ClusterSample, Histogram};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitKind {
    Exponential,
    Gamma,
    None,
}

impl std::str::FromStr for FitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp" => Ok(FitKind::Exponential),
            "gamma" => Ok(FitKind::Gamma),
            "none" => Ok(FitKind::None),
            other => Err(Error::invalid(format!("unknown fit '{other}'; expected exp, gamma or none"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Fit {
    Exponential { rate: f64 },
    Gamma { shape: f64, scale: f64 },
}

/// Cluster statistics pooled over the runs of one strategy point.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterGroup {
    pub label: String,
    pub runs: usize,
    pub histogram: Histogram,
    pub fit: Option<Fit>,
}

/// Pools the last snapshot of every run in `paths`, grouped by strategy point.
pub fn cluster_report(paths: &[PathBuf], bin_width: u32, fit: FitKind) -> Result<Vec<ClusterGroup>> {
    let mut rows: Vec<ClusterRow> = Vec::new();
    for p in paths {
        rows.extend(read_csv::<ClusterRow>(p)?);
    }
    if rows.is_empty() {
        return Err(Error::invalid("no cluster rows in the input files"));
    }
    let mut last_slice: BTreeMap<RunKey, u64> = BTreeMap::new();
    for r in &rows {
        let e = last_slice.entry(r.run_key()).or_insert(r.slice);
        *e = (*e).max(r.slice);
    }
    // label -> run key -> sizes, labels in first-seen order
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, BTreeMap<RunKey, (usize, Vec<u32>)>> = BTreeMap::new();
    for r in rows {
        let key = r.run_key();
        if last_slice[&key] != r.slice {
            continue;
        }
        let label = r.group_label();
        if !groups.contains_key(&label) {
            order.push(label.clone());
        }
        groups.entry(label).or_default().entry(key).or_insert((r.n, Vec::new())).1.push(r.cluster_size);
    }
    let mut out = Vec::new();
    for label in order {
        let runs = &groups[&label];
        let samples = runs
            .values()
            .enumerate()
            .map(|(i, (n, sizes))| ClusterSample::new(sizes.clone(), i, *n))
            .collect::<Result<Vec<_>>>()?;
        let histogram = cluster_pdf(&samples, bin_width)?;
        let pooled: Vec<f64> = samples.iter().flat_map(|s| s.sizes.iter().map(|&x| x as f64)).collect();
        let fit = match fit {
            FitKind::None => None,
            FitKind::Exponential => Some(Fit::Exponential {
                rate: fit_exponential(&pooled)?,
            }),
            FitKind::Gamma => {
                let (shape, scale) = fit_gamma(&pooled)?;
                Some(Fit::Gamma { shape, scale })
            }
        };
        out.push(ClusterGroup {
            label,
            runs: runs.len(),
            histogram,
            fit,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TradeoffEntry {
    pub label: String,
    pub m: Option<i64>,
    pub seed: u64,
    pub t_star: u64,
    pub occupied_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TradeoffReport {
    pub entries: Vec<TradeoffEntry>,
    /// Runs that never reached the threshold within their recorded slices.
    pub unreached: usize,
    /// Rank correlation of `t_star` against occupancy, when defined.
    pub spearman: Option<f64>,
}

/// Recomputes the stability/occupancy trade-off from every `*.rows.csv` in
/// `dir`. Precision is limited by the stride the rows were recorded at.
pub fn tradeoff_report(dir: &Path, threshold: f64) -> Result<TradeoffReport> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid("threshold must lie in (0, 1]"));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(".rows.csv")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid(format!("no *.rows.csv files in {}", dir.display())));
    }
    let mut order: Vec<RunKey> = Vec::new();
    let mut hits: BTreeMap<RunKey, Option<TradeoffEntry>> = BTreeMap::new();
    for f in &files {
        for r in read_csv::<ResultRow>(f)? {
            let key = r.run_key();
            let slot = hits.entry(key.clone()).or_insert_with(|| {
                order.push(key);
                None
            });
            if slot.is_none() && r.avg_max_prob >= threshold {
                *slot = Some(TradeoffEntry {
                    label: group_of(&r),
                    m: r.m,
                    seed: r.seed,
                    t_star: r.slice,
                    occupied_fraction: r.occupied_fraction,
                });
            }
        }
    }
    let entries: Vec<TradeoffEntry> = order.iter().filter_map(|k| hits[k].clone()).collect();
    let unreached = order.len() - entries.len();
    let ts: Vec<f64> = entries.iter().map(|e| e.t_star as f64).collect();
    let occ: Vec<f64> = entries.iter().map(|e| e.occupied_fraction).collect();
    Ok(TradeoffReport {
        spearman: spearman(&ts, &occ).ok(),
        entries,
        unreached,
    })
}

fn group_of(r: &ResultRow) -> String {
    super::output::group_label(&r.experiment, &r.strategy, r.n, r.k, r.f1, r.f2, r.f, r.m)
}
