//! Plot-ready CSV records and their readers.
//!
//! Files are comma separated, LF terminated, UTF-8, with one header row.
//! Floats use the shortest representation that parses back to the same
//! binary value, so reading a file reproduces the rows exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::SliceRecord;
use crate::error::{Error, Result};
use crate::strategies::{PolyaMoveRule, StrategyConfig, StrategyKind};

/// One recorded slice of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub strategy: String,
    pub n: usize,
    pub k: Option<usize>,
    pub f1: Option<f64>,
    pub f2: Option<f64>,
    pub f: Option<f64>,
    pub m: Option<i64>,
    pub seed: u64,
    pub slice: u64,
    pub occupied_count: usize,
    pub occupied_fraction: f64,
    pub top1: u32,
    pub top2: u32,
    pub top3: u32,
    pub avg_max_prob: f64,
    pub converged_flag: bool,
}

/// One cluster of one run at a snapshot slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub experiment: String,
    pub strategy: String,
    pub n: usize,
    pub k: Option<usize>,
    pub f1: Option<f64>,
    pub f2: Option<f64>,
    pub f: Option<f64>,
    pub m: Option<i64>,
    pub seed: u64,
    pub slice: u64,
    pub cluster_size: u32,
}

/// Strategy columns shared by every record type; parameters that do not
/// apply to the strategy are left empty.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyColumns {
    pub strategy: String,
    pub k: Option<usize>,
    pub f1: Option<f64>,
    pub f2: Option<f64>,
    pub f: Option<f64>,
    pub m: Option<i64>,
}

impl StrategyColumns {
    pub fn of(cfg: &StrategyConfig) -> Self {
        let kind = cfg.kind;
        StrategyColumns {
            strategy: strategy_token(cfg),
            k: kind.uses_k().then_some(cfg.k),
            f1: if kind.is_symmetric() { cfg.f1 } else { None },
            f2: if kind.is_symmetric() { cfg.f2 } else { None },
            f: if kind.is_asymmetric() { cfg.f } else { None },
            m: if kind == StrategyKind::Polya { cfg.m } else { None },
        }
    }
}

/// Kind name as written in the `strategy` column. Polya runs with the free
/// move rule are written as `polya-free`.
pub fn strategy_token(cfg: &StrategyConfig) -> String {
    match (cfg.kind, cfg.polya_move_rule) {
        (StrategyKind::Polya, PolyaMoveRule::Free) => "polya-free".to_string(),
        (kind, _) => kind.as_str().to_string(),
    }
}

pub fn parse_strategy_token(token: &str) -> Result<(StrategyKind, PolyaMoveRule)> {
    if token == "polya-free" {
        return Ok((StrategyKind::Polya, PolyaMoveRule::Free));
    }
    Ok((token.parse()?, PolyaMoveRule::Compare))
}

impl ResultRow {
    pub fn new(experiment: &str, cols: &StrategyColumns, n: usize, seed: u64, rec: &SliceRecord) -> Self {
        ResultRow {
            experiment: experiment.to_string(),
            strategy: cols.strategy.clone(),
            n,
            k: cols.k,
            f1: cols.f1,
            f2: cols.f2,
            f: cols.f,
            m: cols.m,
            seed,
            slice: rec.slice,
            occupied_count: rec.occupied_count,
            occupied_fraction: rec.occupied_fraction,
            top1: rec.top_counts[0],
            top2: rec.top_counts[1],
            top3: rec.top_counts[2],
            avg_max_prob: rec.avg_max_prob,
            converged_flag: rec.converged,
        }
    }

    /// Identifies the run a row belongs to.
    pub fn run_key(&self) -> RunKey {
        RunKey {
            experiment: self.experiment.clone(),
            strategy: self.strategy.clone(),
            n: self.n,
            params: format!("{:?}|{:?}|{:?}|{:?}|{:?}", self.k, self.f1, self.f2, self.f, self.m),
            seed: self.seed,
        }
    }
}

impl ClusterRow {
    pub fn new(experiment: &str, cols: &StrategyColumns, n: usize, seed: u64, slice: u64, size: u32) -> Self {
        ClusterRow {
            experiment: experiment.to_string(),
            strategy: cols.strategy.clone(),
            n,
            k: cols.k,
            f1: cols.f1,
            f2: cols.f2,
            f: cols.f,
            m: cols.m,
            seed,
            slice,
            cluster_size: size,
        }
    }

    pub fn run_key(&self) -> RunKey {
        RunKey {
            experiment: self.experiment.clone(),
            strategy: self.strategy.clone(),
            n: self.n,
            params: format!("{:?}|{:?}|{:?}|{:?}|{:?}", self.k, self.f1, self.f2, self.f, self.m),
            seed: self.seed,
        }
    }

    /// Strategy label without the seed, used to pool runs.
    pub fn group_label(&self) -> String {
        group_label(&self.experiment, &self.strategy, self.n, self.k, self.f1, self.f2, self.f, self.m)
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn group_label(
    experiment: &str,
    strategy: &str,
    n: usize,
    k: Option<usize>,
    f1: Option<f64>,
    f2: Option<f64>,
    f: Option<f64>,
    m: Option<i64>,
) -> String {
    let mut s = format!("{experiment}/{strategy}/N{n}");
    if let Some(k) = k {
        s.push_str(&format!("/k{k}"));
    }
    if let (Some(a), Some(b)) = (f1, f2) {
        s.push_str(&format!("/f1-{a}/f2-{b}"));
    }
    if let Some(f) = f {
        s.push_str(&format!("/f{f}"));
    }
    if let Some(m) = m {
        s.push_str(&format!("/m{m}"));
    }
    s
}

/// Identity of one run across record files.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RunKey {
    pub experiment: String,
    pub strategy: String,
    pub n: usize,
    pub params: String,
    pub seed: u64,
}

/// CSV writer with this crate's dialect.
pub struct CsvSink<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(out: W) -> Self {
        CsvSink {
            inner: csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(out),
        }
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> std::io::Result<()> {
        self.inner.serialize(record).map_err(csv_to_io)
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }

    pub fn into_inner(self) -> std::io::Result<W> {
        self.inner.into_inner().map_err(|e| e.into_error())
    }
}

fn csv_to_io(e: csv::Error) -> std::io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    }
}

pub fn create_csv(path: &Path) -> Result<CsvSink<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(CsvSink::new(BufWriter::new(file)))
}

/// Reads every record of a CSV file written by [`CsvSink`].
pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(file, path)
}

pub fn read_csv_from<T: for<'de> Deserialize<'de>, R: Read>(reader: R, path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize()
        .map(|r| {
            r.map_err(|e| Error::Format {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Hex SHA-256 of a file's contents.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let read = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if read == 0 {
            break;
        }
        hasher.update(&buf[..read]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn bytes_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
