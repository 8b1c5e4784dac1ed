//! Experiment plans and their TOML file format.
//!
//! ```toml
//! schema_version = 1
//! name = "scaling"
//! n_grid = [50, 100, 200]
//! seeds = [1, 2, 3]
//! horizon_per_agent = 20
//!
//! [[strategy]]
//! kind = "no-learning"
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SimConfig;
use crate::strategies::{PolyaMoveRule, StrategyConfig, StrategyKind};

pub const SCHEMA_VERSION: u32 = 1;

/// How long each run may last.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Horizon {
    /// A fixed number of slices.
    Fixed(u64),
    /// `per_agent * N` slices, optionally capped.
    PerAgent { per_agent: u64, cap: Option<u64> },
}

impl Horizon {
    pub fn for_n(&self, n: usize) -> u64 {
        match *self {
            Horizon::Fixed(h) => h,
            Horizon::PerAgent { per_agent, cap } => {
                let h = per_agent.saturating_mul(n as u64);
                cap.map_or(h, |c| h.min(c))
            }
        }
    }
}

/// A validated grid of runs plus where to put the results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub name: String,
    pub horizon: Horizon,
    pub strategy_grid: Vec<StrategyConfig>,
    pub n_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub outputs: PathBuf,
    pub record_stride: u64,
    /// Keep simulating after convergence until the horizon.
    pub run_to_horizon: bool,
    /// Extra slices at which cluster sizes are written (the final slice is
    /// always written).
    pub snapshots: Vec<u64>,
    /// When set, a stability/occupancy trade-off table is emitted.
    pub tradeoff_threshold: Option<f64>,
}

/// One point of the run grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub run_id: usize,
    pub strategy_index: usize,
    pub strategy: StrategyConfig,
    pub config: SimConfig,
}

impl ExperimentPlan {
    pub fn sim_config(&self, n: usize, seed: u64) -> Result<SimConfig> {
        SimConfig::new(n, self.horizon.for_n(n), seed, self.seeds.len())
    }

    /// Runs in output order: strategy, then N, then seed.
    pub fn runs(&self) -> Result<Vec<RunSpec>> {
        let mut out = Vec::new();
        for (si, strategy) in self.strategy_grid.iter().enumerate() {
            for &n in &self.n_grid {
                for &seed in &self.seeds {
                    out.push(RunSpec {
                        run_id: out.len(),
                        strategy_index: si,
                        strategy: strategy.clone(),
                        config: self.sim_config(n, seed)?,
                    });
                }
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(Error::validation("name", "must be nonempty and use only [A-Za-z0-9_-]"));
        }
        if self.strategy_grid.is_empty() {
            return Err(Error::validation("strategy", "at least one strategy is required"));
        }
        if self.n_grid.is_empty() {
            return Err(Error::validation("n_grid", "must be nonempty"));
        }
        if self.seeds.is_empty() {
            return Err(Error::validation("seeds", "must be nonempty"));
        }
        let distinct: BTreeSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::validation("seeds", "seeds must be distinct"));
        }
        if self.record_stride == 0 {
            return Err(Error::validation("record_stride", "must be positive"));
        }
        match self.horizon {
            Horizon::Fixed(0) => return Err(Error::validation("horizon", "must be at least 1")),
            Horizon::PerAgent { per_agent: 0, .. } => {
                return Err(Error::validation("horizon_per_agent", "must be at least 1"))
            }
            Horizon::PerAgent { cap: Some(0), .. } => {
                return Err(Error::validation("horizon_cap", "must be at least 1"))
            }
            _ => {}
        }
        if let Some(t) = self.tradeoff_threshold {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::validation("tradeoff_threshold", "must lie in (0, 1]"));
            }
        }
        for &n in &self.n_grid {
            if n == 0 {
                return Err(Error::validation("n_grid", "every N must be positive"));
            }
            SimConfig::new(n, self.horizon.for_n(n), 0, 1)?;
            for (i, s) in self.strategy_grid.iter().enumerate() {
                s.validate(n).map_err(|e| match e {
                    Error::Validation { field, message } => Error::Validation {
                        field: format!("strategy[{i}].{field}"),
                        message: format!("{message} (N = {n})"),
                    },
                    other => other,
                })?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    schema_version: u32,
    name: String,
    n_grid: Vec<usize>,
    seeds: Vec<u64>,
    horizon: Option<u64>,
    horizon_per_agent: Option<u64>,
    horizon_cap: Option<u64>,
    outputs: Option<PathBuf>,
    record_stride: Option<u64>,
    run_to_horizon: Option<bool>,
    snapshots: Option<Vec<u64>>,
    tradeoff_threshold: Option<f64>,
    strategy: Vec<StrategyEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StrategyEntry {
    kind: StrategyKind,
    k: Option<usize>,
    f1: Option<f64>,
    f2: Option<f64>,
    f: Option<f64>,
    m: Option<i64>,
    polya_move_rule: Option<PolyaMoveRule>,
}

/// Default output directory when a plan does not name one.
pub const DEFAULT_OUTPUTS: &str = "results";

/// Reads and validates a plan file.
pub fn load_plan(path: impl AsRef<Path>) -> Result<ExperimentPlan> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_plan(&text, path)
}

/// Parses plan text; `path` is only used in error messages.
pub fn parse_plan(text: &str, path: &Path) -> Result<ExperimentPlan> {
    let file: PlanFile = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        Error::Parse {
            path: path.to_path_buf(),
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(Error::validation(
            "schema_version",
            format!("unsupported version {}, expected {SCHEMA_VERSION}", file.schema_version),
        ));
    }
    let horizon = match (file.horizon, file.horizon_per_agent) {
        (Some(h), None) => {
            if file.horizon_cap.is_some() {
                return Err(Error::validation("horizon_cap", "only applies with horizon_per_agent"));
            }
            Horizon::Fixed(h)
        }
        (None, Some(per_agent)) => Horizon::PerAgent {
            per_agent,
            cap: file.horizon_cap,
        },
        (Some(_), Some(_)) => {
            return Err(Error::validation("horizon", "give either horizon or horizon_per_agent, not both"))
        }
        (None, None) => return Err(Error::validation("horizon", "one of horizon or horizon_per_agent is required")),
    };
    let strategy_grid = file
        .strategy
        .into_iter()
        .map(|s| StrategyConfig {
            kind: s.kind,
            k: s.k.unwrap_or(1),
            f1: s.f1,
            f2: s.f2,
            f: s.f,
            m: s.m,
            polya_move_rule: s.polya_move_rule.unwrap_or_default(),
        })
        .collect();
    let plan = ExperimentPlan {
        name: file.name,
        horizon,
        strategy_grid,
        n_grid: file.n_grid,
        seeds: file.seeds,
        outputs: file.outputs.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUTS)),
        record_stride: file.record_stride.unwrap_or(1),
        run_to_horizon: file.run_to_horizon.unwrap_or(false),
        snapshots: file.snapshots.unwrap_or_default(),
        tradeoff_threshold: file.tradeoff_threshold,
    };
    plan.validate()?;
    Ok(plan)
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentPlan> {
        parse_plan(text, Path::new("plan.toml"))
    }

    const MINIMAL: &str = r#"
schema_version = 1
name = "tiny"
n_grid = [10]
seeds = [3]
horizon = 50

[[strategy]]
kind = "no-learning"
"#;

    #[test]
    fn minimal_plan_gets_defaults() {
        let plan = parse(MINIMAL).unwrap();
        assert_eq!(plan.record_stride, 1);
        assert_eq!(plan.outputs, PathBuf::from(DEFAULT_OUTPUTS));
        assert!(!plan.run_to_horizon);
        assert_eq!(plan.strategy_grid, vec![StrategyConfig::no_learning()]);
        assert_eq!(plan.horizon, Horizon::Fixed(50));
        assert_eq!(plan.runs().unwrap().len(), 1);
    }

    #[test]
    fn m_must_be_below_n() {
        let text = MINIMAL.replace("kind = \"no-learning\"", "kind = \"polya\"\nm = 10");
        match parse(&text) {
            Err(Error::Validation { field, message }) => {
                assert_eq!(field, "strategy[0].m");
                assert!(message.contains("m must be < N"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let text = MINIMAL.replace("seeds = [3]", "seeds = [3, 4, 3]");
        assert!(matches!(parse(&text), Err(Error::Validation { field, .. }) if field == "seeds"));
    }

    #[test]
    fn unknown_keys_rejected_with_position() {
        let text = MINIMAL.replace("horizon = 50", "horizon = 50\ncolour = \"red\"");
        match parse(&text) {
            Err(Error::Parse { line, column, message, .. }) => {
                assert_eq!(line, 7);
                assert_eq!(column, 1);
                assert!(message.contains("colour"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad = MINIMAL.replace("kind = \"no-learning\"", "kind = \"no-learning\"\nbogus = 1");
        assert!(matches!(parse(&bad), Err(Error::Parse { .. })));
    }

    #[test]
    fn syntax_error_has_position() {
        let text = "schema_version = 1\nname = \n";
        match parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn horizon_variants() {
        let text = MINIMAL.replace("horizon = 50", "horizon_per_agent = 20\nhorizon_cap = 150");
        let plan = parse(&text).unwrap();
        assert_eq!(plan.horizon.for_n(10), 150);
        assert_eq!(plan.horizon.for_n(5), 100);
        let both = MINIMAL.replace("horizon = 50", "horizon = 50\nhorizon_per_agent = 2");
        assert!(parse(&both).is_err());
        let none = MINIMAL.replace("horizon = 50", "");
        assert!(parse(&none).is_err());
    }

    #[test]
    fn name_and_schema_checked() {
        assert!(parse(&MINIMAL.replace("\"tiny\"", "\"a/b\"")).is_err());
        assert!(parse(&MINIMAL.replace("\"tiny\"", "\"\"")).is_err());
        assert!(parse(&MINIMAL.replace("schema_version = 1", "schema_version = 2")).is_err());
    }

    #[test]
    fn grid_order_is_strategy_n_seed() {
        let text = r#"
schema_version = 1
name = "grid"
n_grid = [10, 20]
seeds = [1, 2, 3]
horizon = 5

[[strategy]]
kind = "no-learning"

[[strategy]]
kind = "ex-ante-asymmetric"
f = 0.5
k = 2
"#;
        let plan = parse(text).unwrap();
        let runs = plan.runs().unwrap();
        assert_eq!(runs.len(), 12);
        assert_eq!(runs[4].strategy_index, 0);
        assert_eq!(runs[4].config.n_agents(), 20);
        assert_eq!(runs[4].config.seed(), 2);
        assert_eq!(runs[11].strategy.k, 2);
    }
}
