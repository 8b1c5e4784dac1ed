//! Built-in plans for each reproduced figure.

use std::path::PathBuf;

use super::plan::{ExperimentPlan, Horizon, DEFAULT_OUTPUTS};
use crate::error::{Error, Result};
use crate::strategies::{PolyaMoveRule, StrategyConfig};

pub const FIGURE_NAMES: [&str; 8] = ["fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9"];

const HORIZON_CAP: u64 = 10_000;

fn ten_seeds() -> Vec<u64> {
    (1..=10).collect()
}

fn scale_n(n: usize, divisor: u32) -> usize {
    (n / divisor as usize).max(2)
}

/// Rescales a Polya factor from `n_paper` to `n` agents, keeping it below `n`.
fn scale_m(m: i64, n_paper: usize, n: usize) -> i64 {
    let scaled = (m as f64 * n as f64 / n_paper as f64).round() as i64;
    scaled.min(n as i64 - 1).max(0)
}

fn polya_grid(ms: &[i64], n_paper: usize, n: usize, rules: &[PolyaMoveRule]) -> Vec<StrategyConfig> {
    let mut out: Vec<StrategyConfig> = Vec::new();
    for &rule in rules {
        for &m in ms {
            let s = StrategyConfig::polya(scale_m(m, n_paper, n)).with_move_rule(rule);
            if !out.contains(&s) {
                out.push(s);
            }
        }
    }
    out
}

fn with_ks(base: StrategyConfig) -> Vec<StrategyConfig> {
    (1..=3).map(|k| base.clone().with_k(k)).collect()
}

fn plan(name: &str, n_grid: Vec<usize>, horizon: Horizon, strategy_grid: Vec<StrategyConfig>) -> ExperimentPlan {
    ExperimentPlan {
        name: name.to_string(),
        horizon,
        strategy_grid,
        n_grid,
        seeds: ten_seeds(),
        outputs: PathBuf::from(DEFAULT_OUTPUTS),
        record_stride: 1,
        run_to_horizon: false,
        snapshots: Vec::new(),
        tradeoff_threshold: None,
    }
}

fn fixed(h: u64) -> Horizon {
    Horizon::Fixed(h.min(HORIZON_CAP))
}

/// Built-in plan for `name`. N is divided by `divisor` (1 gives paper
/// scale), Polya factors shrink with N, and horizons never exceed 10^4.
pub fn figure_recipe(name: &str, divisor: u32) -> Result<ExperimentPlan> {
    if divisor == 0 {
        return Err(Error::invalid("scale divisor must be positive"));
    }
    let n = |paper: usize| scale_n(paper, divisor);
    let mut p = match name {
        "fig2" => {
            let mut grid = [100, 200, 300, 400, 500, 600, 800, 1000].map(n).to_vec();
            grid.dedup();
            plan(
                name,
                grid,
                Horizon::PerAgent {
                    per_agent: 20,
                    cap: Some(HORIZON_CAP),
                },
                vec![StrategyConfig::no_learning()],
            )
        }
        "fig3" => {
            let mut p = plan(name, vec![n(1000)], fixed(20 * n(1000) as u64), vec![StrategyConfig::no_learning()]);
            p.seeds = vec![1];
            p
        }
        "fig4" => {
            let mut p = plan(name, vec![n(1000)], fixed(10_000), with_ks(StrategyConfig::ex_ante_symmetric(1.0, 0.1)));
            p.strategy_grid.extend(with_ks(StrategyConfig::ex_ante_asymmetric(0.25)));
            p.snapshots = vec![5_000];
            p.record_stride = 10;
            p
        }
        "fig5" => {
            let mut grid = with_ks(StrategyConfig::ex_ante_asymmetric(0.1));
            grid.extend(with_ks(StrategyConfig::ex_ante_asymmetric(0.9)));
            let mut p = plan(name, vec![n(1000)], fixed(10_000), grid);
            p.record_stride = 10;
            p
        }
        "fig6" => {
            let mut ms = vec![0, 5];
            ms.extend((25..=475).step_by(25));
            ms.push(495);
            let n500 = n(500);
            let mut p = plan(
                name,
                vec![n500],
                fixed(5_000),
                polya_grid(&ms, 500, n500, &[PolyaMoveRule::Compare, PolyaMoveRule::Free]),
            );
            p.snapshots = (500..5_000).step_by(500).collect();
            p.record_stride = 50;
            p
        }
        "fig7" => {
            let grid = vec![
                StrategyConfig::ex_ante_symmetric(1.0, 0.1),
                StrategyConfig::ex_ante_asymmetric(0.25),
                StrategyConfig::ex_post_symmetric(1.0, 0.1),
                StrategyConfig::ex_post_asymmetric(0.5),
            ];
            let mut p = plan(name, vec![n(1000)], fixed(10_000), grid);
            p.record_stride = 100;
            p
        }
        "fig8" => {
            let grid = vec![
                StrategyConfig::ex_post_symmetric(1.0, 0.1),
                StrategyConfig::ex_post_asymmetric(0.5),
                StrategyConfig::ex_post_asymmetric(0.1),
                StrategyConfig::ex_post_asymmetric(0.9),
            ];
            let mut p = plan(name, vec![n(1000)], fixed(10_000), grid);
            p.snapshots = vec![5_000];
            p.record_stride = 10;
            p
        }
        "fig9" => {
            let mut ms: Vec<i64> = (50..=475).step_by(25).collect();
            ms.push(495);
            let n500 = n(500);
            let mut p = plan(name, vec![n500], fixed(20_000), polya_grid(&ms, 500, n500, &[PolyaMoveRule::Compare]));
            p.tradeoff_threshold = Some(0.8);
            p.run_to_horizon = true;
            p.record_stride = 50;
            p
        }
        other => {
            return Err(Error::invalid(format!(
                "unknown figure '{other}'; valid names: {}",
                FIGURE_NAMES.join(", ")
            )))
        }
    };
    p.validate()?;
    p.outputs = PathBuf::from(DEFAULT_OUTPUTS).join(&p.name);
    Ok(p)
}
