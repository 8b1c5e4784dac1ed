//! The synchronous time-slice loop.
//!
//! Each slice: freeze the occupancy, plan every agent against it, apply all
//! moves at once, update strategies, count visits, record metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{is_pure_nash, sample_restaurant, uniform_probabilities, AgentState, Occupancy, SimConfig};
use crate::rng::{agent_streams, StreamRng};
use crate::strategies::{
    asymmetric_in_place, ex_post_outcome, plan_slice, polya_max_prob, polya_phi, symmetric_in_place, SlicePlan,
    StrategyConfig, StrategyKind,
};

/// Population state at one slice.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    slice: u64,
    agents: Vec<AgentState>,
    occ: Occupancy,
}

impl WorldState {
    /// Builds a world from explicit agents at slice 0.
    pub fn from_agents(agents: Vec<AgentState>) -> Result<Self> {
        let n = agents.len();
        if n == 0 {
            return Err(Error::invalid("world needs at least one agent"));
        }
        if agents.iter().any(|a| a.n_restaurants() != n) {
            return Err(Error::invalid("every agent must range over N restaurants"));
        }
        let occ = Occupancy::from_positions(n, agents.iter().map(|a| a.current()));
        Ok(WorldState { slice: 0, agents, occ })
    }

    pub fn slice(&self) -> u64 {
        self.slice
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn occupancy(&self) -> &Occupancy {
        &self.occ
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    /// True when the stored occupancy matches the agents' positions.
    pub fn is_consistent(&self) -> bool {
        Occupancy::from_positions(self.agents.len(), self.agents.iter().map(|a| a.current())) == self.occ
    }
}

/// Metrics for one recorded slice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceRecord {
    pub slice: u64,
    pub occupied_count: usize,
    pub occupied_fraction: f64,
    pub top_counts: [u32; 3],
    pub avg_max_prob: f64,
    pub converged: bool,
}

/// Per-slice metrics of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub n_agents: usize,
    pub records: Vec<SliceRecord>,
    /// First slice at which every agent shares one restaurant.
    pub convergence_slice: Option<u64>,
    /// Occupancy at the last simulated slice.
    pub final_occupancy: Occupancy,
}

impl Trajectory {
    pub fn last(&self) -> &SliceRecord {
        self.records.last().expect("trajectory has at least the slice-0 record")
    }
}

/// Knobs for [`run_with`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    /// Record every `stride`-th slice (slice 0 and the final slice always).
    pub stride: u64,
    /// Keep stepping after convergence until the horizon.
    pub run_to_horizon: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            stride: 1,
            run_to_horizon: false,
        }
    }
}

/// Places every agent uniformly at random and counts the slice-0 visit.
pub fn init_world(cfg: &SimConfig, strategy: &StrategyConfig, rngs: &mut [StreamRng]) -> Result<WorldState> {
    let n = cfg.n_agents();
    strategy.validate(n)?;
    if rngs.len() != n {
        return Err(Error::invalid(format!("need {n} agent streams, got {}", rngs.len())));
    }
    let uniform = uniform_probabilities(n)?;
    let mut agents = Vec::with_capacity(n);
    for rng in rngs.iter_mut() {
        let at = sample_restaurant(&uniform, rng);
        let mut agent = AgentState::with_probs(at, uniform.clone())?;
        agent.record_visit();
        agents.push(agent);
    }
    let occ = Occupancy::from_positions(n, agents.iter().map(|a| a.current()));
    Ok(WorldState { slice: 0, agents, occ })
}

/// Advances the world by one slice, planning agents in index order.
pub fn step(world: &mut WorldState, strategy: &StrategyConfig, rngs: &mut [StreamRng]) -> Result<()> {
    let order: Vec<usize> = (0..world.n_agents()).collect();
    step_in_order(world, strategy, rngs, &order)
}

/// Like [`step`] but plans agents in the given order. The result does not
/// depend on the order.
pub fn step_in_order(
    world: &mut WorldState,
    strategy: &StrategyConfig,
    rngs: &mut [StreamRng],
    order: &[usize],
) -> Result<()> {
    let n = world.n_agents();
    if rngs.len() != n || order.len() != n {
        return Err(Error::invalid("streams and plan order must cover every agent"));
    }
    let mut plans: Vec<Option<SlicePlan>> = vec![None; n];
    for &i in order {
        let plan = plan_slice(i, &world.agents[i], &world.occ, strategy, &mut rngs[i])?;
        plans[i] = Some(plan);
    }
    let plans: Vec<SlicePlan> = plans
        .into_iter()
        .map(|p| p.ok_or_else(|| Error::invalid("plan order is not a permutation")))
        .collect::<Result<_>>()?;

    let origins: Vec<_> = world.agents.iter().map(|a| a.current()).collect();
    for (agent, plan) in world.agents.iter_mut().zip(&plans) {
        agent.move_to(plan.target);
    }
    let post = Occupancy::from_positions(n, world.agents.iter().map(|a| a.current()));

    let (f1, f2, f) = (strategy.f1_or_zero(), strategy.f2_or_zero(), strategy.f_or_zero());
    for ((agent, plan), &origin) in world.agents.iter_mut().zip(&plans).zip(&origins) {
        match strategy.kind {
            StrategyKind::ExAnteSymmetric | StrategyKind::ExAnteAsymmetric => {
                if let (Some(winner), false) = (plan.winner, plan.losers.is_empty()) {
                    let symmetric = strategy.kind == StrategyKind::ExAnteSymmetric;
                    agent.update_probs(|w| {
                        if symmetric {
                            symmetric_in_place(w, winner, &plan.losers, f1, f2)
                        } else {
                            asymmetric_in_place(w, winner, f)
                        }
                    });
                }
            }
            StrategyKind::ExPostSymmetric | StrategyKind::ExPostAsymmetric => {
                if let Some((winner, loser)) = ex_post_outcome(origin, plan.target, &post) {
                    let symmetric = strategy.kind == StrategyKind::ExPostSymmetric;
                    agent.update_probs(|w| {
                        if symmetric {
                            symmetric_in_place(w, winner, &[loser], f1, f2)
                        } else {
                            asymmetric_in_place(w, winner, f)
                        }
                    });
                }
            }
            StrategyKind::NoLearning | StrategyKind::Polya => {}
        }
        agent.record_visit();
    }
    world.occ = post;
    world.slice += 1;
    Ok(())
}

/// A world bundled with its strategy and the agents' streams.
#[derive(Clone, Debug)]
pub struct Simulation {
    world: WorldState,
    strategy: StrategyConfig,
    rngs: Vec<StreamRng>,
    phi: Option<f64>,
}

impl Simulation {
    pub fn new(cfg: &SimConfig, strategy: &StrategyConfig) -> Result<Self> {
        let mut rngs = agent_streams(cfg.seed(), cfg.n_agents());
        let world = init_world(cfg, strategy, &mut rngs)?;
        Self::from_parts(world, strategy.clone(), rngs)
    }

    /// Wraps an explicitly constructed world.
    pub fn from_parts(world: WorldState, strategy: StrategyConfig, rngs: Vec<StreamRng>) -> Result<Self> {
        let n = world.n_agents();
        strategy.validate(n)?;
        if rngs.len() != n {
            return Err(Error::invalid(format!("need {n} agent streams, got {}", rngs.len())));
        }
        let phi = match strategy.kind {
            StrategyKind::Polya => Some(polya_phi(strategy.m.unwrap_or(0), n)?),
            _ => None,
        };
        Ok(Simulation {
            world,
            strategy,
            rngs,
            phi,
        })
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn strategy(&self) -> &StrategyConfig {
        &self.strategy
    }

    pub fn step(&mut self) {
        step(&mut self.world, &self.strategy, &mut self.rngs).expect("strategy validated at construction");
    }

    pub fn step_in_order(&mut self, order: &[usize]) -> Result<()> {
        step_in_order(&mut self.world, &self.strategy, &mut self.rngs, order)
    }

    /// Mean over agents of their largest choice probability. Polya agents use
    /// the urn distribution implied by their visit counts.
    pub fn avg_max_prob(&self) -> f64 {
        let agents = self.world.agents();
        let total: f64 = match self.phi {
            Some(phi) => agents.iter().map(|a| polya_max_prob(a, phi)).sum(),
            None => agents.iter().map(|a| a.max_prob()).sum(),
        };
        total / agents.len() as f64
    }

    pub fn record(&self) -> SliceRecord {
        let occ = self.world.occupancy();
        let occupied = occ.occupied();
        SliceRecord {
            slice: self.world.slice(),
            occupied_count: occupied,
            occupied_fraction: occupied as f64 / occ.len() as f64,
            top_counts: occ.top3(),
            avg_max_prob: self.avg_max_prob(),
            converged: is_pure_nash(occ),
        }
    }
}

/// Runs until convergence or the horizon, recording every slice.
pub fn run(cfg: &SimConfig, strategy: &StrategyConfig) -> Result<Trajectory> {
    run_with(cfg, strategy, RunOptions::default())
}

pub fn run_with(cfg: &SimConfig, strategy: &StrategyConfig, opts: RunOptions) -> Result<Trajectory> {
    let sim = Simulation::new(cfg, strategy)?;
    drive(sim, cfg.horizon(), opts, |_| {})
}

/// Steps `sim` to the horizon, calling `observe` after every slice
/// (including slice 0).
pub fn drive(
    mut sim: Simulation,
    horizon: u64,
    opts: RunOptions,
    mut observe: impl FnMut(&Simulation),
) -> Result<Trajectory> {
    if opts.stride == 0 {
        return Err(Error::invalid("record stride must be positive"));
    }
    let mut records = Vec::new();
    let mut convergence_slice = None;
    loop {
        observe(&sim);
        let slice = sim.world().slice();
        let converged = is_pure_nash(sim.world().occupancy());
        if converged && convergence_slice.is_none() {
            convergence_slice = Some(slice);
        }
        let last = slice >= horizon || (converged && !opts.run_to_horizon);
        if last || slice.is_multiple_of(opts.stride) {
            records.push(sim.record());
        }
        if last {
            break;
        }
        sim.step();
    }
    Ok(Trajectory {
        n_agents: sim.world().n_agents(),
        records,
        convergence_slice,
        final_occupancy: sim.world().occupancy().clone(),
    })
}
