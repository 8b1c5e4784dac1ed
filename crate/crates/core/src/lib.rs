//! Simulation engine for the N-agent, N-choice majority coordination game.
//!
//! `N` agents repeatedly pick one of `N` restaurants and each wants to sit in
//! the most crowded one. The crate provides the heuristic learning strategies
//! (no learning, ex-ante and ex-post reinforcement with symmetric or
//! asymmetric updates, and a Polya urn scheme), a deterministic synchronous
//! engine, post-processing metrics and an experiment runner that writes
//! plot-ready CSV.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod strategies;

pub use engine::{run, run_with, RunOptions, Simulation, SliceRecord, Trajectory, WorldState};
pub use error::{Error, Result};
pub use model::{
    is_pure_nash, sample_restaurant, uniform_probabilities, AgentState, Occupancy, ProbabilityVector, RestaurantId,
    SimConfig,
};
pub use rng::{make_rng, StreamRng};
pub use strategies::{PolyaMoveRule, StrategyConfig, StrategyKind};
