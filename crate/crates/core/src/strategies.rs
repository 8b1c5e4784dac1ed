//! The five strategy families: candidate sampling, the move decision and
//! the probability-vector updates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{inverse_cdf, sample_restaurant, AgentState, Occupancy, ProbabilityVector, RestaurantId};
use crate::rng::StreamRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    NoLearning,
    ExAnteSymmetric,
    ExAnteAsymmetric,
    Polya,
    ExPostSymmetric,
    ExPostAsymmetric,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::NoLearning,
        StrategyKind::ExAnteSymmetric,
        StrategyKind::ExAnteAsymmetric,
        StrategyKind::Polya,
        StrategyKind::ExPostSymmetric,
        StrategyKind::ExPostAsymmetric,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::NoLearning => "no-learning",
            StrategyKind::ExAnteSymmetric => "ex-ante-symmetric",
            StrategyKind::ExAnteAsymmetric => "ex-ante-asymmetric",
            StrategyKind::Polya => "polya",
            StrategyKind::ExPostSymmetric => "ex-post-symmetric",
            StrategyKind::ExPostAsymmetric => "ex-post-asymmetric",
        }
    }

    /// Kinds that look at the candidate before committing to a move.
    pub fn is_ex_ante(self) -> bool {
        matches!(
            self,
            StrategyKind::NoLearning | StrategyKind::ExAnteSymmetric | StrategyKind::ExAnteAsymmetric
        )
    }

    pub fn is_ex_post(self) -> bool {
        matches!(self, StrategyKind::ExPostSymmetric | StrategyKind::ExPostAsymmetric)
    }

    pub fn is_symmetric(self) -> bool {
        matches!(self, StrategyKind::ExAnteSymmetric | StrategyKind::ExPostSymmetric)
    }

    pub fn is_asymmetric(self) -> bool {
        matches!(self, StrategyKind::ExAnteAsymmetric | StrategyKind::ExPostAsymmetric)
    }

    /// Whether the information-set size `k` is meaningful for this kind.
    pub fn uses_k(self) -> bool {
        self.is_ex_ante()
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = StrategyKind::ALL.iter().map(|k| k.as_str()).collect();
                Error::invalid(format!("unknown strategy `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

/// How a Polya agent treats its sampled candidate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolyaMoveRule {
    /// Move only if the candidate is at least as crowded as the current restaurant.
    #[default]
    Compare,
    /// Move to the candidate unconditionally.
    Free,
}

impl PolyaMoveRule {
    pub fn as_str(self) -> &'static str {
        match self {
            PolyaMoveRule::Compare => "compare",
            PolyaMoveRule::Free => "free",
        }
    }
}

impl FromStr for PolyaMoveRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "compare" => Ok(PolyaMoveRule::Compare),
            "free" => Ok(PolyaMoveRule::Free),
            _ => Err(Error::invalid(format!(
                "unknown Polya move rule `{s}`; expected compare or free"
            ))),
        }
    }
}

/// A strategy family plus its parameters. Parameters that do not apply to
/// `kind` are ignored by the dynamics but still range-checked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub k: usize,
    pub f1: Option<f64>,
    pub f2: Option<f64>,
    pub f: Option<f64>,
    pub m: Option<i64>,
    pub polya_move_rule: PolyaMoveRule,
}

impl StrategyConfig {
    fn bare(kind: StrategyKind) -> Self {
        StrategyConfig {
            kind,
            k: 1,
            f1: None,
            f2: None,
            f: None,
            m: None,
            polya_move_rule: PolyaMoveRule::Compare,
        }
    }

    pub fn no_learning() -> Self {
        Self::bare(StrategyKind::NoLearning)
    }

    pub fn ex_ante_symmetric(f1: f64, f2: f64) -> Self {
        StrategyConfig {
            f1: Some(f1),
            f2: Some(f2),
            ..Self::bare(StrategyKind::ExAnteSymmetric)
        }
    }

    pub fn ex_ante_asymmetric(f: f64) -> Self {
        StrategyConfig {
            f: Some(f),
            ..Self::bare(StrategyKind::ExAnteAsymmetric)
        }
    }

    pub fn ex_post_symmetric(f1: f64, f2: f64) -> Self {
        StrategyConfig {
            f1: Some(f1),
            f2: Some(f2),
            ..Self::bare(StrategyKind::ExPostSymmetric)
        }
    }

    pub fn ex_post_asymmetric(f: f64) -> Self {
        StrategyConfig {
            f: Some(f),
            ..Self::bare(StrategyKind::ExPostAsymmetric)
        }
    }

    pub fn polya(m: i64) -> Self {
        StrategyConfig {
            m: Some(m),
            ..Self::bare(StrategyKind::Polya)
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_move_rule(mut self, rule: PolyaMoveRule) -> Self {
        self.polya_move_rule = rule;
        self
    }

    /// Checks every present parameter and the ones `kind` requires, for a
    /// population of `n` agents.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::validation("k", "must be at least 1"));
        }
        if self.k > n {
            return Err(Error::validation("k", format!("must be <= N ({n}), got {}", self.k)));
        }
        for (name, value) in [("f1", self.f1), ("f2", self.f2), ("f", self.f)] {
            if let Some(v) = value {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::validation(name, format!("must lie in [0, 1], got {v}")));
                }
            }
        }
        if let Some(m) = self.m {
            if m < 0 {
                return Err(Error::validation("m", format!("must be >= 0, got {m}")));
            }
            if m >= n as i64 {
                return Err(Error::validation("m", format!("m must be < N ({n}), got {m}")));
            }
        }
        let missing = |field: &str| {
            Error::validation(field, format!("required by strategy {}", self.kind))
        };
        if self.kind.is_symmetric() {
            self.f1.ok_or_else(|| missing("f1"))?;
            self.f2.ok_or_else(|| missing("f2"))?;
        }
        if self.kind.is_asymmetric() {
            self.f.ok_or_else(|| missing("f"))?;
        }
        if self.kind == StrategyKind::Polya {
            self.m.ok_or_else(|| missing("m"))?;
        }
        Ok(())
    }

    /// Compact label for file names and summaries, e.g. `ex-ante-asymmetric_k2_f0.25`.
    pub fn label(&self) -> String {
        let mut s = self.kind.as_str().to_string();
        if self.kind.uses_k() {
            s.push_str(&format!("_k{}", self.k));
        }
        if self.kind.is_symmetric() {
            s.push_str(&format!("_f1-{}_f2-{}", self.f1.unwrap_or(0.0), self.f2.unwrap_or(0.0)));
        }
        if self.kind.is_asymmetric() {
            s.push_str(&format!("_f{}", self.f.unwrap_or(0.0)));
        }
        if self.kind == StrategyKind::Polya {
            s.push_str(&format!("_m{}_{}", self.m.unwrap_or(0), self.polya_move_rule.as_str()));
        }
        s
    }

    pub(crate) fn f1_or_zero(&self) -> f64 {
        self.f1.unwrap_or(0.0)
    }

    pub(crate) fn f2_or_zero(&self) -> f64 {
        self.f2.unwrap_or(0.0)
    }

    pub(crate) fn f_or_zero(&self) -> f64 {
        self.f.unwrap_or(0.0)
    }
}

/// One agent's decision for one slice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlicePlan {
    pub agent_id: usize,
    pub sampled: Vec<RestaurantId>,
    pub target: RestaurantId,
    /// The more attractive side of the comparison; `None` until an ex-post
    /// comparison has been made, or when no comparison drives an update.
    pub winner: Option<RestaurantId>,
    /// Compared restaurants strictly less attractive than the winner. Empty
    /// means attractiveness was equal and no update happens.
    pub losers: Vec<RestaurantId>,
}

/// Draws `k` distinct restaurants from the agent's strategy vector.
pub fn sample_candidates(agent: &AgentState, k: usize, rng: &mut StreamRng) -> Result<Vec<RestaurantId>> {
    sample_distinct(agent.probs(), k, rng)
}

/// `k` distinct draws. A duplicate is replaced by a draw from the remaining
/// mass (the distribution a redraw-until-new loop converges to); when the
/// remaining mass is zero the index is filled uniformly from the unsampled ones.
pub fn sample_distinct(probs: &ProbabilityVector, k: usize, rng: &mut StreamRng) -> Result<Vec<RestaurantId>> {
    let n = probs.len();
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds N = {n}")));
    }
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let j = sample_restaurant(probs, rng);
        if !out.contains(&j) {
            out.push(j);
            continue;
        }
        let w = probs.weights();
        let free = |i: usize| !out.contains(&RestaurantId::from(i));
        let remaining: f64 = (0..n).filter(|&i| free(i)).map(|i| w[i]).sum();
        let pick = if remaining > 0.0 {
            let u = rng.next_f64();
            inverse_cdf((0..n).map(|i| if free(i) { w[i] } else { 0.0 }), remaining, u)
        } else {
            let unsampled: Vec<usize> = (0..n).filter(|&i| free(i)).collect();
            unsampled[rng.below(unsampled.len())]
        };
        out.push(RestaurantId::from(pick));
    }
    Ok(out)
}

/// Most crowded candidate; ties are broken uniformly at random. Draws are
/// consumed only when a tie occurs.
fn best_candidate(candidates: &[RestaurantId], occ: &Occupancy, rng: &mut StreamRng) -> RestaurantId {
    let mut best = candidates[0];
    let mut best_count = occ.count(best);
    let mut ties = 1usize;
    for &c in &candidates[1..] {
        let count = occ.count(c);
        if count > best_count {
            best = c;
            best_count = count;
            ties = 1;
        } else if count == best_count {
            ties += 1;
            if rng.below(ties) == 0 {
                best = c;
            }
        }
    }
    best
}

/// Ex-ante move rule: go to the best candidate if it is at least as crowded
/// as the current restaurant, otherwise stay.
pub fn decide_ex_ante(
    current: RestaurantId,
    candidates: &[RestaurantId],
    occ: &Occupancy,
    rng: &mut StreamRng,
) -> Result<RestaurantId> {
    if candidates.is_empty() {
        return Err(Error::invalid("decide_ex_ante needs at least one candidate"));
    }
    let best = best_candidate(candidates, occ, rng);
    Ok(if occ.count(best) >= occ.count(current) { best } else { current })
}

fn check_index(probs: &ProbabilityVector, j: RestaurantId, what: &str) -> Result<()> {
    if j.index() >= probs.len() {
        return Err(Error::invalid(format!(
            "{what} {} out of range for N = {}",
            j.0,
            probs.len()
        )));
    }
    Ok(())
}

/// Clamps negatives, divides by the sum and returns the new maximum.
pub(crate) fn renormalize_in_place(weights: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    for w in weights.iter_mut() {
        if *w < 0.0 {
            *w = 0.0;
        }
        sum += *w;
    }
    let mut max = 0.0f64;
    for w in weights.iter_mut() {
        *w /= sum;
        max = max.max(*w);
    }
    max
}

pub(crate) fn symmetric_in_place(weights: &mut [f64], winner: RestaurantId, losers: &[RestaurantId], f1: f64, f2: f64) -> f64 {
    let w = &mut weights[winner.index()];
    *w += f1 * (1.0 - *w);
    for l in losers {
        let p = &mut weights[l.index()];
        *p -= f2 * *p;
    }
    renormalize_in_place(weights)
}

pub(crate) fn asymmetric_in_place(weights: &mut [f64], winner: RestaurantId, f: f64) -> f64 {
    let keep = 1.0 - f;
    for (j, p) in weights.iter_mut().enumerate() {
        if j == winner.index() {
            *p += f * (1.0 - *p);
        } else {
            *p *= keep;
        }
    }
    renormalize_in_place(weights)
}

/// Reward `winner` by `f1`, punish `loser` by `f2`, renormalize.
pub fn symmetric_update(
    probs: &ProbabilityVector,
    winner: RestaurantId,
    loser: RestaurantId,
    f1: f64,
    f2: f64,
) -> Result<ProbabilityVector> {
    if winner == loser {
        return Err(Error::invalid("symmetric_update needs winner != loser"));
    }
    symmetric_update_many(probs, winner, &[loser], f1, f2)
}

/// Symmetric update with several compared losers, each punished by `f2`
/// before the single normalization.
pub fn symmetric_update_many(
    probs: &ProbabilityVector,
    winner: RestaurantId,
    losers: &[RestaurantId],
    f1: f64,
    f2: f64,
) -> Result<ProbabilityVector> {
    check_index(probs, winner, "winner")?;
    for &l in losers {
        check_index(probs, l, "loser")?;
        if l == winner {
            return Err(Error::invalid("winner may not also be a loser"));
        }
    }
    let mut w = probs.weights().to_vec();
    symmetric_in_place(&mut w, winner, losers, f1, f2);
    Ok(ProbabilityVector::from_raw(w))
}

/// The asymmetric intermediate vector before renormalization. Its sum is 1
/// analytically.
pub fn asymmetric_reinforce(probs: &ProbabilityVector, winner: RestaurantId, f: f64) -> Result<Vec<f64>> {
    check_index(probs, winner, "winner")?;
    Ok(probs
        .weights()
        .iter()
        .enumerate()
        .map(|(j, &p)| if j == winner.index() { p + f * (1.0 - p) } else { (1.0 - f) * p })
        .collect())
}

/// Reward `winner` by `f` and shrink every other entry by `1 - f`.
pub fn asymmetric_update(probs: &ProbabilityVector, winner: RestaurantId, f: f64) -> Result<ProbabilityVector> {
    check_index(probs, winner, "winner")?;
    let mut w = probs.weights().to_vec();
    asymmetric_in_place(&mut w, winner, f);
    Ok(ProbabilityVector::from_raw(w))
}

/// Reinforcement strength `m / (N - m)`.
pub fn polya_phi(m: i64, n_restaurants: usize) -> Result<f64> {
    if m < 0 {
        return Err(Error::invalid(format!("m must be >= 0, got {m}")));
    }
    if m >= n_restaurants as i64 {
        return Err(Error::invalid(format!("m must be < N ({n_restaurants}), got {m}")));
    }
    Ok(m as f64 / (n_restaurants as i64 - m) as f64)
}

/// Urn probabilities `(1 + phi * visits[j]) / (N + phi * sum(visits))`.
pub fn polya_probabilities(visits: &[u32], m: i64, n_restaurants: usize) -> Result<ProbabilityVector> {
    let phi = polya_phi(m, n_restaurants)?;
    if visits.len() != n_restaurants {
        return Err(Error::invalid(format!(
            "visit vector has length {}, expected {n_restaurants}",
            visits.len()
        )));
    }
    let total: u64 = visits.iter().map(|&v| v as u64).sum();
    let denom = n_restaurants as f64 + phi * total as f64;
    Ok(ProbabilityVector::from_raw(
        visits.iter().map(|&v| (1.0 + phi * v as f64) / denom).collect(),
    ))
}

/// Largest urn probability, from the agent's maximum visit count.
pub(crate) fn polya_max_prob(agent: &AgentState, phi: f64) -> f64 {
    let n = agent.n_restaurants() as f64;
    (1.0 + phi * agent.max_visits() as f64) / (n + phi * agent.total_visits() as f64)
}

/// Inverse-CDF draw from the urn distribution without materializing it.
pub(crate) fn sample_polya(agent: &AgentState, phi: f64, rng: &mut StreamRng) -> RestaurantId {
    let n = agent.n_restaurants();
    let total = n as f64 + phi * agent.total_visits() as f64;
    let u = rng.next_f64();
    let j = inverse_cdf(agent.visits().iter().map(|&v| 1.0 + phi * v as f64), total, u);
    RestaurantId::from(j)
}

fn ex_ante_outcome(
    agent_id: usize,
    current: RestaurantId,
    sampled: Vec<RestaurantId>,
    occ: &Occupancy,
    rng: &mut StreamRng,
) -> SlicePlan {
    let best = best_candidate(&sampled, occ, rng);
    let winner = if occ.count(best) >= occ.count(current) { best } else { current };
    let top = occ.count(winner);
    let mut losers = Vec::new();
    for &j in std::iter::once(&current).chain(sampled.iter()) {
        if j != winner && occ.count(j) < top && !losers.contains(&j) {
            losers.push(j);
        }
    }
    SlicePlan {
        agent_id,
        sampled,
        target: winner,
        winner: Some(winner),
        losers,
    }
}

/// Plans one agent's slice against the frozen occupancy `occ`.
pub fn plan_slice(
    agent_id: usize,
    agent: &AgentState,
    occ: &Occupancy,
    cfg: &StrategyConfig,
    rng: &mut StreamRng,
) -> Result<SlicePlan> {
    let current = agent.current();
    match cfg.kind {
        StrategyKind::NoLearning | StrategyKind::ExAnteSymmetric | StrategyKind::ExAnteAsymmetric => {
            let sampled = sample_candidates(agent, cfg.k, rng)?;
            Ok(ex_ante_outcome(agent_id, current, sampled, occ, rng))
        }
        StrategyKind::Polya => {
            let m = cfg.m.ok_or_else(|| Error::validation("m", "required by strategy polya"))?;
            let phi = polya_phi(m, agent.n_restaurants())?;
            let candidate = sample_polya(agent, phi, rng);
            Ok(match cfg.polya_move_rule {
                PolyaMoveRule::Compare => ex_ante_outcome(agent_id, current, vec![candidate], occ, rng),
                PolyaMoveRule::Free => SlicePlan {
                    agent_id,
                    sampled: vec![candidate],
                    target: candidate,
                    winner: None,
                    losers: Vec::new(),
                },
            })
        }
        StrategyKind::ExPostSymmetric | StrategyKind::ExPostAsymmetric => {
            let candidate = sample_restaurant(agent.probs(), rng);
            Ok(SlicePlan {
                agent_id,
                sampled: vec![candidate],
                target: candidate,
                winner: None,
                losers: Vec::new(),
            })
        }
    }
}

/// Ex-post comparison of origin and destination using post-move head
/// counts. `None` when they are the same restaurant or equally crowded.
pub fn ex_post_outcome(
    origin: RestaurantId,
    destination: RestaurantId,
    post_move: &Occupancy,
) -> Option<(RestaurantId, RestaurantId)> {
    let a = post_move.count(origin);
    let b = post_move.count(destination);
    if origin == destination || a == b {
        None
    } else if b > a {
        Some((destination, origin))
    } else {
        Some((origin, destination))
    }
}
