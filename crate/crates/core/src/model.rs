//! Domain types shared by every module plus the elementary game predicates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Absolute tolerance on the sum of a probability vector.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Index of a restaurant (one of the `N` options).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RestaurantId(pub u32);

impl RestaurantId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for RestaurantId {
    fn from(i: usize) -> Self {
        RestaurantId(i as u32)
    }
}

/// Size and schedule of a simulation. The number of restaurants always
/// equals the number of agents.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    n_agents: usize,
    horizon: u64,
    seed: u64,
    replications: usize,
}

impl SimConfig {
    pub fn new(n_agents: usize, horizon: u64, seed: u64, replications: usize) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::validation("n_agents", "must be positive"));
        }
        if n_agents > u32::MAX as usize {
            return Err(Error::validation("n_agents", "too large"));
        }
        if horizon == 0 {
            return Err(Error::validation("horizon", "must be at least 1"));
        }
        if replications == 0 {
            return Err(Error::validation("replications", "must be at least 1"));
        }
        Ok(SimConfig {
            n_agents,
            horizon,
            seed,
            replications,
        })
    }

    /// Convenience for a single replication.
    pub fn single(n_agents: usize, horizon: u64, seed: u64) -> Result<Self> {
        Self::new(n_agents, horizon, seed, 1)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_restaurants(&self) -> usize {
        self.n_agents
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replications(&self) -> usize {
        self.replications
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SimConfig { seed, ..self.clone() }
    }
}

/// A dense distribution over restaurants.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVector {
    weights: Vec<f64>,
}

impl ProbabilityVector {
    /// Validates non-negativity and normalization.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("probability vector must be nonempty"));
        }
        if let Some(j) = weights.iter().position(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid(format!(
                "weight {j} is negative or not finite: {}",
                weights[j]
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::invalid(format!("weights sum to {sum}, not 1")));
        }
        Ok(ProbabilityVector { weights })
    }

    /// Clamps negative round-off to zero and divides by the sum.
    pub fn normalize(mut weights: Vec<f64>) -> Result<Self> {
        let mut sum = 0.0;
        for w in weights.iter_mut() {
            if *w < 0.0 {
                *w = 0.0;
            }
            sum += *w;
        }
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::DegenerateData(format!(
                "cannot normalize weights with sum {sum}"
            )));
        }
        for w in weights.iter_mut() {
            *w /= sum;
        }
        Ok(ProbabilityVector { weights })
    }

    pub(crate) fn from_raw(weights: Vec<f64>) -> Self {
        ProbabilityVector { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn get(&self, j: RestaurantId) -> f64 {
        self.weights[j.index()]
    }

    pub fn max(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.weights
    }
}

/// One agent's position, strategy vector and visit history.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    current: RestaurantId,
    probs: ProbabilityVector,
    visits: Vec<u32>,
    total_visits: u64,
    max_visits: u32,
    max_prob: f64,
}

impl AgentState {
    /// Uniform strategy and an empty visit history.
    pub fn new(n_restaurants: usize, current: RestaurantId) -> Result<Self> {
        let probs = uniform_probabilities(n_restaurants)?;
        Self::with_probs(current, probs)
    }

    pub fn with_probs(current: RestaurantId, probs: ProbabilityVector) -> Result<Self> {
        if current.index() >= probs.len() {
            return Err(Error::invalid(format!(
                "restaurant {} out of range for N = {}",
                current.0,
                probs.len()
            )));
        }
        let n = probs.len();
        let max_prob = probs.max();
        Ok(AgentState {
            current,
            probs,
            visits: vec![0; n],
            total_visits: 0,
            max_visits: 0,
            max_prob,
        })
    }

    /// Replaces the visit history. Used to set up test scenarios.
    pub fn with_visits(mut self, visits: Vec<u32>) -> Result<Self> {
        if visits.len() != self.probs.len() {
            return Err(Error::invalid("visit vector length must equal N"));
        }
        self.total_visits = visits.iter().map(|&v| v as u64).sum();
        self.max_visits = visits.iter().copied().max().unwrap_or(0);
        self.visits = visits;
        Ok(self)
    }

    #[inline]
    pub fn current(&self) -> RestaurantId {
        self.current
    }

    #[inline]
    pub fn probs(&self) -> &ProbabilityVector {
        &self.probs
    }

    #[inline]
    pub fn visits(&self) -> &[u32] {
        &self.visits
    }

    #[inline]
    pub fn total_visits(&self) -> u64 {
        self.total_visits
    }

    #[inline]
    pub fn max_visits(&self) -> u32 {
        self.max_visits
    }

    /// Largest entry of the stored probability vector.
    #[inline]
    pub fn max_prob(&self) -> f64 {
        self.max_prob
    }

    pub fn n_restaurants(&self) -> usize {
        self.probs.len()
    }

    pub(crate) fn move_to(&mut self, target: RestaurantId) {
        self.current = target;
    }

    pub(crate) fn record_visit(&mut self) {
        let v = &mut self.visits[self.current.index()];
        *v += 1;
        self.total_visits += 1;
        self.max_visits = self.max_visits.max(*v);
    }

    /// Mutates the strategy vector in place; `f` returns the new maximum.
    pub(crate) fn update_probs(&mut self, f: impl FnOnce(&mut [f64]) -> f64) {
        self.max_prob = f(&mut self.probs.weights);
    }

    pub fn set_probs(&mut self, probs: ProbabilityVector) {
        debug_assert_eq!(probs.len(), self.probs.len());
        self.max_prob = probs.max();
        self.probs = probs;
    }
}

/// Head counts per restaurant for one time slice.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occupancy {
    counts: Vec<u32>,
}

impl Occupancy {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::invalid("occupancy must cover at least one restaurant"));
        }
        Ok(Occupancy { counts })
    }

    /// Tallies agent positions over `n_restaurants` restaurants.
    pub fn from_positions(
        n_restaurants: usize,
        positions: impl IntoIterator<Item = RestaurantId>,
    ) -> Self {
        let mut counts = vec![0u32; n_restaurants];
        for p in positions {
            counts[p.index()] += 1;
        }
        Occupancy { counts }
    }

    #[inline]
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    #[inline]
    pub fn count(&self, j: RestaurantId) -> u32 {
        self.counts[j.index()]
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Number of restaurants with at least one agent.
    pub fn occupied(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Largest, second and third largest head counts.
    pub fn top3(&self) -> [u32; 3] {
        let mut top = [0u32; 3];
        for &c in &self.counts {
            if c > top[0] {
                top = [c, top[0], top[1]];
            } else if c > top[1] {
                top = [top[0], c, top[1]];
            } else if c > top[2] {
                top[2] = c;
            }
        }
        top
    }

    /// Index of the most crowded restaurant, lowest index on ties.
    pub fn largest(&self) -> RestaurantId {
        let mut best = 0;
        for (j, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = j;
            }
        }
        RestaurantId::from(best)
    }
}

/// The no-information strategy: every restaurant equally likely.
pub fn uniform_probabilities(n: usize) -> Result<ProbabilityVector> {
    if n == 0 {
        return Err(Error::invalid("uniform_probabilities needs n >= 1"));
    }
    Ok(ProbabilityVector::from_raw(vec![1.0 / n as f64; n]))
}

/// Inverse-CDF draw: one uniform variate, scanning cumulative mass in
/// ascending index order.
pub fn sample_restaurant(probs: &ProbabilityVector, rng: &mut StreamRng) -> RestaurantId {
    let u = rng.next_f64();
    RestaurantId::from(inverse_cdf(probs.weights().iter().copied(), 1.0, u))
}

/// First index whose running sum of `weights` exceeds `u * total`. Falls back
/// to the last positive weight when round-off leaves the sum short of `total`.
#[inline]
pub(crate) fn inverse_cdf(weights: impl Iterator<Item = f64>, total: f64, u: f64) -> usize {
    let threshold = u * total;
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (j, w) in weights.enumerate() {
        if w > 0.0 {
            cum += w;
            last_positive = j;
            if threshold < cum {
                return j;
            }
        }
    }
    last_positive
}

/// True iff every agent sits in the same restaurant, which is exactly the
/// set of pure-strategy Nash equilibria of the majority game.
pub fn is_pure_nash(occ: &Occupancy) -> bool {
    occ.occupied() == 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::make_rng;

    #[test]
    fn config_rejects_bad_sizes() {
        assert!(SimConfig::new(0, 10, 1, 1).is_err());
        assert!(SimConfig::new(5, 0, 1, 1).is_err());
        assert!(SimConfig::new(5, 10, 1, 0).is_err());
        let c = SimConfig::new(5, 10, 1, 2).unwrap();
        assert_eq!(c.n_restaurants(), c.n_agents());
    }

    #[test]
    fn uniform_vectors() {
        assert_eq!(uniform_probabilities(4).unwrap().weights(), &[0.25; 4]);
        assert_eq!(uniform_probabilities(1).unwrap().weights(), &[1.0]);
        let p = uniform_probabilities(1000).unwrap();
        assert!(p.weights().iter().all(|&w| w == 0.001));
        assert!((p.sum() - 1.0).abs() <= NORMALIZATION_TOL);
        assert!(matches!(
            uniform_probabilities(0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn probability_vector_validation() {
        assert!(ProbabilityVector::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbabilityVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbabilityVector::new(vec![1.5, -0.5]).is_err());
        assert!(ProbabilityVector::new(vec![]).is_err());
        let p = ProbabilityVector::normalize(vec![2.0, -1e-18, 2.0]).unwrap();
        assert_eq!(p.weights(), &[0.5, 0.0, 0.5]);
        assert!(ProbabilityVector::normalize(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn degenerate_sampling() {
        let mut rng = make_rng(3, 0);
        let p = ProbabilityVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        let q = ProbabilityVector::new(vec![0.0, 0.0, 1.0]).unwrap();
        for _ in 0..1000 {
            assert_eq!(sample_restaurant(&p, &mut rng), RestaurantId(0));
            assert_eq!(sample_restaurant(&q, &mut rng), RestaurantId(2));
        }
    }

    #[test]
    fn fair_coin_sampling() {
        let mut rng = make_rng(11, 0);
        let p = ProbabilityVector::new(vec![0.5, 0.5]).unwrap();
        let zeros = (0..100_000)
            .filter(|_| sample_restaurant(&p, &mut rng) == RestaurantId(0))
            .count();
        let freq = zeros as f64 / 1e5;
        assert!((0.49..=0.51).contains(&freq), "freq = {freq}");
    }

    #[test]
    fn sampling_is_unbiased_within_five_sigma() {
        let weights = vec![0.05, 0.3, 0.0, 0.15, 0.5];
        let p = ProbabilityVector::new(weights.clone()).unwrap();
        let mut rng = make_rng(99, 4);
        let draws = 100_000usize;
        let mut hits = vec![0usize; weights.len()];
        for _ in 0..draws {
            hits[sample_restaurant(&p, &mut rng).index()] += 1;
        }
        for (j, &w) in weights.iter().enumerate() {
            let sd = (draws as f64 * w * (1.0 - w)).sqrt();
            let dev = (hits[j] as f64 - draws as f64 * w).abs();
            assert!(dev <= 5.0 * sd.max(1e-9), "index {j}: {} vs {w}", hits[j]);
        }
    }

    #[test]
    fn nash_configurations() {
        let occ = |c: &[u32]| Occupancy::new(c.to_vec()).unwrap();
        assert!(is_pure_nash(&occ(&[5, 0, 0, 0, 0])));
        assert!(!is_pure_nash(&occ(&[3, 2, 0, 0, 0])));
        assert!(is_pure_nash(&occ(&[0, 0, 0, 0, 5])));
    }

    /// Brute-force Nash check: nobody can strictly gain by joining another
    /// restaurant, where an agent's payoff is the size of her own restaurant.
    fn brute_force_nash(counts: &[u32]) -> bool {
        for (from, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            for (to, &d) in counts.iter().enumerate() {
                if to != from && d + 1 > c {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn nash_matches_exhaustive_deviation_check() {
        // every composition of 5 agents over 5 restaurants
        fn rec(prefix: &mut Vec<u32>, left: u32, slots: usize, out: &mut Vec<Vec<u32>>) {
            if slots == 1 {
                prefix.push(left);
                out.push(prefix.clone());
                prefix.pop();
                return;
            }
            for c in 0..=left {
                prefix.push(c);
                rec(prefix, left - c, slots - 1, out);
                prefix.pop();
            }
        }
        let mut all = Vec::new();
        rec(&mut Vec::new(), 5, 5, &mut all);
        assert_eq!(all.len(), 126);
        for counts in all {
            let occ = Occupancy::new(counts.clone()).unwrap();
            assert_eq!(is_pure_nash(&occ), brute_force_nash(&counts), "{counts:?}");
        }
    }

    #[test]
    fn top3_and_occupied() {
        let occ = Occupancy::new(vec![1, 7, 0, 3, 7, 2]).unwrap();
        assert_eq!(occ.top3(), [7, 7, 3]);
        assert_eq!(occ.occupied(), 5);
        assert_eq!(occ.total(), 20);
        assert_eq!(occ.largest(), RestaurantId(1));
        let single = Occupancy::new(vec![4]).unwrap();
        assert_eq!(single.top3(), [4, 0, 0]);
    }

    #[test]
    fn visits_accumulate() {
        let mut a = AgentState::new(3, RestaurantId(1)).unwrap();
        a.record_visit();
        a.record_visit();
        a.move_to(RestaurantId(2));
        a.record_visit();
        assert_eq!(a.visits(), &[0, 2, 1]);
        assert_eq!(a.total_visits(), 3);
        assert_eq!(a.max_visits(), 2);
        assert!(AgentState::new(3, RestaurantId(3)).is_err());
    }
}
