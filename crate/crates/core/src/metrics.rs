//! Post-processing: cluster statistics, distribution fits, convergence
//! scaling and the stability/efficiency trade-off.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::Trajectory;
use crate::error::{Error, Result};
use crate::model::{AgentState, Occupancy};

/// Nonzero head counts of one run at its measurement slice.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSample {
    pub sizes: Vec<u32>,
    pub run_id: usize,
}

impl ClusterSample {
    /// Checks that every size is positive and that they add up to `n_agents`.
    pub fn new(sizes: Vec<u32>, run_id: usize, n_agents: usize) -> Result<Self> {
        if sizes.contains(&0) {
            return Err(Error::invalid("cluster sizes must be positive"));
        }
        let total: u64 = sizes.iter().map(|&s| s as u64).sum();
        if total != n_agents as u64 {
            return Err(Error::invalid(format!("cluster sizes sum to {total}, expected {n_agents}")));
        }
        Ok(ClusterSample { sizes, run_id })
    }

    pub fn from_occupancy(occ: &Occupancy, run_id: usize) -> Self {
        ClusterSample {
            sizes: cluster_sizes(occ, 1),
            run_id,
        }
    }
}

/// Stability time and occupancy for one Polya reinforcement factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub m: i64,
    pub t_star: u64,
    pub occupied_fraction_at_t_star: f64,
}

/// Mean over agents of each agent's largest stored probability.
pub fn avg_max_probability(agents: &[AgentState]) -> Result<f64> {
    if agents.is_empty() {
        return Err(Error::invalid("avg_max_probability needs at least one agent"));
    }
    Ok(agents.iter().map(|a| a.probs().max()).sum::<f64>() / agents.len() as f64)
}

/// Nonzero counts of at least `min_size`, largest first.
pub fn cluster_sizes(occ: &Occupancy, min_size: u32) -> Vec<u32> {
    let mut sizes: Vec<u32> = occ.counts().iter().copied().filter(|&c| c > 0 && c >= min_size).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

/// Probability density over integer bins, keyed by the bin's lower edge.
/// Bins of width `w` are `[1, w]`, `[w + 1, 2w]`, ...
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub bin_width: u32,
    pub density: BTreeMap<u32, f64>,
    pub n_samples: usize,
}

impl Histogram {
    pub fn total_mass(&self) -> f64 {
        self.density.values().sum::<f64>() * self.bin_width as f64
    }
}

/// Pools the sizes of every sample and bins them.
pub fn cluster_pdf(samples: &[ClusterSample], bin_width: u32) -> Result<Histogram> {
    if bin_width == 0 {
        return Err(Error::invalid("bin width must be positive"));
    }
    let pooled: Vec<u32> = samples.iter().flat_map(|s| s.sizes.iter().copied()).collect();
    if pooled.is_empty() {
        return Err(Error::invalid("no cluster sizes to bin"));
    }
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &s in &pooled {
        let lower = (s.max(1) - 1) / bin_width * bin_width + 1;
        *counts.entry(lower).or_default() += 1;
    }
    let norm = pooled.len() as f64 * bin_width as f64;
    Ok(Histogram {
        bin_width,
        density: counts.into_iter().map(|(k, c)| (k, c as f64 / norm)).collect(),
        n_samples: pooled.len(),
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; needs at least two points.
fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Maximum-likelihood exponential rate, `1 / mean`.
pub fn fit_exponential(sizes: &[f64]) -> Result<f64> {
    if sizes.is_empty() {
        return Err(Error::invalid("fit_exponential needs at least one size"));
    }
    if sizes.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::invalid("sizes must be positive"));
    }
    Ok(1.0 / mean(sizes))
}

/// Method-of-moments gamma fit: `(shape, scale) = (mean^2 / var, var / mean)`.
pub fn fit_gamma(sizes: &[f64]) -> Result<(f64, f64)> {
    if sizes.len() < 2 {
        return Err(Error::DegenerateData("gamma fit needs at least two sizes".into()));
    }
    if sizes.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::invalid("sizes must be positive"));
    }
    let m = mean(sizes);
    let var = sample_variance(sizes);
    if !(var > 0.0) {
        return Err(Error::DegenerateData("sizes have zero variance".into()));
    }
    Ok((m * m / var, var / m))
}

/// First recorded slice where ⟨P_max⟩ reaches `threshold`.
pub fn tradeoff_point(traj: &Trajectory, m: i64, threshold: f64) -> Option<TradeoffPoint> {
    traj.records
        .iter()
        .find(|r| r.avg_max_prob >= threshold)
        .map(|r| TradeoffPoint {
            m,
            t_star: r.slice,
            occupied_fraction_at_t_star: r.occupied_fraction,
        })
}

/// Per-N summary of `T(N) / N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub n: usize,
    pub runs: usize,
    pub mean_ratio: f64,
    pub std_ratio: f64,
    pub mean_t: f64,
    pub std_t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceScaling {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub ratios: Vec<RatioRow>,
}

/// Least-squares line of `T` on `N` over every run, plus the ratio table.
pub fn convergence_scaling(results: &[(usize, u64)]) -> Result<ConvergenceScaling> {
    let mut by_n: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &(n, t) in results {
        if n == 0 {
            return Err(Error::invalid("N must be positive"));
        }
        by_n.entry(n).or_default().push(t as f64);
    }
    if by_n.len() < 3 {
        return Err(Error::invalid(format!(
            "convergence scaling needs at least 3 distinct N values, got {}",
            by_n.len()
        )));
    }
    let xs: Vec<f64> = results.iter().map(|&(n, _)| n as f64).collect();
    let ys: Vec<f64> = results.iter().map(|&(_, t)| t as f64).collect();
    let (slope, intercept, r_squared) = linear_fit(&xs, &ys);
    let sd = |v: &[f64]| if v.len() > 1 { sample_variance(v).sqrt() } else { 0.0 };
    let ratios = by_n
        .into_iter()
        .map(|(n, ts)| {
            let rs: Vec<f64> = ts.iter().map(|t| t / n as f64).collect();
            RatioRow {
                n,
                runs: ts.len(),
                mean_ratio: mean(&rs),
                std_ratio: sd(&rs),
                mean_t: mean(&ts),
                std_t: sd(&ts),
            }
        })
        .collect();
    Ok(ConvergenceScaling {
        slope,
        intercept,
        r_squared,
        ratios,
    })
}

/// Ordinary least squares; returns `(slope, intercept, r_squared)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r_squared)
}

/// Slope of `ln(density)` against `ln(size)` over the nonzero bins.
pub fn log_log_slope(hist: &Histogram) -> Option<f64> {
    if hist.density.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = hist.density.keys().map(|&k| (k as f64).ln()).collect();
    let ys: Vec<f64> = hist.density.values().map(|d| d.ln()).collect();
    Some(linear_fit(&xs, &ys).0)
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid("spearman needs two equally long series of length >= 2"));
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let mx = mean(&rx);
    let my = mean(&ry);
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateData("a constant series has no rank correlation".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SliceRecord;
    use crate::model::{ProbabilityVector, RestaurantId};
    use proptest::prelude::*;

    fn occ(c: &[u32]) -> Occupancy {
        Occupancy::new(c.to_vec()).unwrap()
    }

    fn traj(probs: &[f64]) -> Trajectory {
        Trajectory {
            n_agents: 4,
            records: probs
                .iter()
                .enumerate()
                .map(|(t, &p)| SliceRecord {
                    slice: t as u64,
                    occupied_count: 4 - t.min(3),
                    occupied_fraction: (4 - t.min(3)) as f64 / 4.0,
                    top_counts: [1, 1, 1],
                    avg_max_prob: p,
                    converged: false,
                })
                .collect(),
            convergence_slice: None,
            final_occupancy: occ(&[1, 1, 1, 1]),
        }
    }

    #[test]
    fn avg_max_examples() {
        let uniform: Vec<_> = (0..10).map(|_| AgentState::new(10, RestaurantId(0)).unwrap()).collect();
        assert!((avg_max_probability(&uniform).unwrap() - 0.1).abs() < 1e-15);

        let mut a = AgentState::new(3, RestaurantId(0)).unwrap();
        a.set_probs(ProbabilityVector::new(vec![0.0, 0.0, 1.0]).unwrap());
        assert_eq!(avg_max_probability(&[a.clone(), a]).unwrap(), 1.0);

        let mut b = AgentState::new(3, RestaurantId(0)).unwrap();
        b.set_probs(ProbabilityVector::new(vec![0.4, 0.3, 0.3]).unwrap());
        let mut c = AgentState::new(3, RestaurantId(0)).unwrap();
        c.set_probs(ProbabilityVector::new(vec![0.2, 0.6, 0.2]).unwrap());
        assert!((avg_max_probability(&[b, c]).unwrap() - 0.5).abs() < 1e-15);
        assert!(avg_max_probability(&[]).is_err());
    }

    #[test]
    fn cluster_size_examples() {
        assert_eq!(cluster_sizes(&occ(&[5, 0, 3, 1]), 1), vec![5, 3, 1]);
        assert_eq!(cluster_sizes(&occ(&[0, 7, 0]), 1), vec![7]);
        assert_eq!(cluster_sizes(&occ(&[5, 0, 3, 1]), 2), vec![5, 3]);
        assert!(ClusterSample::new(vec![3, 0], 0, 3).is_err());
        assert!(ClusterSample::new(vec![3, 1], 0, 5).is_err());
    }

    #[test]
    fn pdf_examples() {
        let h = cluster_pdf(&[ClusterSample::new(vec![9], 0, 9).unwrap()], 1).unwrap();
        assert_eq!(h.density.get(&9), Some(&1.0));
        let h = cluster_pdf(&[ClusterSample::new(vec![2, 2, 1, 1], 0, 6).unwrap()], 1).unwrap();
        assert_eq!(h.density.get(&1), Some(&0.5));
        assert_eq!(h.density.get(&2), Some(&0.5));
        let h = cluster_pdf(&[ClusterSample::new(vec![1, 2, 3, 4, 5], 0, 15).unwrap()], 2).unwrap();
        assert_eq!(h.density.keys().copied().collect::<Vec<_>>(), vec![1, 3, 5]);
        assert!((h.total_mass() - 1.0).abs() < 1e-12);
        assert!(cluster_pdf(&[], 1).is_err());
        assert!(cluster_pdf(&[ClusterSample { sizes: vec![], run_id: 0 }], 1).is_err());
    }

    #[test]
    fn fit_examples() {
        assert_eq!(fit_exponential(&[2.0, 2.0, 2.0]).unwrap(), 0.5);
        assert_eq!(fit_exponential(&[1.0, 2.0, 3.0]).unwrap(), 0.5);
        assert_eq!(fit_exponential(&[4.0, 4.0]).unwrap(), 0.25);
        assert!(fit_exponential(&[]).is_err());

        // mean 4, unbiased variance 2
        let (shape, scale) = fit_gamma(&[3.0, 5.0]).unwrap();
        assert!((shape - 8.0).abs() < 1e-12 && (scale - 0.5).abs() < 1e-12);
        let (shape, scale) = fit_gamma(&[1.0, 3.0]).unwrap();
        assert!((shape - 2.0).abs() < 1e-12 && (scale - 1.0).abs() < 1e-12);
        assert!(matches!(fit_gamma(&[3.0, 3.0, 3.0]), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn tradeoff_examples() {
        let p = tradeoff_point(&traj(&[1.0, 1.0]), 3, 0.8).unwrap();
        assert_eq!(p.t_star, 0);
        assert!(tradeoff_point(&traj(&[0.5; 10]), 3, 0.8).is_none());
        let p = tradeoff_point(&traj(&[0.3, 0.5, 0.85, 0.9]), 7, 0.8).unwrap();
        assert_eq!((p.m, p.t_star, p.occupied_fraction_at_t_star), (7, 2, 0.5));
    }

    #[test]
    fn scaling_examples() {
        let s = convergence_scaling(&[(10, 85), (20, 170), (30, 255)]).unwrap();
        assert!((s.slope - 8.5).abs() < 1e-12);
        assert!(s.intercept.abs() < 1e-9);
        assert!((s.r_squared - 1.0).abs() < 1e-12);
        assert!(s.ratios.iter().all(|r| (r.mean_ratio - 8.5).abs() < 1e-12));
        assert!(convergence_scaling(&[(10, 85), (20, 170), (10, 80)]).is_err());
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 300.0]).unwrap() - 1.0).abs() < 1e-12);
        // hand-computed with average ranks: x ranks (1,2,3,4), y ranks (1.5,1.5,3,4)
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[5.0, 5.0, 6.0, 7.0]).unwrap();
        assert!((r - 4.5 / (5.0f64 * 4.5).sqrt()).abs() < 1e-12);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn pdf_is_normalized(sizes in prop::collection::vec(prop::collection::vec(1u32..500, 1..40), 1..6), bin in 1u32..20) {
            let samples: Vec<_> = sizes.into_iter().enumerate().map(|(i, s)| ClusterSample { sizes: s, run_id: i }).collect();
            let h = cluster_pdf(&samples, bin).unwrap();
            prop_assert!((h.total_mass() - 1.0).abs() <= 1e-9);
            prop_assert!(h.density.values().all(|&d| d >= 0.0));
        }

        #[test]
        fn exponential_rate_is_scale_equivariant(sizes in prop::collection::vec(0.5f64..1000.0, 1..50), c in 0.01f64..100.0) {
            let scaled: Vec<f64> = sizes.iter().map(|s| s * c).collect();
            let a = fit_exponential(&sizes).unwrap() / c;
            let b = fit_exponential(&scaled).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }

        #[test]
        fn gamma_shape_is_scale_invariant(sizes in prop::collection::vec(1u32..1000, 2..50), c in 0.01f64..100.0) {
            let xs: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
            prop_assume!(xs.iter().any(|&x| x != xs[0]));
            let scaled: Vec<f64> = xs.iter().map(|s| s * c).collect();
            let (a, _) = fit_gamma(&xs).unwrap();
            let (b, _) = fit_gamma(&scaled).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }

        #[test]
        fn t_star_is_monotone_in_threshold(probs in prop::collection::vec(0.0f64..1.0, 1..60), lo in 0.0f64..1.0, hi in 0.0f64..1.0) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let t = traj(&probs);
            match (tradeoff_point(&t, 0, lo), tradeoff_point(&t, 0, hi)) {
                (Some(a), Some(b)) => prop_assert!(a.t_star <= b.t_star),
                (None, Some(_)) => prop_assert!(false, "higher threshold reached but lower one not"),
                _ => {}
            }
        }

        #[test]
        fn collinear_input_is_fitted_exactly(slope in -20.0f64..20.0, intercept in -100.0f64..100.0, ns in prop::collection::btree_set(1usize..500, 3..10)) {
            let pts: Vec<(usize, u64)> = ns.iter().map(|&n| (n, 0)).collect();
            let _ = pts;
            let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
            let ys: Vec<f64> = xs.iter().map(|x| slope * x + intercept).collect();
            let (s, i, _) = linear_fit(&xs, &ys);
            for (x, y) in xs.iter().zip(&ys) {
                prop_assert!((s * x + i - y).abs() <= 1e-9 * y.abs().max(1.0));
            }
        }
    }
}
