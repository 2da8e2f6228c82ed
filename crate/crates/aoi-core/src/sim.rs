//! Slot-level Monte Carlo simulation under an arbitrary storage policy.
//!
//! Each slot draws the arrival and the channel outcome (in that fixed order,
//! even when unused, so traces are reproducible across refactors), applies
//! the policy's storage decision when a fresh packet is present, and advances
//! the age: 1 on a fresh delivery, 2 on a buffered delivery, `v+1` otherwise.
//! The per-slot cost is the current age plus the storage charge. Runs are
//! bit-reproducible per seed.

use core::fmt;

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::closed_form::ThresholdPolicy;
use crate::mdp::TabularPolicy;
use crate::model::{Action, State, SystemParams};
use crate::rng::SplitMix64;

/// Storage rule consulted when a fresh packet arrives.
pub trait StoragePolicy {
    fn stores(&self, s: State) -> bool;
}

impl StoragePolicy for ThresholdPolicy {
    fn stores(&self, s: State) -> bool {
        self.stores(s.age)
    }
}

impl StoragePolicy for TabularPolicy {
    fn stores(&self, s: State) -> bool {
        self.action(s) == Action::Store
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    /// Total slots simulated.
    pub horizon: u64,
    pub seed: u64,
    /// Leading slots excluded from all averages and the histogram.
    pub burn_in: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { horizon: 1_000_000, seed: 1, burn_in: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimError {
    /// `horizon` must exceed `burn_in`.
    BurnInExceedsHorizon { horizon: u64, burn_in: u64 },
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SimError::BurnInExceedsHorizon { horizon, burn_in } => {
                write!(f, "horizon ({horizon}) must be greater than burn_in ({burn_in})")
            }
        }
    }
}

/// Empirical averages over the counted (post-burn-in) slots.
#[derive(Debug, Clone, PartialEq)]
pub struct SimStats {
    pub avg_cost: f64,
    pub avg_age: f64,
    /// Storage decisions per counted slot.
    pub storage_rate: f64,
    pub age_histogram: BTreeMap<u32, u64>,
    pub slots_counted: u64,
    pub seed: u64,
}

/// Runs the chain for `config.horizon` slots from age 1 with an empty buffer.
pub fn simulate(
    params: &SystemParams,
    policy: &impl StoragePolicy,
    config: &SimConfig,
) -> Result<SimStats, SimError> {
    if config.horizon <= config.burn_in {
        return Err(SimError::BurnInExceedsHorizon {
            horizon: config.horizon,
            burn_in: config.burn_in,
        });
    }
    let (p, q, c) = (params.p(), params.q(), params.c());
    let mut rng = SplitMix64::new(config.seed);
    let mut age: u32 = 1;
    let mut buffered = false;
    let mut sum_age: u64 = 0;
    let mut stores: u64 = 0;
    let mut hist: Vec<u64> = Vec::new();
    for t in 0..config.horizon {
        // fixed consumption order: arrival first, then channel
        let arrival = rng.bernoulli(p);
        let success = rng.bernoulli(q);
        let counted = t >= config.burn_in;
        if counted {
            sum_age += u64::from(age);
            let slot = age as usize;
            if hist.len() <= slot {
                hist.resize(slot + 1, 0);
            }
            hist[slot] += 1;
        }
        let had_buffer = buffered;
        let next_age;
        if arrival {
            let store = policy.stores(State::new(age, true, buffered));
            if counted && store {
                stores += 1;
            }
            next_age = if success { 1 } else { age + 1 };
            buffered = store; // a previously buffered packet is overwritten or dropped
        } else if buffered {
            next_age = if success { 2 } else { age + 1 };
            buffered = false;
        } else {
            next_age = age + 1;
            buffered = false;
        }
        // resets come only from deliveries, and a stored packet survives
        // exactly one slot
        assert!(next_age == age + 1 || next_age == 1 || next_age == 2);
        assert!(!buffered || arrival);
        assert!(!(had_buffer && !arrival && buffered));
        age = next_age;
    }
    let n = config.horizon - config.burn_in;
    let avg_age = sum_age as f64 / n as f64;
    let storage_rate = stores as f64 / n as f64;
    Ok(SimStats {
        avg_cost: avg_age + c * storage_rate,
        avg_age,
        storage_rate,
        age_histogram: hist
            .iter()
            .enumerate()
            .filter(|&(_, &count)| count > 0)
            .map(|(age, &count)| (age as u32, count))
            .collect(),
        slots_counted: n,
        seed: config.seed,
    })
}

/// Histogram normalized to a probability mass function over ages.
pub fn empirical_age_distribution(stats: &SimStats) -> Vec<(u32, f64)> {
    if stats.slots_counted == 0 {
        return Vec::new();
    }
    let n = stats.slots_counted as f64;
    stats
        .age_histogram
        .iter()
        .map(|(&age, &count)| (age, count as f64 / n))
        .collect()
}

/// Merges independent runs by slot-weighted averaging; the merged seed is 0.
pub fn pool(runs: &[SimStats]) -> Option<SimStats> {
    let total: u64 = runs.iter().map(|r| r.slots_counted).sum();
    if total == 0 {
        return None;
    }
    let weighted = |f: fn(&SimStats) -> f64| {
        runs.iter().map(|r| f(r) * r.slots_counted as f64).sum::<f64>() / total as f64
    };
    let mut hist = BTreeMap::new();
    for r in runs {
        for (&age, &count) in &r.age_histogram {
            *hist.entry(age).or_insert(0) += count;
        }
    }
    Some(SimStats {
        avg_cost: weighted(|r| r.avg_cost),
        avg_age: weighted(|r| r.avg_age),
        storage_rate: weighted(|r| r.storage_rate),
        age_histogram: hist,
        slots_counted: total,
        seed: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{average_cost, stationary_distribution};

    fn params(p: f64, q: f64, c: f64) -> SystemParams {
        SystemParams::new(p, q, c).unwrap()
    }

    #[test]
    fn burn_in_validation() {
        let cfg = SimConfig { horizon: 100, seed: 1, burn_in: 100 };
        assert!(simulate(&params(0.5, 0.5, 1.0), &ThresholdPolicy::Never, &cfg).is_err());
    }

    #[test]
    fn determinism_per_seed() {
        let pr = params(0.3, 0.7, 2.0);
        let cfg = SimConfig { horizon: 50_000, seed: 9, burn_in: 100 };
        let a = simulate(&pr, &ThresholdPolicy::AtAge(3), &cfg).unwrap();
        let b = simulate(&pr, &ThresholdPolicy::AtAge(3), &cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate(
            &pr,
            &ThresholdPolicy::AtAge(3),
            &SimConfig { seed: 10, ..cfg },
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn never_policy_never_stores() {
        let pr = params(0.5, 0.5, 7.0);
        let cfg = SimConfig { horizon: 200_000, seed: 3, burn_in: 1000 };
        let stats = simulate(&pr, &ThresholdPolicy::Never, &cfg).unwrap();
        assert_eq!(stats.storage_rate, 0.0);
        assert_eq!(stats.avg_cost, stats.avg_age);
        // mean age of the never-store chain is 1/(pq) = 4
        assert!((stats.avg_age - 4.0).abs() < 0.1, "{}", stats.avg_age);
    }

    #[test]
    fn accounting_identity_and_histogram_total() {
        let pr = params(0.4, 0.6, 1.5);
        let cfg = SimConfig { horizon: 300_000, seed: 5, burn_in: 2000 };
        let stats = simulate(&pr, &ThresholdPolicy::AtAge(4), &cfg).unwrap();
        assert_eq!(stats.slots_counted, 298_000);
        let total: u64 = stats.age_histogram.values().sum();
        assert_eq!(total, stats.slots_counted);
        let identity = stats.avg_age + pr.c() * stats.storage_rate;
        assert!((stats.avg_cost - identity).abs() < 1e-12);
        // support starts at age 1
        assert_eq!(*stats.age_histogram.keys().next().unwrap(), 1);
    }

    #[test]
    fn empirical_distribution_normalizes() {
        let pr = params(0.5, 0.5, 1.0);
        let cfg = SimConfig { horizon: 100_000, seed: 2, burn_in: 500 };
        let stats = simulate(&pr, &ThresholdPolicy::AtAge(2), &cfg).unwrap();
        let pmf = empirical_age_distribution(&stats);
        let total: f64 = pmf.iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(pmf[0].0 >= 1);
    }

    #[test]
    fn matches_closed_form_at_moderate_horizon() {
        let pr = params(0.5, 0.5, 1.0);
        let cfg = SimConfig { horizon: 2_000_000, seed: 1, burn_in: 10_000 };
        let stats = simulate(&pr, &ThresholdPolicy::AtAge(3), &cfg).unwrap();
        let f = average_cost(&pr, ThresholdPolicy::AtAge(3)).unwrap();
        assert!(
            (stats.avg_cost - f).abs() / f < 0.01,
            "sim {} vs closed form {f}",
            stats.avg_cost
        );
        // threshold decay ratio h(v̄+1)/h(v̄) ≈ 1-pq
        let dist = stationary_distribution(&pr, 3).unwrap();
        let h3 = stats.age_histogram[&3] as f64 / stats.slots_counted as f64;
        let h4 = stats.age_histogram[&4] as f64 / stats.slots_counted as f64;
        assert!((h4 / h3 - 0.75).abs() < 0.01, "{}", h4 / h3);
        assert!((h3 - dist.prob(3)).abs() < 0.005);
    }

    #[test]
    fn tabular_policy_drives_simulation() {
        // a solved policy and its extracted threshold simulate identically
        let pr = params(0.5, 0.5, 2.0);
        let (_, policy, _) =
            crate::mdp::relative_value_iteration(&pr, 400, 1e-10, 100_000).unwrap();
        let threshold = crate::mdp::extract_threshold(&policy).policy().unwrap();
        let cfg = SimConfig { horizon: 500_000, seed: 8, burn_in: 1000 };
        let a = simulate(&pr, &policy, &cfg).unwrap();
        let b = simulate(&pr, &threshold, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pooling_weights_by_slots() {
        let pr = params(0.5, 0.5, 1.0);
        let runs: Vec<SimStats> = (1..=4)
            .map(|seed| {
                simulate(
                    &pr,
                    &ThresholdPolicy::AtAge(2),
                    &SimConfig { horizon: 100_000, seed, burn_in: 1000 },
                )
                .unwrap()
            })
            .collect();
        let pooled = pool(&runs).unwrap();
        assert_eq!(pooled.slots_counted, 4 * 99_000);
        let manual: f64 =
            runs.iter().map(|r| r.avg_cost).sum::<f64>() / 4.0;
        assert!((pooled.avg_cost - manual).abs() < 1e-12);
        assert!(pool(&[]).is_none());
    }
}
