//! CSV rendering for `simulate` and `sweep`.
//!
//! Floats print with Rust's shortest-round-trip formatting, so rows parse
//! back to the exact values and identical runs are byte-identical.

use aoi_core::closed_form::ThresholdPolicy;
use aoi_core::optimizer;
use aoi_core::sim::{self, SimConfig, SimError, StoragePolicy};
use aoi_core::SystemParams;
use rayon::prelude::*;

pub const SIMULATE_HEADER: &str = "seed,slots,avg_cost,avg_age,storage_rate,se_avg_cost";

/// Per-seed rows plus a pooled row carrying the standard error of the mean
/// cost across seeds (empty with a single seed).
pub fn simulate_csv(
    params: &SystemParams,
    policy: &(impl StoragePolicy + Sync),
    horizon: u64,
    burn_in: u64,
    seeds: &[u64],
) -> Result<String, SimError> {
    let runs = seeds
        .par_iter()
        .map(|&seed| sim::simulate(params, policy, &SimConfig { horizon, seed, burn_in }))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = String::from(SIMULATE_HEADER);
    out.push('\n');
    for r in &runs {
        out.push_str(&format!(
            "{},{},{},{},{},\n",
            r.seed, r.slots_counted, r.avg_cost, r.avg_age, r.storage_rate
        ));
    }
    let pooled = sim::pool(&runs).expect("at least one run");
    let se = if runs.len() > 1 {
        let k = runs.len() as f64;
        let mean = runs.iter().map(|r| r.avg_cost).sum::<f64>() / k;
        let var = runs
            .iter()
            .map(|r| (r.avg_cost - mean) * (r.avg_cost - mean))
            .sum::<f64>()
            / (k - 1.0);
        format!("{}", (var / k).sqrt())
    } else {
        String::new()
    };
    out.push_str(&format!(
        "pooled,{},{},{},{},{}\n",
        pooled.slots_counted, pooled.avg_cost, pooled.avg_age, pooled.storage_rate, se
    ));
    Ok(out)
}

/// One `axis_value,v_bar,cost` row per swept value, in input order.
pub fn sweep_csv(
    axis: &str,
    values: &[f64],
    make_params: impl Fn(f64) -> SystemParams + Sync,
    brute_force: bool,
) -> Result<String, aoi_core::closed_form::ClosedFormError> {
    let rows = values
        .par_iter()
        .map(|&x| {
            let params = make_params(x);
            let r = if brute_force {
                optimizer::brute_force_threshold(&params, optimizer::DEFAULT_SEARCH_BOUND)?
            } else {
                optimizer::find_optimal_threshold(&params)?
            };
            Ok(format!("{},{},{}\n", x, r.policy, r.cost))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = format!("{axis},v_bar,cost\n");
    rows.into_iter().for_each(|r| out.push_str(&r));
    Ok(out)
}

/// Threshold column of a sweep, for monotonicity checks ("inf" sorts last).
pub fn thresholds_of(csv: &str) -> Vec<ThresholdPolicy> {
    csv.lines()
        .skip(1)
        .map(|line| line.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulate_csv_shape_and_determinism() {
        let pr = SystemParams::new(0.5, 0.5, 1.0).unwrap();
        let a = simulate_csv(&pr, &ThresholdPolicy::AtAge(3), 50_000, 500, &[1, 2, 3]).unwrap();
        let b = simulate_csv(&pr, &ThresholdPolicy::AtAge(3), 50_000, 500, &[1, 2, 3]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 5);
        assert!(a.starts_with(SIMULATE_HEADER));
        assert!(a.lines().last().unwrap().starts_with("pooled,"));
    }

    #[test]
    fn sweep_csv_rows() {
        let csv = sweep_csv(
            "p",
            &[0.2, 0.5, 0.8],
            |p| SystemParams::new(p, 0.5, 2.0).unwrap(),
            false,
        )
        .unwrap();
        assert_eq!(csv.lines().next().unwrap(), "p,v_bar,cost");
        assert_eq!(csv.lines().count(), 4);
        assert_eq!(thresholds_of(&csv).len(), 3);
    }
}
