//! Independent ground-truth oracles for the closed forms.
//!
//! The primary oracle computes the stationary age distribution of the
//! truncated chain directly from the transition kernel under a given storage
//! policy, as a linear solve: ages only ever step up by one or reset to 1 or
//! 2, so every age block is a linear image of the age-1 and age-2 blocks,
//! and the chain closes through an 8x8 system in those two blocks. A plain
//! power-iteration oracle cross-validates the solver itself.
//!
//! Nothing here uses the closed-form module; the kernel is the only input.

use aoi_core::closed_form::{StationaryDist, ThresholdPolicy};
use aoi_core::mdp::capped_transitions;
use aoi_core::model::{Action, State, SystemParams};

/// Flows out of one age block, split by target: reset to age 1, arrival at
/// age 2 (reset or growth from age 1), and growth to the next block.
struct BlockFlow {
    to_one: [f64; 4],
    to_two: [f64; 4],
    up: [f64; 4],
}

fn sub_index(s: State) -> usize {
    2 * usize::from(s.fresh) + usize::from(s.buffered)
}

fn flow_from_block(
    params: &SystemParams,
    policy: ThresholdPolicy,
    v_max: u32,
    age: u32,
    block: &[f64; 4],
) -> BlockFlow {
    let mut flow = BlockFlow { to_one: [0.0; 4], to_two: [0.0; 4], up: [0.0; 4] };
    for (k, &mass) in block.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let fresh = k & 2 != 0;
        let buffered = k & 1 != 0;
        let action = if fresh && policy.stores(age) {
            Action::Store
        } else {
            Action::Discard
        };
        let entries =
            capped_transitions(params, State::new(age, fresh, buffered), action, v_max).unwrap();
        for e in entries {
            let target = match e.next.age {
                1 => &mut flow.to_one,
                2 => &mut flow.to_two,
                _ => &mut flow.up,
            };
            target[sub_index(e.next)] += mass * e.prob;
        }
    }
    flow
}

fn add4(a: &mut [f64; 4], b: &[f64; 4]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

/// Propagates given age-1/age-2 blocks through the whole age range. Returns
/// the resulting inflows to ages 1 and 2, the total mass, and the per-age
/// masses.
fn propagate(
    params: &SystemParams,
    policy: ThresholdPolicy,
    v_max: u32,
    b1: [f64; 4],
    b2: [f64; 4],
) -> ([f64; 4], [f64; 4], f64, Vec<f64>) {
    let mut to_one = [0.0; 4];
    let mut to_two = [0.0; 4];
    let mut ages = vec![0.0; v_max as usize];
    let mut mass = 0.0;

    let mut absorb = |block: &[f64; 4], age: u32, mass: &mut f64, ages: &mut Vec<f64>| {
        let total: f64 = block.iter().sum();
        *mass += total;
        ages[age as usize - 1] = total;
    };

    absorb(&b1, 1, &mut mass, &mut ages);
    let f = flow_from_block(params, policy, v_max, 1, &b1);
    add4(&mut to_one, &f.to_one);
    add4(&mut to_two, &f.to_two);
    debug_assert!(f.up.iter().all(|&x| x == 0.0));

    let mut cur = b2;
    for age in 2..v_max {
        absorb(&cur, age, &mut mass, &mut ages);
        let f = flow_from_block(params, policy, v_max, age, &cur);
        add4(&mut to_one, &f.to_one);
        add4(&mut to_two, &f.to_two);
        cur = f.up;
    }

    // cap block: saturated growth feeds back into it, so solve
    // b_cap (I - U_self) = inflow before collecting its resets
    if v_max == 2 {
        // age 2 is the cap and already part of the unknowns
        absorb(&cur, 2, &mut mass, &mut ages);
        let f = flow_from_block(params, policy, v_max, 2, &cur);
        add4(&mut to_one, &f.to_one);
        add4(&mut to_two, &f.to_two);
        debug_assert!(f.up.iter().all(|&x| x == 0.0));
    } else {
        let mut unit_flows = Vec::with_capacity(4);
        for k in 0..4 {
            let mut unit = [0.0; 4];
            unit[k] = 1.0;
            unit_flows.push(flow_from_block(params, policy, v_max, v_max, &unit));
        }
        // (I - U_self)^T x = inflow^T
        let mut m = [[0.0f64; 4]; 4];
        for (k, f) in unit_flows.iter().enumerate() {
            for j in 0..4 {
                m[j][k] = f64::from(u8::from(j == k)) - f.up[j];
            }
        }
        let b_cap = solve4(m, cur);
        absorb(&b_cap, v_max, &mut mass, &mut ages);
        for (k, f) in unit_flows.iter().enumerate() {
            for j in 0..4 {
                to_one[j] += b_cap[k] * f.to_one[j];
                to_two[j] += b_cap[k] * f.to_two[j];
            }
        }
    }
    (to_one, to_two, mass, ages)
}

fn solve4(mut m: [[f64; 4]; 4], mut rhs: [f64; 4]) -> [f64; 4] {
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..4 {
            let factor = m[row][col] / m[col][col];
            for j in col..4 {
                m[row][j] -= factor * m[col][j];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let mut acc = rhs[row];
        for j in row + 1..4 {
            acc -= m[row][j] * x[j];
        }
        x[row] = acc / m[row][row];
    }
    x
}

fn solve_dense(n: usize, mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let factor = m[row][col] / m[col][col];
            for j in col..n {
                let head = m[col][j];
                m[row][j] -= factor * head;
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for j in row + 1..n {
            acc -= m[row][j] * x[j];
        }
        x[row] = acc / m[row][row];
    }
    x
}

/// Stationary age distribution of the truncated chain under a threshold
/// policy, as the solution of a linear system built from the kernel.
pub fn stationary_age_pmf(params: &SystemParams, policy: ThresholdPolicy, v_max: u32) -> Vec<f64> {
    assert!(v_max >= 2);
    // response of (inflow_1, inflow_2, mass) to each unit of the unknown
    // age-1/age-2 blocks
    let mut a = vec![vec![0.0f64; 8]; 8];
    let mut mass_row = vec![0.0f64; 8];
    for k in 0..8 {
        let mut b1 = [0.0; 4];
        let mut b2 = [0.0; 4];
        if k < 4 {
            b1[k] = 1.0;
        } else {
            b2[k - 4] = 1.0;
        }
        let (f1, f2, mass, _) = propagate(params, policy, v_max, b1, b2);
        for j in 0..4 {
            a[j][k] = f1[j];
            a[4 + j][k] = f2[j];
        }
        mass_row[k] = mass;
    }
    // stationarity (x = A x) with total mass 1; the mass equation replaces
    // one redundant balance row
    let mut m: Vec<Vec<f64>> = (0..8)
        .map(|i| (0..8).map(|j| a[i][j] - f64::from(u8::from(i == j))).collect())
        .collect();
    m[7] = mass_row;
    let mut rhs = vec![0.0; 8];
    rhs[7] = 1.0;
    let x = solve_dense(8, m, rhs);
    let b1 = [x[0], x[1], x[2], x[3]];
    let b2 = [x[4], x[5], x[6], x[7]];
    let (_, _, _, ages) = propagate(params, policy, v_max, b1, b2);
    ages
}

/// Power-iteration fallback oracle over the full truncated state space;
/// used to validate the linear-solve oracle itself.
pub fn stationary_age_pmf_power(
    params: &SystemParams,
    policy: ThresholdPolicy,
    v_max: u32,
) -> Vec<f64> {
    let n = 4 * v_max as usize;
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for i in 0..n {
        let s = State::from_index(i);
        let action = if s.fresh && policy.stores(s.age) {
            Action::Store
        } else {
            Action::Discard
        };
        let entries = capped_transitions(params, s, action, v_max).unwrap();
        rows.push(entries.iter().map(|e| (e.next.index(), e.prob)).collect());
    }
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..400_000 {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (i, row) in rows.iter().enumerate() {
            let m = pi[i];
            if m > 0.0 {
                for &(j, p) in row {
                    next[j] += m * p;
                }
            }
        }
        let diff = pi
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut pi, &mut next);
        if diff < 1e-15 {
            break;
        }
    }
    (0..v_max as usize)
        .map(|v| pi[4 * v..4 * v + 4].iter().sum())
        .collect()
}

/// Direct summation of `Σ h(v) (v + c p 1{v ≥ v̄})` over the analytic
/// distribution, Kahan-compensated, until the tail is exhausted.
pub fn summed_average_cost(params: &SystemParams, dist: &StationaryDist) -> f64 {
    let cp = params.c() * params.p();
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut v = 1u32;
    loop {
        let h = dist.prob(v);
        let charge = if v >= dist.v_bar() { cp } else { 0.0 };
        let term = h * (v as f64 + charge) - comp;
        let t = sum + term;
        comp = (t - sum) - term;
        sum = t;
        if v > dist.v_bar() + 50 && h * (v as f64 + cp) < 1e-22 {
            return sum;
        }
        v += 1;
        assert!(v < 5_000_000, "tail did not converge");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use aoi_core::closed_form::{average_cost, stationary_distribution};

    fn params(p: f64, q: f64, c: f64) -> SystemParams {
        SystemParams::new(p, q, c).unwrap()
    }

    #[test]
    fn linear_solve_matches_frozen_values() {
        let pmf = stationary_age_pmf(&params(0.5, 0.5, 1.0), ThresholdPolicy::AtAge(2), 300);
        assert!((pmf[0] - 0.25).abs() < 1e-13);
        assert!((pmf[1] - 0.234375).abs() < 1e-13);
        assert!((pmf[2] - 0.17578125).abs() < 1e-13);
        let total: f64 = pmf.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_solve_agrees_with_power_iteration() {
        for (p, q, v_bar) in [(0.3, 0.7, 4), (0.2, 0.2, 3), (0.8, 0.5, 7)] {
            let pr = params(p, q, 1.0);
            let a = stationary_age_pmf(&pr, ThresholdPolicy::AtAge(v_bar), 400);
            let b = stationary_age_pmf_power(&pr, ThresholdPolicy::AtAge(v_bar), 400);
            let worst = a
                .iter()
                .zip(&b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-11, "p={p} q={q} v̄={v_bar}: {worst}");
        }
    }

    #[test]
    fn never_policy_gives_geometric_ages() {
        // independent analytic check: without storage the age is geometric
        let pr = params(0.4, 0.6, 1.0);
        let pmf = stationary_age_pmf(&pr, ThresholdPolicy::Never, 300);
        let pq = 0.24;
        for v in 1..=40u32 {
            let expect = pq * (1.0 - pq).powi(v as i32 - 1);
            assert!((pmf[v as usize - 1] - expect).abs() < 1e-13, "age {v}");
        }
    }

    #[test]
    fn tiny_truncation_still_solves() {
        let pmf = stationary_age_pmf(&params(0.5, 0.5, 1.0), ThresholdPolicy::AtAge(2), 2);
        assert_eq!(pmf.len(), 2);
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // the capped chain at v_max=2: reset rate pq from both ages
        assert!((pmf[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn summation_oracle_matches_closed_cost() {
        let pr = params(0.3, 0.7, 2.0);
        let dist = stationary_distribution(&pr, 4).unwrap();
        let f = average_cost(&pr, ThresholdPolicy::AtAge(4)).unwrap();
        assert!((summed_average_cost(&pr, &dist) - f).abs() < 1e-12);
    }
}
