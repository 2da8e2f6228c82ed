//! Value iteration on the age-truncated MDP.
//!
//! The countable state space is truncated at `v_max`: ages saturate there
//! (`v+1` maps back to `v_max`) until a delivery resets them, which keeps the
//! kernel stochastic. The truncation error decays geometrically since every
//! slot escapes the cap with probability at least `pq`.
//!
//! Two solvers are provided: plain discounted value iteration and relative
//! value iteration for the average-cost problem, anchored at state `(1,1,1)`.
//! Helpers verify the structure of the solution: value monotonicity in age,
//! the buffered-value difference inequality behind switch-type optimality,
//! and extraction of the storage threshold from a tabular policy.

use core::fmt;

use alloc::vec;
use alloc::vec::Vec;

use crate::closed_form::ThresholdPolicy;
use crate::model::{self, Action, State, SystemParams, Transitions};

pub const DEFAULT_V_MAX: u32 = 2000;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// Slack used when checking value monotonicity in age.
pub const MONOTONE_TOL: f64 = 1e-10;

/// Transition kernel with ages saturated at `v_max`; entries with the same
/// capped successor are merged.
pub fn capped_transitions(
    params: &SystemParams,
    s: State,
    a: Action,
    v_max: u32,
) -> Result<Transitions, model::ModelError> {
    if v_max < 2 {
        return Err(model::ModelError::TruncationTooSmall(v_max));
    }
    let raw = model::transition(params, s, a)?;
    let mut out = Transitions::new();
    for e in raw {
        let next = State::new(e.next.age.min(v_max), e.next.fresh, e.next.buffered);
        if let Some(existing) = out.iter_mut().find(|x| x.next == next) {
            existing.prob += e.prob;
        } else {
            out.push(model::TransitionEntry { next, prob: e.prob });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValueKind {
    Discounted { alpha: f64 },
    Bias,
}

/// Value function over the truncated state space, indexed canonically.
#[derive(Debug, Clone)]
pub struct ValueTable {
    v_max: u32,
    kind: ValueKind,
    values: Vec<f64>,
}

impl ValueTable {
    pub fn v_max(&self) -> u32 {
        self.v_max
    }

    pub fn kind(&self) -> ValueKind {
        self.kind
    }

    pub fn get(&self, s: State) -> f64 {
        self.values[s.index()]
    }
}

/// Stationary deterministic policy on the truncated space. States without a
/// fresh packet always map to [`Action::Discard`].
#[derive(Debug, Clone)]
pub struct TabularPolicy {
    v_max: u32,
    actions: Vec<Action>,
}

impl TabularPolicy {
    pub fn v_max(&self) -> u32 {
        self.v_max
    }

    /// Action at `s`; ages beyond the table saturate at `v_max`.
    pub fn action(&self, s: State) -> Action {
        if !s.fresh {
            return Action::Discard;
        }
        let clamped = State::new(s.age.min(self.v_max), s.fresh, s.buffered);
        self.actions[clamped.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Size of the last update: sup-norm for discounted solves, span
    /// seminorm for average-cost solves.
    pub residual: f64,
    /// Average cost per slot; present for bias solves only.
    pub gain: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveError {
    InvalidDiscount(f64),
    InvalidTolerance(f64),
    TruncationTooSmall(u32),
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SolveError::InvalidDiscount(a) => write!(f, "alpha must be in (0,1), got {a}"),
            SolveError::InvalidTolerance(t) => write!(f, "tol must be > 0, got {t}"),
            SolveError::TruncationTooSmall(v) => write!(f, "v_max must be >= 2, got {v}"),
        }
    }
}

/// Precomputed kernel rows: capped stage cost and successor list per
/// (state, action).
struct Backup {
    n: usize,
    cost: [Vec<f64>; 2],
    succ: [Vec<Vec<(usize, f64)>>; 2],
}

impl Backup {
    fn new(params: &SystemParams, v_max: u32) -> Self {
        let states = model::enumerate_states(v_max).expect("v_max checked by caller");
        let n = states.len();
        let mut cost = [vec![0.0; n], vec![f64::NAN; n]];
        let mut succ = [vec![Vec::new(); n], vec![Vec::new(); n]];
        for s in states {
            let i = s.index();
            for (slot, action) in [(0, Action::Discard), (1, Action::Store)] {
                if action == Action::Store && !s.fresh {
                    continue;
                }
                let entries = capped_transitions(params, s, action, v_max).unwrap();
                // stage cost of the truncated MDP: charge plus expected
                // *capped* next age, so gain matches the capped chain exactly
                let charge = if action == Action::Store { params.c() } else { 0.0 };
                cost[slot][i] = charge
                    + entries
                        .iter()
                        .map(|e| e.next.age as f64 * e.prob)
                        .sum::<f64>();
                succ[slot][i] = entries.iter().map(|e| (e.next.index(), e.prob)).collect();
            }
        }
        Self { n, cost, succ }
    }

    /// One Bellman sweep: `out[s] = min_a cost(s,a) + scale * Σ P v`.
    fn sweep(&self, v: &[f64], scale: f64, out: &mut [f64]) {
        for i in 0..self.n {
            let discard = self.cost[0][i]
                + scale
                    * self.succ[0][i]
                        .iter()
                        .map(|&(j, p)| p * v[j])
                        .sum::<f64>();
            let best = if self.succ[1][i].is_empty() {
                discard
            } else {
                let store = self.cost[1][i]
                    + scale
                        * self.succ[1][i]
                            .iter()
                            .map(|&(j, p)| p * v[j])
                            .sum::<f64>();
                discard.min(store)
            };
            out[i] = best;
        }
    }

    /// Greedy action values; the second is `None` when storing is illegal.
    fn action_values(&self, i: usize, v: &[f64], scale: f64) -> (f64, Option<f64>) {
        let value = |slot: usize| {
            self.cost[slot][i]
                + scale
                    * self.succ[slot][i]
                        .iter()
                        .map(|&(j, p)| p * v[j])
                        .sum::<f64>()
        };
        let discard = value(0);
        let store = (!self.succ[1][i].is_empty()).then(|| value(1));
        (discard, store)
    }
}

fn check_common(v_max: u32, tol: f64) -> Result<(), SolveError> {
    if v_max < 2 {
        return Err(SolveError::TruncationTooSmall(v_max));
    }
    if !(tol > 0.0) {
        return Err(SolveError::InvalidTolerance(tol));
    }
    Ok(())
}

/// Discounted value iteration from `V_0 = 0`. Stops when the sup-norm of the
/// update falls below `tol`; the report flags whether that happened within
/// `max_iter` (a non-converged table is returned as-is, never silently).
pub fn discounted_value_iteration(
    params: &SystemParams,
    alpha: f64,
    v_max: u32,
    tol: f64,
    max_iter: usize,
) -> Result<(ValueTable, SolveReport), SolveError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SolveError::InvalidDiscount(alpha));
    }
    check_common(v_max, tol)?;
    let backup = Backup::new(params, v_max);
    let mut v = vec![0.0; backup.n];
    let mut next = vec![0.0; backup.n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        backup.sweep(&v, alpha, &mut next);
        residual = v
            .iter()
            .zip(&next)
            .map(|(a, b)| libm::fabs(b - a))
            .fold(0.0, f64::max);
        core::mem::swap(&mut v, &mut next);
        iterations += 1;
        if residual < tol {
            converged = true;
            break;
        }
    }
    Ok((
        ValueTable { v_max, kind: ValueKind::Discounted { alpha }, values: v },
        SolveReport { iterations, residual, gain: None, converged },
    ))
}

/// Relative value iteration for the average-cost problem, anchored at
/// `(1,1,1)`. Stops on the span seminorm of the update; the gain estimate is
/// the pre-normalization value at the anchor.
pub fn relative_value_iteration(
    params: &SystemParams,
    v_max: u32,
    tol: f64,
    max_iter: usize,
) -> Result<(ValueTable, TabularPolicy, SolveReport), SolveError> {
    check_common(v_max, tol)?;
    let backup = Backup::new(params, v_max);
    let anchor = State::new(1, true, true).index();
    let mut h = vec![0.0; backup.n];
    let mut next = vec![0.0; backup.n];
    let mut gain = 0.0;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        backup.sweep(&h, 1.0, &mut next);
        gain = next[anchor];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (a, b) in h.iter().zip(next.iter_mut()) {
            *b -= gain;
            let d = *b - a;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        residual = hi - lo;
        core::mem::swap(&mut h, &mut next);
        iterations += 1;
        if residual < tol {
            converged = true;
            break;
        }
    }
    let table = ValueTable { v_max, kind: ValueKind::Bias, values: h };
    let policy = greedy_policy(params, &table);
    Ok((
        table,
        policy,
        SolveReport { iterations, residual, gain: Some(gain), converged },
    ))
}

/// Greedy policy of a value table; ties break toward not storing.
pub fn greedy_policy(params: &SystemParams, table: &ValueTable) -> TabularPolicy {
    let scale = match table.kind {
        ValueKind::Discounted { alpha } => alpha,
        ValueKind::Bias => 1.0,
    };
    let backup = Backup::new(params, table.v_max);
    let mut actions = vec![Action::Discard; backup.n];
    for (i, slot) in actions.iter_mut().enumerate() {
        let (discard, store) = backup.action_values(i, &table.values, scale);
        if let Some(store) = store {
            if store < discard {
                *slot = Action::Store;
            }
        }
    }
    TabularPolicy { v_max: table.v_max, actions }
}

/// A pair of adjacent ages whose values decrease.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneViolation {
    pub fresh: bool,
    pub buffered: bool,
    pub age: u32,
    pub value: f64,
    pub next_value: f64,
}

/// Checks that the value function increases with age for each fixed
/// `(λ, b)`. The capped age `v_max` is excluded (truncation artifact).
pub fn check_monotone_in_age(table: &ValueTable) -> Vec<MonotoneViolation> {
    let mut violations = Vec::new();
    for fresh in [false, true] {
        for buffered in [false, true] {
            for age in 1..table.v_max - 1 {
                let value = table.get(State::new(age, fresh, buffered));
                let next_value = table.get(State::new(age + 1, fresh, buffered));
                if next_value < value - MONOTONE_TOL {
                    violations.push(MonotoneViolation { fresh, buffered, age, value, next_value });
                }
            }
        }
    }
    violations
}

/// Shape of a tabular policy's storage rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdExtraction {
    /// Stores exactly at ages `>= v_bar` (for both buffer flags). Thresholds
    /// of 1 do occur when storage is cheap enough.
    Threshold { v_bar: u32 },
    /// No state stores.
    Never,
    /// Not a threshold rule; `age` is the first age violating the shape
    /// (a buffer-dependent decision, or a gap after the first storing age).
    NotThreshold { age: u32 },
}

impl ThresholdExtraction {
    /// The equivalent closed-form policy, when one exists (`v_bar >= 2`).
    pub fn policy(&self) -> Option<ThresholdPolicy> {
        match *self {
            ThresholdExtraction::Threshold { v_bar } if v_bar >= 2 => {
                Some(ThresholdPolicy::AtAge(v_bar))
            }
            ThresholdExtraction::Never => Some(ThresholdPolicy::Never),
            _ => None,
        }
    }
}

/// Extracts the storage threshold from a tabular policy, or reports the
/// first age where it is not of threshold type.
pub fn extract_threshold(policy: &TabularPolicy) -> ThresholdExtraction {
    let mut first_store = None;
    for age in 1..=policy.v_max {
        let s0 = policy.action(State::new(age, true, false)) == Action::Store;
        let s1 = policy.action(State::new(age, true, true)) == Action::Store;
        if s0 != s1 {
            return ThresholdExtraction::NotThreshold { age };
        }
        match (first_store, s0) {
            (None, true) => first_store = Some(age),
            (Some(_), false) => return ThresholdExtraction::NotThreshold { age },
            _ => {}
        }
    }
    match first_store {
        Some(v_bar) => ThresholdExtraction::Threshold { v_bar },
        None => ThresholdExtraction::Never,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::average_cost;
    use crate::model::SystemParams;

    fn params(p: f64, q: f64, c: f64) -> SystemParams {
        SystemParams::new(p, q, c).unwrap()
    }

    #[test]
    fn argument_validation() {
        let pr = params(0.5, 0.5, 1.0);
        assert!(discounted_value_iteration(&pr, 1.0, 100, 1e-8, 10).is_err());
        assert!(discounted_value_iteration(&pr, 0.9, 1, 1e-8, 10).is_err());
        assert!(discounted_value_iteration(&pr, 0.9, 100, 0.0, 10).is_err());
        assert!(relative_value_iteration(&pr, 1, 1e-8, 10).is_err());
    }

    #[test]
    fn cap_merges_saturated_growth() {
        let pr = params(0.5, 0.5, 1.0);
        // at the cap, growth maps back onto the cap
        let t = capped_transitions(&pr, State::new(6, true, false), Action::Discard, 6).unwrap();
        assert!(t.iter().all(|e| e.next.age == 1 || e.next.age == 6));
        assert!((t.iter().map(|e| e.prob).sum::<f64>() - 1.0).abs() < 1e-15);
        // v_max = 2: buffered delivery and saturated growth both hit age 2
        let t = capped_transitions(&pr, State::new(2, false, true), Action::Discard, 2).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.iter().all(|e| e.next.age == 2));
    }

    #[test]
    fn discounted_iterates_grow_from_zero() {
        // costs are nonnegative, so iterates from zero increase entrywise
        let pr = params(0.5, 0.5, 1.0);
        let mut prev: Option<ValueTable> = None;
        for iters in [1usize, 2, 5, 10, 25, 60] {
            let (table, report) =
                discounted_value_iteration(&pr, 0.9, 200, 1e-300, iters).unwrap();
            assert_eq!(report.iterations, iters);
            assert!(!report.converged);
            if let Some(prev) = &prev {
                for i in 0..4 * 200usize {
                    let s = State::from_index(i);
                    assert!(table.get(s) >= prev.get(s) - 1e-12);
                }
            }
            prev = Some(table);
        }
    }

    #[test]
    fn one_step_value_is_min_stage_cost() {
        let pr = params(0.3, 0.7, 2.0);
        let (table, _) = discounted_value_iteration(&pr, 0.9, 50, 1e-300, 1).unwrap();
        for i in 0..200usize {
            let s = State::from_index(i);
            let discard = model::stage_cost(&pr, s, Action::Discard).unwrap();
            let expect = if s.fresh {
                discard.min(model::stage_cost(&pr, s, Action::Store).unwrap())
            } else {
                discard
            };
            // interior states: capped stage cost equals the exact one
            if s.age < 50 {
                assert!((table.get(s) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn discounted_converges_and_is_monotone_in_age() {
        let pr = params(0.5, 0.5, 1.0);
        let (table, report) =
            discounted_value_iteration(&pr, 0.9, 400, 1e-10, 100_000).unwrap();
        assert!(report.converged);
        assert!(report.gain.is_none());
        assert!(check_monotone_in_age(&table).is_empty());
    }

    #[test]
    fn monotone_check_flags_permuted_table() {
        let pr = params(0.5, 0.5, 1.0);
        let (mut table, _) = discounted_value_iteration(&pr, 0.9, 100, 1e-9, 100_000).unwrap();
        let a = State::new(10, false, false).index();
        let b = State::new(11, false, false).index();
        table.values.swap(a, b);
        let violations = check_monotone_in_age(&table);
        assert!(!violations.is_empty());
        assert!(violations.iter().any(|v| v.age == 10));
    }

    #[test]
    fn rvi_matches_closed_form_on_known_thresholds() {
        for (p, q, c) in [(0.5, 0.5, 2.0), (0.3, 0.7, 2.0), (0.5, 0.8, 0.5)] {
            let pr = params(p, q, c);
            let (_, policy, report) = relative_value_iteration(&pr, 600, 1e-11, 200_000).unwrap();
            assert!(report.converged);
            let gain = report.gain.unwrap();
            let extracted = extract_threshold(&policy);
            let threshold = extracted.policy().expect("threshold-type policy");
            let f = average_cost(&pr, threshold).unwrap();
            assert!(
                (gain - f).abs() < 1e-6,
                "p={p} q={q} c={c}: gain {gain} vs f({threshold}) = {f}"
            );
        }
    }

    #[test]
    fn rvi_gain_insensitive_to_truncation() {
        let pr = params(0.5, 0.5, 2.0);
        let (_, _, a) = relative_value_iteration(&pr, 300, 1e-11, 200_000).unwrap();
        let (_, _, b) = relative_value_iteration(&pr, 600, 1e-11, 200_000).unwrap();
        assert!((a.gain.unwrap() - b.gain.unwrap()).abs() < 1e-9);
    }

    #[test]
    fn huge_storage_cost_never_stores() {
        let pr = params(0.5, 0.5, 1e6);
        let (_, policy, report) = relative_value_iteration(&pr, 500, 1e-11, 200_000).unwrap();
        assert_eq!(extract_threshold(&policy), ThresholdExtraction::Never);
        // gain equals the never-store mean age 1/(pq)
        assert!((report.gain.unwrap() - 4.0).abs() < 1e-6);
    }

    #[test]
    fn zero_storage_cost_stores_everywhere_above_one() {
        let pr = params(0.5, 0.5, 0.0);
        let (_, policy, _) = relative_value_iteration(&pr, 400, 1e-11, 200_000).unwrap();
        for v in 2..400 {
            for b in [false, true] {
                assert_eq!(policy.action(State::new(v, true, b)), Action::Store);
            }
        }
        // free storage is also worth it at age 1 (it insures the failure branch)
        assert_eq!(policy.action(State::new(1, true, false)), Action::Store);
    }

    #[test]
    fn greedy_never_stores_without_fresh_packet() {
        let pr = params(0.4, 0.6, 1.0);
        let (table, policy, _) = relative_value_iteration(&pr, 300, 1e-10, 200_000).unwrap();
        for i in 0..4 * 300usize {
            let s = State::from_index(i);
            if !s.fresh {
                assert_eq!(policy.action(s), Action::Discard);
            }
        }
        // rebuilt greedy agrees with the solver's policy
        let rebuilt = greedy_policy(&pr, &table);
        for i in 0..4 * 300usize {
            let s = State::from_index(i);
            assert_eq!(rebuilt.action(s), policy.action(s));
        }
    }

    fn synthetic_policy(v_max: u32, stores: impl Fn(State) -> bool) -> TabularPolicy {
        let actions = (0..4 * v_max as usize)
            .map(|i| {
                let s = State::from_index(i);
                if s.fresh && stores(s) {
                    Action::Store
                } else {
                    Action::Discard
                }
            })
            .collect();
        TabularPolicy { v_max, actions }
    }

    #[test]
    fn extraction_shapes() {
        assert_eq!(
            extract_threshold(&synthetic_policy(12, |s| s.age >= 4)),
            ThresholdExtraction::Threshold { v_bar: 4 }
        );
        assert_eq!(
            extract_threshold(&synthetic_policy(12, |_| false)),
            ThresholdExtraction::Never
        );
        // stores at 3 and 4 but not 5: first violation is age 5
        assert_eq!(
            extract_threshold(&synthetic_policy(12, |s| s.age == 3 || s.age == 4)),
            ThresholdExtraction::NotThreshold { age: 5 }
        );
        // buffer-dependent decisions are not threshold-type
        assert_eq!(
            extract_threshold(&synthetic_policy(12, |s| s.age >= 4 && s.buffered)),
            ThresholdExtraction::NotThreshold { age: 4 }
        );
    }

    #[test]
    fn switch_inequality_on_discounted_table() {
        let pr = params(0.3, 0.7, 2.0);
        let (table, report) =
            discounted_value_iteration(&pr, 0.95, 400, 1e-11, 200_000).unwrap();
        assert!(report.converged);
        let diff = |w: u32| {
            table.get(State::new(w, false, true)) - table.get(State::new(w, false, false))
        };
        for v in 1..=(400 - 3) {
            assert!(diff(v + 2) <= diff(v + 1) + 1e-9, "v = {v}");
        }
    }
}
