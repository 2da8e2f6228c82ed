//! Problem instance, MDP state space, exact transition kernel and stage cost.
//!
//! State is `(v, λ, b)`: instantaneous age `v ≥ 1`, fresh-packet flag `λ`,
//! buffer flag `b`. When a fresh packet is present it is transmitted this
//! slot; the action decides whether to also store a copy (one slot, cost
//! `c`). When no fresh packet is present a buffered copy, if any, is
//! transmitted and then dropped. A delivered fresh packet resets the age to
//! 1, a delivered buffered copy resets it to 2, otherwise the age grows by 1.

use core::fmt;

use alloc::vec::Vec;
use arrayvec::ArrayVec;

/// Problem instance: arrival probability `p`, delivery probability `q`,
/// per-packet storage cost `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    p: f64,
    q: f64,
    c: f64,
}

/// Invalid problem parameters; names the offending field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamError {
    /// `p` outside the open interval (0, 1).
    ArrivalProb(f64),
    /// `q` outside the open interval (0, 1).
    SuccessProb(f64),
    /// `c` negative or not finite.
    StorageCost(f64),
}

impl fmt::Display for ParamError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ParamError::ArrivalProb(v) => write!(f, "p must be in (0,1), got {v}"),
            ParamError::SuccessProb(v) => write!(f, "q must be in (0,1), got {v}"),
            ParamError::StorageCost(v) => write!(f, "c must be finite and >= 0, got {v}"),
        }
    }
}

impl SystemParams {
    pub fn new(p: f64, q: f64, c: f64) -> Result<Self, ParamError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(ParamError::ArrivalProb(p));
        }
        if !(q > 0.0 && q < 1.0) {
            return Err(ParamError::SuccessProb(q));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(ParamError::StorageCost(c));
        }
        Ok(Self { p, q, c })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn c(&self) -> f64 {
        self.c
    }
}

/// MDP state `(v, λ, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct State {
    /// Instantaneous age of the user, `>= 1`.
    pub age: u32,
    /// A fresh update packet arrived this slot.
    pub fresh: bool,
    /// The buffer holds a packet stored in the previous slot.
    pub buffered: bool,
}

impl State {
    pub fn new(age: u32, fresh: bool, buffered: bool) -> Self {
        debug_assert!(age >= 1);
        Self { age, fresh, buffered }
    }

    /// Position in the canonical enumeration (age ascending, then λ, then b).
    pub fn index(&self) -> usize {
        4 * (self.age as usize - 1) + 2 * usize::from(self.fresh) + usize::from(self.buffered)
    }

    pub fn from_index(index: usize) -> Self {
        Self {
            age: (index / 4) as u32 + 1,
            fresh: index % 4 / 2 == 1,
            buffered: index % 2 == 1,
        }
    }
}

/// Storage decision for the fresh packet. Transmission is not a choice: the
/// station always sends the fresh packet if present, else the buffered one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    /// Do not store; the fresh packet is gone after this slot.
    Discard,
    /// Keep a copy in the buffer for one slot, paying `c`.
    Store,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelError {
    /// `Store` requires a fresh packet (`λ = 1`).
    StoreWithoutFreshPacket,
    /// Age truncation must be at least 2.
    TruncationTooSmall(u32),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ModelError::StoreWithoutFreshPacket => {
                write!(f, "cannot store: no fresh packet in this state")
            }
            ModelError::TruncationTooSmall(v) => {
                write!(f, "v_max must be >= 2, got {v}")
            }
        }
    }
}

/// One entry of the sparse transition list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionEntry {
    pub next: State,
    pub prob: f64,
}

/// Sparse successor list; the kernel never has more than 4 distinct targets.
pub type Transitions = ArrayVec<TransitionEntry, 4>;

/// Exact (untruncated) transition kernel.
///
/// With a fresh packet the next age is 1 with probability `q`, else `v+1`,
/// and the buffer becomes the stored copy (`b' = a`). Without one, a buffered
/// packet delivers age 2 with probability `q` and the buffer always empties;
/// with neither, the age grows surely. The next arrival flag is an
/// independent Bernoulli(`p`) in every case. Entries are emitted in state
/// index order and never have zero probability.
pub fn transition(
    params: &SystemParams,
    s: State,
    a: Action,
) -> Result<Transitions, ModelError> {
    if a == Action::Store && !s.fresh {
        return Err(ModelError::StoreWithoutFreshPacket);
    }
    let p = params.p;
    let q = params.q;
    let mut out = Transitions::new();
    let mut push = |age: u32, fresh: bool, buffered: bool, prob: f64| {
        let next = State::new(age, fresh, buffered);
        // merge duplicates (only possible reset/growth collision is at age 2)
        if let Some(e) = out.iter_mut().find(|e| e.next == next) {
            e.prob += prob;
        } else {
            out.push(TransitionEntry { next, prob });
        }
    };
    if s.fresh {
        let stored = a == Action::Store;
        push(1, false, stored, q * (1.0 - p));
        push(1, true, stored, q * p);
        push(s.age + 1, false, stored, (1.0 - q) * (1.0 - p));
        push(s.age + 1, true, stored, (1.0 - q) * p);
    } else if s.buffered {
        push(2, false, false, q * (1.0 - p));
        push(2, true, false, q * p);
        push(s.age + 1, false, false, (1.0 - q) * (1.0 - p));
        push(s.age + 1, true, false, (1.0 - q) * p);
    } else {
        push(s.age + 1, false, false, 1.0 - p);
        push(s.age + 1, true, false, p);
    }
    Ok(out)
}

/// Stage cost: storage charge plus the expected next age.
pub fn stage_cost(params: &SystemParams, s: State, a: Action) -> Result<f64, ModelError> {
    let entries = transition(params, s, a)?;
    let charge = if a == Action::Store { params.c } else { 0.0 };
    Ok(charge
        + entries
            .iter()
            .map(|e| e.next.age as f64 * e.prob)
            .sum::<f64>())
}

/// All states with age `1..=v_max`, in canonical order.
pub fn enumerate_states(v_max: u32) -> Result<Vec<State>, ModelError> {
    if v_max < 2 {
        return Err(ModelError::TruncationTooSmall(v_max));
    }
    Ok((0..4 * v_max as usize).map(State::from_index).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(p: f64, q: f64, c: f64) -> SystemParams {
        SystemParams::new(p, q, c).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(SystemParams::new(0.0, 0.5, 1.0).is_err());
        assert!(SystemParams::new(1.0, 0.5, 1.0).is_err());
        assert!(SystemParams::new(0.5, 1.5, 1.0).is_err());
        assert!(SystemParams::new(0.5, 0.5, -0.1).is_err());
        assert!(SystemParams::new(f64::NAN, 0.5, 0.0).is_err());
        assert!(SystemParams::new(0.5, 0.5, 0.0).is_ok());
        let e = SystemParams::new(1.5, 0.5, 0.0).unwrap_err();
        assert_eq!(alloc::format!("{e}"), "p must be in (0,1), got 1.5");
    }

    #[test]
    fn fresh_store_reaches_reset_with_buffer() {
        // success and a new arrival land in (1,1,1) with probability q*p
        let pr = params(0.3, 0.7, 1.0);
        let t = transition(&pr, State::new(5, true, false), Action::Store).unwrap();
        let e = t
            .iter()
            .find(|e| e.next == State::new(1, true, true))
            .expect("entry missing");
        assert!((e.prob - 0.21).abs() < 1e-15);
        assert_eq!(t.len(), 4);
    }

    #[test]
    fn idle_state_growth_is_sure() {
        let pr = params(0.3, 0.7, 1.0);
        for v in [1, 2, 17] {
            let t = transition(&pr, State::new(v, false, false), Action::Discard).unwrap();
            assert_eq!(t.len(), 2);
            for e in &t {
                assert_eq!(e.next.age, v + 1);
                assert!(!e.next.buffered);
                let expect = if e.next.fresh { 0.3 } else { 0.7 };
                assert!((e.prob - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn buffered_transmission_splits_between_reset_and_growth() {
        let pr = params(0.5, 0.5, 1.0);
        let t = transition(&pr, State::new(3, false, true), Action::Discard).unwrap();
        let expected = [
            (State::new(2, false, false), 0.25),
            (State::new(2, true, false), 0.25),
            (State::new(4, false, false), 0.25),
            (State::new(4, true, false), 0.25),
        ];
        assert_eq!(t.len(), 4);
        for (next, prob) in expected {
            let e = t.iter().find(|e| e.next == next).unwrap();
            assert!((e.prob - prob).abs() < 1e-15);
        }
    }

    #[test]
    fn age_one_buffered_entries_merge() {
        // from (1,0,1) both delivery and growth give age 2
        let pr = params(0.5, 0.5, 1.0);
        let t = transition(&pr, State::new(1, false, true), Action::Discard).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.iter().all(|e| e.next.age == 2));
        assert!((t.iter().map(|e| e.prob).sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn store_requires_fresh_packet() {
        let pr = params(0.5, 0.5, 1.0);
        let s = State::new(4, false, true);
        assert_eq!(
            transition(&pr, s, Action::Store),
            Err(ModelError::StoreWithoutFreshPacket)
        );
        assert!(stage_cost(&pr, s, Action::Store).is_err());
    }

    #[test]
    fn stage_cost_examples() {
        let pr = params(0.3, 0.7, 2.0);
        for buffered in [false, true] {
            let c = stage_cost(&pr, State::new(5, true, buffered), Action::Store).unwrap();
            assert!((c - 4.5).abs() < 1e-12, "got {c}");
        }
        // idle: age grows surely, no charge
        for v in [1, 9] {
            let c = stage_cost(&pr, State::new(v, false, false), Action::Discard).unwrap();
            assert!((c - (v as f64 + 1.0)).abs() < 1e-12);
        }
        let pr = params(0.3, 0.5, 0.0);
        let c = stage_cost(&pr, State::new(4, false, true), Action::Discard).unwrap();
        assert!((c - 3.5).abs() < 1e-12);
    }

    #[test]
    fn enumeration_shape() {
        assert!(enumerate_states(1).is_err());
        let st = enumerate_states(2).unwrap();
        assert_eq!(st.len(), 8);
        assert_eq!(st[0], State::new(1, false, false));
        let st = enumerate_states(100).unwrap();
        assert_eq!(st.len(), 400);
        for (i, s) in st.iter().enumerate() {
            assert_eq!(s.index(), i);
            assert_eq!(State::from_index(i), *s);
        }
    }

    fn legal_actions(s: State) -> alloc::vec::Vec<Action> {
        if s.fresh {
            alloc::vec![Action::Discard, Action::Store]
        } else {
            alloc::vec![Action::Discard]
        }
    }

    proptest! {
        #[test]
        fn kernel_rows_are_distributions(
            p in 1e-6..1.0f64, q in 1e-6..1.0f64,
            age in 1u32..50, fresh: bool, buffered: bool,
        ) {
            prop_assume!(p < 1.0 - 1e-6 && q < 1.0 - 1e-6);
            let pr = params(p, q, 1.0);
            let s = State::new(age, fresh, buffered);
            for a in legal_actions(s) {
                let t = transition(&pr, s, a).unwrap();
                let total: f64 = t.iter().map(|e| e.prob).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                for e in &t {
                    prop_assert!(e.prob > 0.0 && e.prob <= 1.0);
                }
                // next arrival flag is an independent Bernoulli(p)
                let fresh_mass: f64 =
                    t.iter().filter(|e| e.next.fresh).map(|e| e.prob).sum();
                prop_assert!((fresh_mass - p).abs() < 1e-12);
            }
        }

        #[test]
        fn kernel_ignores_buffer_when_fresh(
            p in 0.01..0.99f64, q in 0.01..0.99f64, age in 1u32..50,
        ) {
            let pr = params(p, q, 1.0);
            for a in [Action::Discard, Action::Store] {
                let t0 = transition(&pr, State::new(age, true, false), a).unwrap();
                let t1 = transition(&pr, State::new(age, true, true), a).unwrap();
                prop_assert_eq!(t0, t1);
            }
        }

        #[test]
        fn storing_costs_exactly_c(
            p in 0.01..0.99f64, q in 0.01..0.99f64, c in 0.0..20.0f64,
            age in 1u32..50, buffered: bool,
        ) {
            let pr = params(p, q, c);
            let s = State::new(age, true, buffered);
            let keep = stage_cost(&pr, s, Action::Store).unwrap();
            let drop = stage_cost(&pr, s, Action::Discard).unwrap();
            prop_assert!((keep - drop - c).abs() < 1e-12);
        }
    }
}
