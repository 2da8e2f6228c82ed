//! Minimizing time-average age-of-information plus storage cost for a
//! base-station/user pair on a slotted erasure channel.
//!
//! Each slot an update packet arrives with probability `p` and a transmission
//! succeeds with probability `q`. The station may pay `c` to keep the fresh
//! packet in a one-slot buffer as insurance against the transmission failing.
//! This crate provides:
//!
//! - [`model`]: the MDP state space, exact transition kernel and stage cost;
//! - [`mdp`]: discounted and average-cost value iteration on the truncated
//!   state space, plus structural checks on the solution;
//! - [`closed_form`]: the stationary age distribution and average cost of
//!   "store when the age is at least `v̄`" policies, in closed form;
//! - [`optimizer`]: optimal-threshold search (bracketed and exhaustive);
//! - [`sim`]: a seeded slot-level Monte Carlo simulator.
//!
//! The crate is `no_std` (with `alloc`); IO, CLI and file formats live in the
//! companion `aoi-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod closed_form;
pub mod mdp;
pub mod model;
pub mod optimizer;
pub mod rng;
pub mod sim;

pub use closed_form::ThresholdPolicy;
pub use model::{Action, State, SystemParams};
