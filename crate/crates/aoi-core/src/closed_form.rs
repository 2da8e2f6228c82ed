//! Stationary age distribution and long-run average cost of threshold
//! policies, in closed form.
//!
//! A threshold policy stores the fresh packet exactly when the age is at
//! least `v̄` (with `v̄ ≥ 2`, or never). Under it the age marginal of the
//! chain has three regimes:
//!
//! - `h(1) = pq`: the age resets to 1 whenever a fresh packet arrives and is
//!   delivered, from every state (including age 1 itself);
//! - a geometric head `h(j) = (1-pq)^{j-2} h(2)` for `2 ≤ j ≤ v̄`, since below
//!   the threshold nothing is buffered and only a fresh delivery interrupts
//!   growth;
//! - a tail `h(v̄+i)` obeying the two-step recurrence
//!   `h(n) = (1-pq) h(n-1) - (1-p)p(1-q)q h(n-2)`, whose solution is a mix of
//!   the two characteristic roots.
//!
//! `h(2)` follows from normalization. All formulas here are validated against
//! the stationary vector of the truncated chain and against simulation; see
//! the test suites.

use core::fmt;

use alloc::vec::Vec;

use crate::model::SystemParams;

/// "Store when the age is at least `v̄`", or never store at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ThresholdPolicy {
    AtAge(u32),
    Never,
}

impl ThresholdPolicy {
    /// Whether a fresh packet is stored at this age.
    pub fn stores(&self, age: u32) -> bool {
        match *self {
            ThresholdPolicy::AtAge(v_bar) => age >= v_bar,
            ThresholdPolicy::Never => false,
        }
    }
}

/// `Display`/`parse` use `"inf"` for [`ThresholdPolicy::Never`].
impl fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ThresholdPolicy::AtAge(v) => write!(f, "{v}"),
            ThresholdPolicy::Never => write!(f, "inf"),
        }
    }
}

impl core::str::FromStr for ThresholdPolicy {
    type Err = &'static str;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "inf" {
            return Ok(ThresholdPolicy::Never);
        }
        match s.parse::<u32>() {
            Ok(v) if v >= 2 => Ok(ThresholdPolicy::AtAge(v)),
            _ => Err("threshold must be an integer >= 2 or \"inf\""),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedFormError {
    /// The characteristic roots are too close to coincident for the tail
    /// formula (it divides by `r2 - r1`).
    NearDegenerateRoots { discriminant: f64 },
    /// Closed forms are defined for thresholds `v̄ ≥ 2`.
    ThresholdTooSmall(u32),
}

impl fmt::Display for ClosedFormError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ClosedFormError::NearDegenerateRoots { discriminant } => write!(
                f,
                "tail recurrence roots nearly coincide (discriminant {discriminant:e})"
            ),
            ClosedFormError::ThresholdTooSmall(v) => {
                write!(f, "threshold must be >= 2, got {v}")
            }
        }
    }
}

/// Roots of `t^2 - (1-pq) t + (1-p)p(1-q)q = 0`, governing the geometric
/// decay of the stationary age distribution above the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailRoots {
    pub r1: f64,
    pub r2: f64,
    pub discriminant: f64,
}

const DEGENERATE_DISCRIMINANT: f64 = 1e-12;

pub fn recurrence_roots(params: &SystemParams) -> Result<TailRoots, ClosedFormError> {
    let (p, q) = (params.p(), params.q());
    let sum = 1.0 - p * q;
    let product = (1.0 - p) * p * (1.0 - q) * q;
    let discriminant = sum * sum - 4.0 * product;
    if discriminant < DEGENERATE_DISCRIMINANT {
        return Err(ClosedFormError::NearDegenerateRoots { discriminant });
    }
    let r2 = (sum + libm::sqrt(discriminant)) / 2.0;
    let r1 = product / r2;
    Ok(TailRoots { r1, r2, discriminant })
}

/// Shared derived quantities of a parameter set.
struct Derived {
    /// `pq`: per-slot probability of a fresh delivery (age resets to 1).
    pq: f64,
    /// `1 - pq`: survival factor of the below-threshold head.
    survive: f64,
    /// `1 + (1-p)(1-q)`: buffered-delivery correction.
    gamma: f64,
    /// `(1-p)(1-q)/gamma`, the normalization defect of the stored tail.
    miss_ratio: f64,
}

impl Derived {
    fn new(params: &SystemParams) -> Self {
        let (p, q) = (params.p(), params.q());
        let pq = p * q;
        let gamma = 1.0 + (1.0 - p) * (1.0 - q);
        Self {
            pq,
            survive: 1.0 - pq,
            gamma,
            miss_ratio: 1.0 - 1.0 / gamma,
        }
    }

    /// `(1-pq)^(v̄-2)`.
    fn head_decay(&self, v_bar: u32) -> f64 {
        libm::pow(self.survive, (v_bar - 2) as f64)
    }
}

/// Stationary age distribution of a finite-threshold policy.
#[derive(Debug, Clone)]
pub struct StationaryDist {
    v_bar: u32,
    h1: f64,
    h2: f64,
    survive: f64,
    gamma: f64,
    roots: TailRoots,
    /// Coefficients of `r1^i` and `r2^i` in `h(v̄+i)`, premultiplied by `h(v̄)`.
    tail_c1: f64,
    tail_c2: f64,
}

pub fn stationary_distribution(
    params: &SystemParams,
    v_bar: u32,
) -> Result<StationaryDist, ClosedFormError> {
    if v_bar < 2 {
        return Err(ClosedFormError::ThresholdTooSmall(v_bar));
    }
    let roots = recurrence_roots(params)?;
    let d = Derived::new(params);
    let decay = d.head_decay(v_bar);
    let h2 = d.pq * (1.0 - d.pq) / (1.0 - d.miss_ratio * decay);
    let h_at_threshold = decay * h2;
    let spread = roots.r2 - roots.r1;
    Ok(StationaryDist {
        v_bar,
        h1: d.pq,
        h2,
        survive: d.survive,
        gamma: d.gamma,
        roots,
        tail_c1: (roots.r2 - d.survive) / spread * h_at_threshold,
        tail_c2: (d.survive - roots.r1) / spread * h_at_threshold,
    })
}

impl StationaryDist {
    pub fn v_bar(&self) -> u32 {
        self.v_bar
    }

    pub fn h1(&self) -> f64 {
        self.h1
    }

    pub fn h2(&self) -> f64 {
        self.h2
    }

    pub fn roots(&self) -> TailRoots {
        self.roots
    }

    /// Stationary probability of the age being exactly `age`.
    pub fn prob(&self, age: u32) -> f64 {
        if age == 0 {
            return 0.0;
        }
        if age == 1 {
            self.h1
        } else if age <= self.v_bar {
            libm::pow(self.survive, (age - 2) as f64) * self.h2
        } else {
            let i = (age - self.v_bar) as f64;
            self.tail_c1 * libm::pow(self.roots.r1, i) + self.tail_c2 * libm::pow(self.roots.r2, i)
        }
    }

    /// Total stationary mass at or above the threshold, summed analytically.
    pub fn threshold_mass(&self) -> f64 {
        tail_mass_from(self.pq(), self.gamma, self.prob(self.v_bar))
    }

    fn pq(&self) -> f64 {
        1.0 - self.survive
    }

    /// Probabilities for ages `1..=v_max` as an explicit vector.
    pub fn pmf(&self, v_max: u32) -> Vec<f64> {
        (1..=v_max).map(|v| self.prob(v)).collect()
    }

    /// Normalization residual `|h1 + head + tail - 1|`, tail in closed form.
    pub fn normalization_error(&self) -> f64 {
        let mut head = 0.0;
        for j in 2..self.v_bar {
            head += self.prob(j);
        }
        let total = self.h1 + head + self.threshold_mass();
        libm::fabs(total - 1.0)
    }
}

/// Mass of the geometric-mixture tail given the probability at the
/// threshold: `h(v̄) / (pq (1 + (1-p)(1-q)))`.
pub fn tail_mass(params: &SystemParams, h_at_threshold: f64) -> f64 {
    let d = Derived::new(params);
    tail_mass_from(d.pq, d.gamma, h_at_threshold)
}

fn tail_mass_from(pq: f64, gamma: f64, h_at_threshold: f64) -> f64 {
    h_at_threshold / (pq * gamma)
}

/// Coefficient bundle for the average-cost formula and the threshold
/// bracket. `d` carries the storage charge; `d1..d5` depend on `(p,q)` only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostConstants {
    pub d: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
    pub d5: f64,
}

pub fn cost_constants(params: &SystemParams) -> Result<CostConstants, ClosedFormError> {
    let roots = recurrence_roots(params)?;
    let d = Derived::new(params);
    let (pq, gamma) = (d.pq, d.gamma);
    let pq2 = pq * pq;
    let dd = params.c() / (params.q() * gamma) + tail_age_weight(&d, &roots);
    let d1 = (pq2 + pq + 1.0) / pq2;
    let d2 = (1.0 / gamma - 1.0) / pq;
    let d3 = dd - (1.0 - pq + pq2) / pq2;
    let d5 = 2.0 - (pq + 1.0) / (pq * gamma);
    let d4 = (d1 * d5 + 2.0 / (pq * gamma)) / d2 + 2.0;
    Ok(CostConstants { d: dd, d1, d2, d3, d4, d5 })
}

/// `Σ_{i>=1} i h(v̄+i) / h(v̄)`: mean excess age of the tail mixture.
fn tail_age_weight(d: &Derived, roots: &TailRoots) -> f64 {
    let (r1, r2) = (roots.r1, roots.r2);
    let spread = r2 - r1;
    (r2 - d.survive) * r1 / (spread * (1.0 - r1) * (1.0 - r1))
        + (d.survive - r1) * r2 / (spread * (1.0 - r2) * (1.0 - r2))
}

/// Long-run average cost `f(v̄)` (age plus expected storage charge) of a
/// threshold policy; `Never` gives the geometric-age mean `1/(pq)`.
pub fn average_cost(
    params: &SystemParams,
    policy: ThresholdPolicy,
) -> Result<f64, ClosedFormError> {
    match policy {
        ThresholdPolicy::Never => Ok(1.0 / (params.p() * params.q())),
        ThresholdPolicy::AtAge(v_bar) => Ok(1.0 / (params.p() * params.q())
            + excess_cost(params, v_bar)?),
    }
}

/// `f(v̄) - f(never)`, evaluated without cancellation so that the tiny
/// differences between large thresholds (and against never storing) keep
/// full relative precision. Negative when the threshold policy wins.
pub fn excess_cost(params: &SystemParams, v_bar: u32) -> Result<f64, ClosedFormError> {
    if v_bar < 2 {
        return Err(ClosedFormError::ThresholdTooSmall(v_bar));
    }
    let roots = recurrence_roots(params)?;
    let d = Derived::new(params);
    let pq = d.pq;
    let decay = d.head_decay(v_bar);
    let h2 = pq * (1.0 - pq) / (1.0 - d.miss_ratio * decay);
    // split of f(v̄) = 1/pq + decay * h2 * (linear in v̄):
    //   head_mean: below-threshold ages, minus what the geometric head of the
    //   never-store chain would have contributed;
    //   tail pieces: mean excess age, storage charge, and threshold offset.
    let head_mean = (1.0 + pq) / (pq * pq);
    let charge = params.c() / (params.q() * d.gamma);
    let tail_weight = tail_age_weight(&d, &roots);
    let slope = (1.0 / d.gamma - 1.0) / pq;
    let offset = d.miss_ratio * head_mean + charge + tail_weight - (1.0 - pq) / (pq * pq);
    Ok(decay * h2 * (slope * v_bar as f64 + offset))
}
