//! Per-robot decision rules.
//!
//! All three protocols share one state shape: a trip-start probability
//! `p_enter` and a give-up probability `p_reverse`. The fixed protocols never
//! touch their state. The adaptive protocol updates both values at every
//! homecoming from the robot's own estimate `delta_l` of how far the tunnel
//! has grown beyond its initial length `l0`:
//!
//! - give-up law: `p_reverse = alpha * (l0 / (l0 + delta_l)) ^ rev_exponent`,
//!   so persistence rises as trips get longer and a wasted approach gets more
//!   expensive;
//! - trip-start law: `p_enter` moves by `eta * (delta_l / (l0 + delta_l)) ^
//!   ent_exponent`, up after a delivery and down after a failed trip, and
//!   recovers by a flat `xi` after each rest. The step is tiny while the
//!   tunnel is short and approaches `eta` as it grows, so the team only
//!   sheds workers once crowding actually costs something.

use crate::config::{ProtocolConfig, ProtocolKind};
use serde::{Deserialize, Serialize};

/// The two mutable decision probabilities of one robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    /// Probability of starting a digging trip instead of resting.
    pub p_enter: f64,
    /// Probability of giving up when blocked on the way in.
    pub p_reverse: f64,
}

/// How a trip period ended, as scored at homecoming.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripOutcome {
    /// Came home carrying a pellet and delivered it.
    Successful,
    /// Came home empty-handed after giving up.
    Unsuccessful,
    /// Sat the period out at the rest area.
    Rested,
}

/// Trip-start decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripChoice {
    Enter,
    Rest,
}

/// Contact decision of an inbound robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReverseChoice {
    GiveUp,
    Persist,
}

/// Starting policy state for a protocol. Every robot begins fully motivated
/// (`p_enter = 1`); the give-up probability is the protocol's base value.
pub fn init_policy(cfg: &ProtocolConfig) -> PolicyState {
    let p_reverse = match cfg.kind {
        ProtocolKind::Active => 0.0,
        ProtocolKind::Reversal => cfg.fixed_reversal,
        ProtocolKind::Adaptive => cfg.alpha,
    };
    PolicyState {
        p_enter: 1.0,
        p_reverse,
    }
}

/// Give-up probability at extension `delta_l`:
/// `alpha * (l0 / (l0 + delta_l)) ^ exponent`.
pub fn reversal_probability(alpha: f64, l0: f64, delta_l: f64, exponent: f64) -> f64 {
    alpha * (l0 / (l0 + delta_l)).powf(exponent)
}

/// Step size of the trip-start update at extension `delta_l`:
/// `(delta_l / (l0 + delta_l)) ^ exponent`.
pub fn entrance_step(l0: f64, delta_l: f64, exponent: f64) -> f64 {
    (delta_l / (l0 + delta_l)).powf(exponent)
}

/// Trip-start decision from one uniform draw in `[0, 1)`.
pub fn decide_enter(state: &PolicyState, draw: f64) -> TripChoice {
    if draw < state.p_enter {
        TripChoice::Enter
    } else {
        TripChoice::Rest
    }
}

/// Give-up decision from one uniform draw in `[0, 1)`.
pub fn decide_reverse(state: &PolicyState, draw: f64) -> ReverseChoice {
    if draw < state.p_reverse {
        ReverseChoice::GiveUp
    } else {
        ReverseChoice::Persist
    }
}

/// Applies the homecoming update for one finished trip or rest period.
///
/// The fixed protocols return the state unchanged, bit for bit. The adaptive
/// protocol nudges `p_enter` per the trip-start law (clamped to [0, 1]) and,
/// after any active trip, refreshes `p_reverse` from the give-up law; a rest
/// leaves `p_reverse` alone because no new length information was gathered.
pub fn apply_trip_outcome(
    state: PolicyState,
    outcome: TripOutcome,
    cfg: &ProtocolConfig,
    l0: f64,
    delta_l: f64,
) -> PolicyState {
    if cfg.kind != ProtocolKind::Adaptive {
        return state;
    }
    let mut next = state;
    match outcome {
        TripOutcome::Successful => {
            next.p_enter += cfg.eta * entrance_step(l0, delta_l, cfg.ent_exponent);
        }
        TripOutcome::Unsuccessful => {
            next.p_enter -= cfg.eta * entrance_step(l0, delta_l, cfg.ent_exponent);
        }
        TripOutcome::Rested => {
            next.p_enter += cfg.xi;
        }
    }
    next.p_enter = next.p_enter.clamp(0.0, 1.0);
    if outcome != TripOutcome::Rested {
        next.p_reverse =
            reversal_probability(cfg.alpha, l0, delta_l, cfg.rev_exponent).clamp(0.0, 1.0);
    }
    next
}
