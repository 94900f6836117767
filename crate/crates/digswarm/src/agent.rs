//! One robot: an eight-state trip machine plus odometry.
//!
//! The machine is deliberately local. [`fsm_step`] is a pure function of the
//! robot's own fields and a handful of [`Percepts`] the engine computes from
//! cells adjacent to it; it never sees the rest of the world. Transitions
//! that depend on movement arbitration (blocked moves, give-up draws,
//! squeeze-past swaps) are applied by the engine, which owns occupancy.
//!
//! One tick is one body length of travel. Work states count down explicit
//! timers: digging takes `t_dig` ticks, dumping `t_dump`, resting `t_rest`,
//! and both turnarounds (at the face after grabbing, at home after dumping)
//! take one tick each.

use crate::config::{NoiseConfig, ProtocolConfig};
use crate::policy::{self, PolicyState};
use crate::rng::Stream;
use crate::world::{Position, RobotId};
use serde::{Deserialize, Serialize};

/// Travel direction in the tunnel. Inbound means toward the dig face
/// (descending cell index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heading {
    Inbound,
    Outbound,
}

/// The transit states a blocked robot can resume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResumeState {
    GotoDig,
    GotoDump,
}

impl ResumeState {
    pub fn into_fsm(self) -> FsmState {
        match self {
            ResumeState::GotoDig => FsmState::GotoDig,
            ResumeState::GotoDump => FsmState::GotoDump,
        }
    }
}

/// Robot trip machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsmState {
    /// Inbound toward the dig face (trips start here, at home).
    GotoDig,
    /// Excavating at the face; `left` work ticks remain after this one.
    Digging { left: u32 },
    /// One-tick turnaround where the trip turned back (face or abort point).
    ExitTunnel,
    /// Outbound toward the entrance, then home.
    GotoDump,
    /// Unloading at the deposit area.
    Dumping { left: u32 },
    /// Turnaround at home; at `left == 0` the next trip decision is due.
    ExitHome { left: u32 },
    /// Blocked mid-tunnel by another robot; resumes the wrapped state.
    Collision { resume: ResumeState },
    /// Sitting out a rest period at the rest area.
    Resting { left: u32 },
}

/// Bare state name, as recorded in per-tick log samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateTag {
    GotoDig,
    Digging,
    ExitTunnel,
    GotoDump,
    Dumping,
    ExitHome,
    Collision,
    Resting,
}

impl FsmState {
    pub fn tag(&self) -> StateTag {
        match self {
            FsmState::GotoDig => StateTag::GotoDig,
            FsmState::Digging { .. } => StateTag::Digging,
            FsmState::ExitTunnel => StateTag::ExitTunnel,
            FsmState::GotoDump => StateTag::GotoDump,
            FsmState::Dumping { .. } => StateTag::Dumping,
            FsmState::ExitHome { .. } => StateTag::ExitHome,
            FsmState::Collision { .. } => StateTag::Collision,
            FsmState::Resting { .. } => StateTag::Resting,
        }
    }
}

/// Per-trip odometry. `l_est` is the robot's running estimate of tunnel
/// length; it starts at the initial length and survives across trips.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdometryState {
    /// Current tunnel-length estimate, body lengths.
    pub l_est: f64,
    /// Reference length the extension is measured against.
    pub l0: f64,
}

impl OdometryState {
    pub fn new(l0: u32) -> Self {
        OdometryState {
            l_est: l0 as f64,
            l0: l0 as f64,
        }
    }

    /// Estimated extension beyond the initial length, floored at zero.
    pub fn delta_l(&self) -> f64 {
        (self.l_est - self.l0).max(0.0)
    }
}

/// Updates the length estimate with one raw trip measurement:
/// `l_est + gamma * (l_raw - l_est)`.
pub fn update_estimate(odometry: OdometryState, l_raw: f64, gamma: f64) -> OdometryState {
    OdometryState {
        l_est: odometry.l_est + gamma * (l_raw - odometry.l_est),
        ..odometry
    }
}

/// One raw tunnel-length measurement, taken at the moment a pellet is
/// grabbed: the true length plus a base odometry error uniform on
/// `[-sigma0, sigma0]` plus one uniform `[-sigma_collision, sigma_collision]`
/// term per collision suffered this trip, floored at zero. Always consumes
/// `1 + collisions` draws so stream audits stay aligned.
pub fn measure_length(
    l_true: u32,
    collisions: u32,
    noise: &NoiseConfig,
    stream: &mut Stream,
) -> f64 {
    let mut raw = l_true as f64 + stream.uniform(-noise.sigma0, noise.sigma0);
    for _ in 0..collisions {
        raw += stream.uniform(-noise.sigma_collision, noise.sigma_collision);
    }
    raw.max(0.0)
}

/// Full state of one robot.
#[derive(Debug, Clone, PartialEq)]
pub struct Robot {
    pub id: RobotId,
    pub fsm: FsmState,
    pub position: Position,
    pub heading: Heading,
    pub carrying: bool,
    pub odometry: OdometryState,
    pub policy: PolicyState,
    /// Contacts suffered since the current trip started.
    pub trip_collisions: u32,
    /// Trip counter: one per completed trip or rest period, starting at 1.
    pub trip_k: u32,
}

impl Robot {
    /// A fresh robot staged at home, ready for its first trip decision.
    pub fn new(id: RobotId, l0: u32, protocol: &ProtocolConfig) -> Self {
        Robot {
            id,
            fsm: FsmState::ExitHome { left: 0 },
            position: Position::Home,
            heading: Heading::Inbound,
            carrying: false,
            odometry: OdometryState::new(l0),
            policy: policy::init_policy(protocol),
            trip_collisions: 0,
            trip_k: 1,
        }
    }
}

/// What the robot can sense at its turn: strictly local.
#[derive(Debug, Clone, Copy, Default)]
pub struct Percepts {
    /// Standing on tunnel cell 0.
    pub at_dig_face: bool,
    /// In the home area.
    pub at_home: bool,
    /// In the deposit area.
    pub at_deposit: bool,
    /// The next cell along the current heading is occupied (tunnel only).
    pub ahead_occupied: bool,
}

/// What the robot asks the engine to do this tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    /// Nothing to arbitrate.
    Hold,
    /// Take the entrance cell from the home area.
    Enter,
    /// Move one cell along the heading; past the entrance this leaves the
    /// tunnel.
    Advance,
    /// Walk back to the home area (zones are never exclusive).
    GoHome,
    /// Dig work finished this tick: measure the tunnel and turn around.
    FinishDig,
    /// Dump work finished this tick: the pellet is delivered.
    FinishDump,
    /// Came home empty-handed: the trip failed.
    FinishEmpty,
    /// Rest period finished this tick.
    FinishRest,
}

/// Advances one robot by one tick, given its local percepts. Pure: the same
/// `(robot, percepts, t_dig, t_dump)` always yields the same result.
///
/// Movement requests (`Enter`/`Advance`) are subject to engine arbitration;
/// everything else here is unconditional. Contact entry and its give-up/
/// persist outcome are applied by the engine when an `Advance` of an inbound
/// robot is blocked.
pub fn fsm_step(robot: &Robot, p: Percepts, t_dig: u32, t_dump: u32) -> (Robot, Action) {
    let mut next = robot.clone();
    let action = match robot.fsm {
        FsmState::GotoDig => {
            if p.at_home {
                Action::Enter
            } else if p.at_dig_face {
                // Arrival tick was last tick; this is the first work tick.
                if t_dig == 1 {
                    next.fsm = FsmState::ExitTunnel;
                    next.carrying = true;
                    Action::FinishDig
                } else {
                    next.fsm = FsmState::Digging { left: t_dig - 1 };
                    Action::Hold
                }
            } else {
                Action::Advance
            }
        }
        FsmState::Digging { left } => {
            if left == 1 {
                next.fsm = FsmState::ExitTunnel;
                next.carrying = true;
                Action::FinishDig
            } else {
                next.fsm = FsmState::Digging { left: left - 1 };
                Action::Hold
            }
        }
        FsmState::ExitTunnel => {
            // One-tick U-turn wherever the trip reversed.
            next.fsm = FsmState::GotoDump;
            next.heading = Heading::Outbound;
            Action::Hold
        }
        FsmState::GotoDump => {
            if p.at_deposit {
                if t_dump == 1 {
                    next.fsm = FsmState::ExitHome { left: 1 };
                    next.carrying = false;
                    Action::FinishDump
                } else {
                    next.fsm = FsmState::Dumping { left: t_dump - 1 };
                    Action::Hold
                }
            } else if p.at_home {
                next.fsm = FsmState::ExitHome { left: 1 };
                Action::FinishEmpty
            } else {
                Action::Advance
            }
        }
        FsmState::Dumping { left } => {
            if left == 1 {
                next.fsm = FsmState::ExitHome { left: 1 };
                next.carrying = false;
                Action::FinishDump
            } else {
                next.fsm = FsmState::Dumping { left: left - 1 };
                Action::Hold
            }
        }
        FsmState::ExitHome { left } => {
            if left >= 1 {
                next.fsm = FsmState::ExitHome { left: left - 1 };
                Action::GoHome
            } else {
                // Decision point; the engine starts the next trip at the
                // top of the tick, so this is never reached mid-tick.
                Action::Hold
            }
        }
        FsmState::Collision { resume } => {
            if p.ahead_occupied {
                Action::Hold
            } else {
                next.fsm = resume.into_fsm();
                Action::Advance
            }
        }
        FsmState::Resting { left } => {
            if left == 1 {
                next.fsm = FsmState::ExitHome { left: 0 };
                Action::FinishRest
            } else if left > 1 {
                next.fsm = FsmState::Resting { left: left - 1 };
                Action::Hold
            } else {
                Action::Hold
            }
        }
    };
    (next, action)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn robot() -> Robot {
        Robot::new(0, 1, &ProtocolConfig::default())
    }

    fn in_state(fsm: FsmState) -> Robot {
        Robot { fsm, ..robot() }
    }

    const NOWHERE: Percepts = Percepts {
        at_dig_face: false,
        at_home: false,
        at_deposit: false,
        ahead_occupied: false,
    };

    #[test]
    fn fresh_robot_is_ready_to_decide_at_home() {
        let r = robot();
        assert_eq!(r.fsm, FsmState::ExitHome { left: 0 });
        assert_eq!(r.position, Position::Home);
        assert!(!r.carrying);
        assert_eq!(r.trip_k, 1);
        assert_eq!(r.odometry.l_est, 1.0);
    }

    #[test]
    fn goto_dig_enters_from_home_and_advances_in_tunnel() {
        let r = in_state(FsmState::GotoDig);
        let (next, action) = fsm_step(
            &r,
            Percepts {
                at_home: true,
                ..NOWHERE
            },
            8,
            4,
        );
        assert_eq!(action, Action::Enter);
        assert_eq!(next.fsm, FsmState::GotoDig);

        let (next, action) = fsm_step(&r, NOWHERE, 8, 4);
        assert_eq!(action, Action::Advance);
        assert_eq!(next.fsm, FsmState::GotoDig);
    }

    #[test]
    fn arriving_at_the_face_starts_digging_with_one_work_tick_done() {
        let r = in_state(FsmState::GotoDig);
        let face = Percepts {
            at_dig_face: true,
            ..NOWHERE
        };
        let (next, action) = fsm_step(&r, face, 8, 4);
        assert_eq!(action, Action::Hold);
        assert_eq!(next.fsm, FsmState::Digging { left: 7 });

        // A one-tick dig grabs immediately.
        let (next, action) = fsm_step(&r, face, 1, 4);
        assert_eq!(action, Action::FinishDig);
        assert_eq!(next.fsm, FsmState::ExitTunnel);
        assert!(next.carrying);
    }

    #[test]
    fn digging_counts_down_and_grabs_on_the_last_tick() {
        let r = in_state(FsmState::Digging { left: 3 });
        let face = Percepts {
            at_dig_face: true,
            ..NOWHERE
        };
        let (next, action) = fsm_step(&r, face, 8, 4);
        assert_eq!(action, Action::Hold);
        assert_eq!(next.fsm, FsmState::Digging { left: 2 });

        let r = in_state(FsmState::Digging { left: 1 });
        let (next, action) = fsm_step(&r, face, 8, 4);
        assert_eq!(action, Action::FinishDig);
        assert_eq!(next.fsm, FsmState::ExitTunnel);
        assert!(next.carrying);
        assert_eq!(next.heading, Heading::Inbound, "U-turn happens next tick");
    }

    #[test]
    fn exit_tunnel_is_a_one_tick_u_turn() {
        let mut r = in_state(FsmState::ExitTunnel);
        r.heading = Heading::Inbound;
        let (next, action) = fsm_step(&r, NOWHERE, 8, 4);
        assert_eq!(action, Action::Hold);
        assert_eq!(next.fsm, FsmState::GotoDump);
        assert_eq!(next.heading, Heading::Outbound);
    }

    #[test]
    fn goto_dump_advances_then_unloads_or_reports_empty() {
        let r = in_state(FsmState::GotoDump);
        let (_, action) = fsm_step(&r, NOWHERE, 8, 4);
        assert_eq!(action, Action::Advance);

        // Carrying robots exit into the deposit area and start dumping.
        let mut carrying = in_state(FsmState::GotoDump);
        carrying.carrying = true;
        let (next, action) = fsm_step(
            &carrying,
            Percepts {
                at_deposit: true,
                ..NOWHERE
            },
            8,
            4,
        );
        assert_eq!(action, Action::Hold);
        assert_eq!(next.fsm, FsmState::Dumping { left: 3 });

        // Empty-handed robots come straight home: the trip failed.
        let (next, action) = fsm_step(
            &r,
            Percepts {
                at_home: true,
                ..NOWHERE
            },
            8,
            4,
        );
        assert_eq!(action, Action::FinishEmpty);
        assert_eq!(next.fsm, FsmState::ExitHome { left: 1 });
    }

    #[test]
    fn dumping_counts_down_and_delivers_on_the_last_tick() {
        let mut r = in_state(FsmState::Dumping { left: 1 });
        r.carrying = true;
        let deposit = Percepts {
            at_deposit: true,
            ..NOWHERE
        };
        let (next, action) = fsm_step(&r, deposit, 8, 4);
        assert_eq!(action, Action::FinishDump);
        assert_eq!(next.fsm, FsmState::ExitHome { left: 1 });
        assert!(!next.carrying);
    }

    #[test]
    fn exit_home_turnaround_takes_one_tick() {
        let r = in_state(FsmState::ExitHome { left: 1 });
        let (next, action) = fsm_step(&r, NOWHERE, 8, 4);
        assert_eq!(action, Action::GoHome);
        assert_eq!(next.fsm, FsmState::ExitHome { left: 0 });
    }

    #[test]
    fn collision_holds_while_blocked_and_resumes_when_freed() {
        let r = in_state(FsmState::Collision {
            resume: ResumeState::GotoDig,
        });
        let blocked = Percepts {
            ahead_occupied: true,
            ..NOWHERE
        };
        let (next, action) = fsm_step(&r, blocked, 8, 4);
        assert_eq!(action, Action::Hold);
        assert_eq!(next.fsm, r.fsm);

        let (next, action) = fsm_step(&r, NOWHERE, 8, 4);
        assert_eq!(action, Action::Advance);
        assert_eq!(next.fsm, FsmState::GotoDig);

        let r = in_state(FsmState::Collision {
            resume: ResumeState::GotoDump,
        });
        let (next, action) = fsm_step(&r, NOWHERE, 8, 4);
        assert_eq!(action, Action::Advance);
        assert_eq!(next.fsm, FsmState::GotoDump);
    }

    #[test]
    fn resting_counts_down_then_finishes() {
        let r = in_state(FsmState::Resting { left: 2 });
        let (next, action) = fsm_step(&r, NOWHERE, 8, 4);
        assert_eq!(action, Action::Hold);
        assert_eq!(next.fsm, FsmState::Resting { left: 1 });

        let (next, action) = fsm_step(&next, NOWHERE, 8, 4);
        assert_eq!(action, Action::FinishRest);
        assert_eq!(next.fsm, FsmState::ExitHome { left: 0 });
    }

    #[test]
    fn estimator_matches_frozen_chains() {
        // (start, raw, gamma, n) -> expected after n identical updates,
        // evaluated independently.
        let cases = [
            (3.0, 5.0, 0.9, 1, 4.8),
            (1.0, 4.0, 0.9, 3, 3.997),
            (1.0, 4.0, 0.9, 10, 3.9999999997),
            (2.0, 2.0, 0.5, 5, 2.0),
            (0.0, 7.5, 0.25, 4, 5.126953125),
            (1.0, 33.0, 0.9, 2, 32.68),
            (5.0, 1.0, 1.0, 1, 1.0),
            (1.0, 2.0, 0.1, 20, 1.8784233454094308),
            (4.0, 4.5, 0.75, 6, 4.4998779296875),
            (10.0, 3.0, 0.6, 7, 3.0114688),
            (1.0, 1.25, 0.9, 1, 1.225),
            (2.5, 9.0, 0.35, 3, 7.2149375),
            (1.0, 50.0, 0.99, 5, 49.9999999951),
            (3.0, 3.125, 0.5, 12, 3.124969482421875),
            (0.5, 6.0, 0.8, 2, 5.78),
            (1.0, 11.0, 0.45, 9, 10.953946334160158),
            (7.0, 2.0, 0.15, 14, 2.5138483476544216),
            (2.0, 4.0, 0.9, 4, 3.9998),
            (1.5, 8.0, 0.65, 5, 7.96586078125),
            (9.0, 12.0, 0.05, 30, 11.356083708171187),
        ];
        for (start, raw, gamma, n, want) in cases {
            let mut odo = OdometryState { l_est: start, l0: 1.0 };
            for _ in 0..n {
                odo = update_estimate(odo, raw, gamma);
            }
            assert!(
                (odo.l_est - want).abs() <= 1e-12,
                "chain({start}, {raw}, {gamma}, {n}) = {}, want {want}",
                odo.l_est
            );
        }
    }

    #[test]
    fn estimator_error_decays_geometrically() {
        let (start, target, gamma) = (1.0, 4.0, 0.9);
        let mut odo = OdometryState {
            l_est: start,
            l0: 1.0,
        };
        for n in 1..=10u32 {
            odo = update_estimate(odo, target, gamma);
            let want = (1.0 - gamma).powi(n as i32) * (start - target).abs();
            assert!(
                ((odo.l_est - target).abs() - want).abs() <= 1e-12,
                "after {n} updates error {} want {want}",
                (odo.l_est - target).abs()
            );
        }
    }

    #[test]
    fn delta_l_is_floored_at_zero() {
        let odo = OdometryState { l_est: 0.4, l0: 1.0 };
        assert_eq!(odo.delta_l(), 0.0);
        let odo = OdometryState { l_est: 3.5, l0: 1.0 };
        assert!((odo.delta_l() - 2.5).abs() <= 1e-15);
    }

    #[test]
    fn noiseless_measurement_is_exact_and_draw_counts_stay_aligned() {
        use crate::rng::{Stream, StreamId};
        let silent = NoiseConfig {
            sigma0: 0.0,
            sigma_collision: 0.0,
        };
        let mut stream = Stream::new(5, StreamId::Noise(0));
        assert_eq!(measure_length(4, 0, &silent, &mut stream), 4.0);
        assert_eq!(measure_length(4, 3, &silent, &mut stream), 4.0);
        // 1 base draw, then 1 + 3 draws.
        assert_eq!(stream.draws(), 5);
    }

    proptest! {
        #[test]
        fn measurement_stays_within_the_error_support(
            l_true in 1u32..40,
            collisions in 0u32..10,
            seed in 0u64..1000,
        ) {
            use crate::rng::{Stream, StreamId};
            let noise = NoiseConfig { sigma0: 0.1, sigma_collision: 0.3 };
            let mut stream = Stream::new(seed, StreamId::Noise(1));
            let raw = measure_length(l_true, collisions, &noise, &mut stream);
            let slack = noise.sigma0 + collisions as f64 * noise.sigma_collision;
            prop_assert!(raw >= 0.0);
            prop_assert!((raw - l_true as f64).abs() <= slack + 1e-12);
            prop_assert_eq!(stream.draws(), 1 + collisions as u64);
        }

        #[test]
        fn fsm_step_is_pure(state_idx in 0usize..8, flags in 0u8..16) {
            let fsm = [
                FsmState::GotoDig,
                FsmState::Digging { left: 3 },
                FsmState::ExitTunnel,
                FsmState::GotoDump,
                FsmState::Dumping { left: 2 },
                FsmState::ExitHome { left: 1 },
                FsmState::Collision { resume: ResumeState::GotoDig },
                FsmState::Resting { left: 5 },
            ][state_idx];
            let p = Percepts {
                at_dig_face: flags & 1 != 0,
                at_home: flags & 2 != 0,
                at_deposit: flags & 4 != 0,
                ahead_occupied: flags & 8 != 0,
            };
            let r = in_state(fsm);
            let a = fsm_step(&r, p, 8, 4);
            let b = fsm_step(&r, p, 8, 4);
            prop_assert_eq!(a.0, b.0);
            prop_assert_eq!(a.1, b.1);
        }
    }
}
