//! The tick loop: trip decisions, movement arbitration, contact resolution,
//! growth, and logging.
//!
//! Within one tick, in order:
//!
//! 1. robots due a trip decision draw it and start a new trip or rest;
//! 2. a fresh permutation from the world stream fixes the update order; each
//!    robot senses its surroundings, steps its trip machine, and has its
//!    movement request arbitrated against current occupancy — a blocked
//!    inbound move starts a contact and draws that robot's give-up decision
//!    exactly once (timer bookkeeping rides along in the machine step);
//! 3. head-on pairs from earlier contacts attempt to squeeze past each
//!    other: per tick and adjacent pair, success has probability `p_pass`,
//!    or `p_pass_jam` when three or more robots are packed into the blockage;
//! 4. queued deliveries are recorded and the tunnel may grow by one cell;
//! 5. one sample per robot is appended to the log.
//!
//! Contacts exist only between an inbound robot and whoever occupies its
//! next cell; outbound robots queueing behind one another just wait, and
//! robots waiting at home for the entrance to clear are not in contact.
//! Outbound robots at the entrance always exit: the areas outside the
//! tunnel never exclude anyone.

use crate::agent::{self, Action, FsmState, Heading, Percepts, ResumeState, Robot};
use crate::config::{ConfigError, SimConfig};
use crate::events::{Event, EventLog, Record, Resolution, SampleRecord};
use crate::policy::{self, ReverseChoice, TripChoice, TripOutcome};
use crate::rng::{Stream, StreamId};
use crate::world::{Position, RobotId, WorldState};
use std::collections::BTreeSet;

/// One unresolved contact: `owner` is the inbound robot that ran into a
/// blocked cell and chose to persist. `blocker` is who it is negotiating
/// with, facing the way it faced at the start, and `pack` is how many
/// robots the blockage packed in when the decision was made. If the jam
/// churns and a different robot ends up in front, or the blocker turns
/// around (a queue encounter becoming head-on), or the blockage outgrows
/// what the robot committed to, that is a fresh encounter with a fresh
/// give-up decision.
#[derive(Debug, Clone, Copy)]
struct Contact {
    owner: RobotId,
    blocker: RobotId,
    blocker_heading: Heading,
    pack: u32,
    /// When the pair physically met; passes are attempted from the
    /// following tick on, and a patience renegotiation does not reset it
    /// (the robots never stopped squeezing).
    start_tick: u64,
    /// When the owner last drew its give-up decision.
    since: u64,
}

/// One running simulation.
pub struct Sim {
    cfg: SimConfig,
    world: WorldState,
    robots: Vec<Robot>,
    enter_streams: Vec<Stream>,
    reverse_streams: Vec<Stream>,
    noise_streams: Vec<Stream>,
    world_stream: Stream,
    contacts: Vec<Contact>,
    tick: u64,
    log: EventLog,
    /// Robots whose delivery this tick is waiting to be recorded.
    pending_deposits: Vec<RobotId>,
    /// Robots party to a contact that is active or touched this tick.
    flagged: BTreeSet<RobotId>,
}

impl Sim {
    pub fn new(cfg: &SimConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let robots: Vec<Robot> = (0..cfg.robots)
            .map(|id| Robot::new(id, cfg.world.l0, &cfg.protocol))
            .collect();
        let stream = |id| Stream::new(cfg.seed, id);
        let mut log = EventLog::new();
        log.push_event(
            0,
            None,
            Event::RunMeta {
                l0: cfg.world.l0,
                robots: cfg.robots,
                horizon: cfg.engine.horizon,
            },
        );
        Ok(Sim {
            world: WorldState::new(&cfg.world),
            robots,
            enter_streams: (0..cfg.robots).map(|r| stream(StreamId::Enter(r))).collect(),
            reverse_streams: (0..cfg.robots).map(|r| stream(StreamId::Reverse(r))).collect(),
            noise_streams: (0..cfg.robots).map(|r| stream(StreamId::Noise(r))).collect(),
            world_stream: stream(StreamId::World),
            contacts: Vec::new(),
            tick: 0,
            log,
            pending_deposits: Vec::new(),
            flagged: BTreeSet::new(),
            cfg: cfg.clone(),
        })
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn robots(&self) -> &[Robot] {
        &self.robots
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn into_log(self) -> EventLog {
        self.log
    }

    /// Draws consumed so far by one named stream (for audits).
    pub fn draws(&self, id: StreamId) -> u64 {
        match id {
            StreamId::Enter(r) => self.enter_streams[r as usize].draws(),
            StreamId::Reverse(r) => self.reverse_streams[r as usize].draws(),
            StreamId::Noise(r) => self.noise_streams[r as usize].draws(),
            StreamId::World => self.world_stream.draws(),
        }
    }

    /// Advances one tick. Returns false once the horizon is reached.
    pub fn step(&mut self) -> bool {
        if self.tick >= self.cfg.engine.horizon {
            return false;
        }
        self.tick += 1;
        self.flagged.clear();

        self.start_trips();

        let order = self.world_stream.permutation(self.robots.len());
        for idx in order {
            self.step_robot(idx);
        }

        self.attempt_passes();
        self.record_deposits();
        self.append_samples();
        true
    }

    /// Runs to the horizon.
    pub fn run_to_end(&mut self) {
        while self.step() {}
    }

    // ---- tick phases ----

    fn start_trips(&mut self) {
        for idx in 0..self.robots.len() {
            if self.robots[idx].fsm != (FsmState::ExitHome { left: 0 }) {
                continue;
            }
            let draw = self.enter_streams[idx].next_f64();
            let robot = &mut self.robots[idx];
            let choice = policy::decide_enter(&robot.policy, draw);
            robot.trip_collisions = 0;
            match choice {
                TripChoice::Enter => {
                    robot.fsm = FsmState::GotoDig;
                    robot.heading = Heading::Inbound;
                    assert!(!robot.carrying, "robot {} starts a trip loaded", robot.id);
                }
                TripChoice::Rest => {
                    robot.fsm = FsmState::Resting {
                        left: self.cfg.protocol.t_rest,
                    };
                    robot.position = Position::Rest;
                }
            }
            let k = robot.trip_k;
            let id = robot.id;
            self.log
                .push_event(self.tick, Some(id), Event::TripStarted { choice, k });
        }
    }

    fn percepts(&self, robot: &Robot) -> Percepts {
        match robot.position {
            Position::Home => Percepts {
                at_home: true,
                ..Percepts::default()
            },
            Position::Rest => Percepts::default(),
            Position::Deposit => Percepts {
                at_deposit: true,
                ..Percepts::default()
            },
            Position::Tunnel(cell) => {
                let ahead = match robot.heading {
                    Heading::Inbound => cell.checked_sub(1),
                    Heading::Outbound => (cell + 1 < self.world.len()).then(|| cell + 1),
                };
                Percepts {
                    at_dig_face: cell == 0,
                    ahead_occupied: ahead.map_or(false, |a| !self.world.is_free(a)),
                    ..Percepts::default()
                }
            }
        }
    }

    fn step_robot(&mut self, idx: usize) {
        let percepts = self.percepts(&self.robots[idx]);
        let (next, action) = agent::fsm_step(
            &self.robots[idx],
            percepts,
            self.cfg.engine.t_dig,
            self.cfg.engine.t_dump,
        );
        self.robots[idx] = next;
        match action {
            Action::Hold => self.renegotiate_if_blocker_changed(idx),
            Action::Enter => self.try_enter(idx),
            Action::Advance => self.advance(idx),
            Action::GoHome => self.robots[idx].position = Position::Home,
            Action::FinishDig => self.finish_dig(idx),
            Action::FinishDump => {
                self.finish_trip(idx, TripOutcome::Successful);
                self.pending_deposits.push(self.robots[idx].id);
            }
            Action::FinishEmpty => self.finish_trip(idx, TripOutcome::Unsuccessful),
            Action::FinishRest => {
                self.robots[idx].position = Position::Home;
                self.finish_trip(idx, TripOutcome::Rested);
            }
        }
    }

    fn try_enter(&mut self, idx: usize) {
        let entrance = self.world.entrance();
        // The entry is held while the mouth cell is taken, while the robot
        // just inside is on its way out (outbound traffic has right of way
        // at the mouth), or while that robot is stuck in a standoff —
        // walking in behind a stalled scene only packs it tighter.
        let held = !self.world.is_free(entrance)
            || entrance
                .checked_sub(1)
                .and_then(|inner| self.world.occupant(inner))
                .is_some_and(|r| {
                    let inner = &self.robots[r as usize];
                    inner.heading == Heading::Outbound
                        || matches!(inner.fsm, FsmState::Collision { .. })
                });
        if !held {
            self.world.occupy(entrance, self.robots[idx].id);
            self.robots[idx].position = Position::Tunnel(entrance);
            return;
        }
        // Bounced off a crowded mouth. The robot reconsiders the trip on
        // the spot with the same give-up policy it applies inside; there is
        // no squeeze to negotiate out here, so a persisting robot leaves no
        // record and simply shoves again next tick.
        let draw = self.reverse_streams[idx].next_f64();
        if policy::decide_reverse(&self.robots[idx].policy, draw) == ReverseChoice::GiveUp {
            self.robots[idx].fsm = FsmState::ExitHome { left: 1 };
            self.finish_trip(idx, TripOutcome::Unsuccessful);
        }
    }

    fn advance(&mut self, idx: usize) {
        let robot = &self.robots[idx];
        let Position::Tunnel(cell) = robot.position else {
            unreachable!("advance requested outside the tunnel")
        };
        match robot.heading {
            Heading::Outbound => {
                if cell == self.world.entrance() {
                    // Exiting is never blocked.
                    self.world.vacate(cell);
                    self.robots[idx].position = if self.robots[idx].carrying {
                        Position::Deposit
                    } else {
                        Position::Home
                    };
                } else if self.world.is_free(cell + 1) {
                    self.move_robot(idx, cell, cell + 1);
                }
                // A blocked outbound move just waits: contacts are owned by
                // the inbound side.
            }
            Heading::Inbound => {
                let target = cell
                    .checked_sub(1)
                    .expect("inbound robots at the face dig instead of advancing");
                if self.world.is_free(target) {
                    let was_contact = self.take_contact(self.robots[idx].id);
                    self.move_robot(idx, cell, target);
                    if was_contact {
                        // The blocker moved off; the contact dissolves.
                        self.resolve_contact(self.robots[idx].id, Resolution::Pass);
                    }
                } else {
                    self.start_contact(idx, target);
                }
            }
        }
    }

    fn move_robot(&mut self, idx: usize, from: u32, to: u32) {
        let id = self.world.vacate(from);
        debug_assert_eq!(id, self.robots[idx].id);
        self.world.occupy(to, id);
        self.robots[idx].position = Position::Tunnel(to);
    }

    /// Removes the active contact owned by `id`, if any.
    fn take_contact(&mut self, id: RobotId) -> bool {
        if let Some(at) = self.contacts.iter().position(|c| c.owner == id) {
            self.contacts.remove(at);
            true
        } else {
            false
        }
    }

    fn resolve_contact(&mut self, owner: RobotId, resolution: Resolution) {
        self.flagged.insert(owner);
        self.log
            .push_event(self.tick, Some(owner), Event::ContactResolved { resolution });
    }

    /// An inbound robot's next cell is occupied: start a contact, draw the
    /// give-up decision once, and either turn the trip around or persist.
    fn start_contact(&mut self, idx: usize, blocked_cell: u32) {
        let owner = self.robots[idx].id;
        debug_assert!(
            !self.contacts.iter().any(|c| c.owner == owner),
            "robot {owner} already owns an active contact"
        );
        let blocker = self
            .world
            .occupant(blocked_cell)
            .expect("blocked cell is occupied");
        self.log.push_event(
            self.tick,
            Some(owner),
            Event::ContactStarted {
                blockers: vec![blocker],
            },
        );
        self.flagged.insert(owner);
        self.flagged.insert(blocker);
        self.robots[idx].trip_collisions += 1;
        self.robots[blocker as usize].trip_collisions += 1;

        let draw = self.reverse_streams[idx].next_f64();
        match policy::decide_reverse(&self.robots[idx].policy, draw) {
            ReverseChoice::GiveUp => {
                // Turn the trip around; scored unsuccessful at homecoming.
                self.robots[idx].fsm = FsmState::ExitTunnel;
                self.resolve_contact(owner, Resolution::GiveUp);
            }
            ReverseChoice::Persist => {
                self.robots[idx].fsm = FsmState::Collision {
                    resume: ResumeState::GotoDig,
                };
                // A head-on partner is interrupted too.
                let b = blocker as usize;
                if self.robots[b].fsm == FsmState::GotoDump {
                    self.robots[b].fsm = FsmState::Collision {
                        resume: ResumeState::GotoDump,
                    };
                }
                self.contacts.push(Contact {
                    owner,
                    blocker,
                    blocker_heading: self.robots[b].heading,
                    pack: self.blockage_size(blocked_cell, blocked_cell + 1),
                    start_tick: self.tick,
                    since: self.tick,
                });
            }
        }
    }

    /// A persisting robot whose encounter has materially changed — a
    /// different robot churned in front of it, its blocker turned around
    /// (a queue encounter becoming head-on), the blockage packed in more
    /// robots than it committed to, or a full patience interval passed with
    /// the blockage unmoved — is in a new encounter: the old contact is
    /// superseded by a fresh one, with a fresh give-up decision.
    fn renegotiate_if_blocker_changed(&mut self, idx: usize) {
        let robot = &self.robots[idx];
        let is_owner = matches!(
            robot.fsm,
            FsmState::Collision {
                resume: ResumeState::GotoDig
            }
        );
        let (Position::Tunnel(cell), true) = (robot.position, is_owner) else {
            return;
        };
        let Some(current) = cell.checked_sub(1).and_then(|a| self.world.occupant(a)) else {
            return;
        };
        let owner = robot.id;
        let Some(at) = self.contacts.iter().position(|c| c.owner == owner) else {
            return;
        };
        let pack = self.blockage_size(cell - 1, cell);
        let same_pair = self.contacts[at].blocker == current
            && self.contacts[at].blocker_heading == self.robots[current as usize].heading;
        let same_encounter = same_pair
            && pack <= self.contacts[at].pack
            && self.tick - self.contacts[at].since < self.cfg.engine.t_patience as u64;
        if same_encounter {
            // A blockage that drained below the committed size re-arms the
            // trigger: packing back up is a new escalation.
            self.contacts[at].pack = pack;
            return;
        }
        // Against an unchanged pair the squeeze never stopped: the fresh
        // decision keeps the physical clock, so no pass attempt is skipped.
        let met = same_pair.then_some(self.contacts[at].start_tick);
        self.contacts.remove(at);
        self.start_contact(idx, cell - 1);
        if let Some(t0) = met {
            if let Some(c) = self.contacts.iter_mut().find(|c| c.owner == owner) {
                c.start_tick = t0;
            }
        }
    }

    fn finish_dig(&mut self, idx: usize) {
        let robot = &mut self.robots[idx];
        debug_assert_eq!(robot.position, Position::Tunnel(0));
        let l_raw = agent::measure_length(
            self.world.len(),
            robot.trip_collisions,
            &self.cfg.noise,
            &mut self.noise_streams[idx],
        );
        robot.odometry = agent::update_estimate(robot.odometry, l_raw, self.cfg.protocol.gamma);
        let (id, l_est) = (robot.id, robot.odometry.l_est);
        self.log
            .push_event(self.tick, Some(id), Event::EstimateUpdated { l_raw, l_est });
    }

    /// Scores a finished trip or rest period at homecoming: updates the
    /// policy from the robot's current extension estimate and advances its
    /// trip counter.
    fn finish_trip(&mut self, idx: usize, outcome: TripOutcome) {
        let robot = &mut self.robots[idx];
        robot.policy = policy::apply_trip_outcome(
            robot.policy,
            outcome,
            &self.cfg.protocol,
            self.cfg.world.l0 as f64,
            robot.odometry.delta_l(),
        );
        robot.trip_k += 1;
        let id = robot.id;
        self.log
            .push_event(self.tick, Some(id), Event::TripEnded { outcome });
    }

    /// Head-on pairs from contacts started on earlier ticks attempt to
    /// squeeze past each other, deepest pair first.
    fn attempt_passes(&mut self) {
        let mut due: Vec<(u32, RobotId)> = self
            .contacts
            .iter()
            .filter(|c| c.start_tick < self.tick)
            .filter_map(|c| match self.robots[c.owner as usize].position {
                Position::Tunnel(cell) => Some((cell, c.owner)),
                _ => None,
            })
            .collect();
        due.sort_unstable();

        let mut swapped: BTreeSet<RobotId> = BTreeSet::new();
        for (cell, owner) in due {
            if swapped.contains(&owner) || cell == 0 {
                continue;
            }
            let ahead = cell - 1;
            let Some(blocker) = self.world.occupant(ahead) else {
                continue; // freed; resolves by movement next tick
            };
            if swapped.contains(&blocker) {
                continue;
            }
            let b = &self.robots[blocker as usize];
            let head_on = b.heading == Heading::Outbound
                && matches!(
                    b.fsm,
                    FsmState::GotoDump
                        | FsmState::Collision {
                            resume: ResumeState::GotoDump
                        }
                );
            if !head_on {
                continue;
            }
            // A sideways squeeze pivots the pair through the two cells
            // flanking it, so each flank occupied by a third robot that
            // cannot lend its slack degrades the attempt by another jam
            // factor. An isolated pair keeps the full pass rate no matter
            // where it stands, and a pair against the dig face always has
            // the freshly-cut pocket to pivot through, however hard the
            // scrum presses from behind.
            let squeezes = if ahead == 0 {
                self.squeeze_pins(ahead, cell).min(1)
            } else {
                self.squeeze_pins(ahead, cell)
            };
            let p = if squeezes == 0 {
                self.cfg.engine.p_pass
            } else {
                self.cfg.engine.p_pass_jam.powi(squeezes)
            };
            if std::env::var_os("DIGPROBE").is_some() {
                let (run, crowd) = self.blockage_run(ahead, cell);
                eprintln!(
                    "PROBE t={} L={} cell={} pins={} run={} crowd={}",
                    self.tick,
                    self.world.len(),
                    cell,
                    squeezes,
                    run,
                    crowd
                );
            }
            if self.world_stream.next_f64() < p {
                self.swap_pair(owner, blocker, cell, ahead);
                swapped.insert(owner);
                swapped.insert(blocker);
            }
        }
    }

    /// Whether a third robot stacked against a squeezing pair loads the
    /// maneuver. Inbound bodies shove toward the face and hold their
    /// ground. An outbound body lends its slack while it can drain away,
    /// but caught on the back of a wedge it packs the scrum like anything
    /// else.
    fn loads_squeeze(&self, r: RobotId) -> bool {
        let robot = &self.robots[r as usize];
        if robot.heading == Heading::Inbound {
            return true;
        }
        match robot.position {
            Position::Tunnel(k) if k < self.world.entrance() => !self.world.is_free(k + 1),
            _ => false,
        }
    }

    /// Third robots loading a squeezing pair (0-3). The pivot needs room on
    /// the face side: any loading body within the next three cells toward
    /// the face closes in during the squeeze and re-blocks it. On the
    /// entrance side only a packed run presses — a gap there is real slack,
    /// and a robot at the entrance cell always has the open chamber to lean
    /// into — while a crowd shoving at the mouth from outside holds an
    /// otherwise unloaded squeeze at the plain jam rate.
    fn squeeze_pins(&self, ahead: u32, cell: u32) -> i32 {
        let (_, crowd) = self.blockage_run(ahead, cell);
        let mut pins = 0;
        for k in ahead.saturating_sub(3)..ahead {
            if let Some(r) = self.world.occupant(k) {
                if self.loads_squeeze(r) {
                    pins += 1;
                }
            }
        }
        let mut k = cell + 1;
        while k < self.world.len() {
            let Some(r) = self.world.occupant(k) else { break };
            if !self.loads_squeeze(r) || k == self.world.entrance() {
                break;
            }
            pins += 1;
            k += 1;
        }
        if pins == 0 && crowd > 0 {
            pins = 1;
        }
        pins.min(3)
    }

    /// The blockage around a blocked pair: the contiguous occupied run
    /// containing it, and — when that run reaches the entrance — the crowd
    /// of robots pressing at the mouth from outside while they wait to
    /// enter.
    fn blockage_run(&self, ahead: u32, cell: u32) -> (u32, u32) {
        let mut lo = ahead;
        while lo > 0 && !self.world.is_free(lo - 1) {
            lo -= 1;
        }
        let mut hi = cell;
        while hi + 1 < self.world.len() && !self.world.is_free(hi + 1) {
            hi += 1;
        }
        let crowd = if hi == self.world.entrance() {
            self.robots
                .iter()
                .filter(|r| r.position == Position::Home && r.fsm == FsmState::GotoDig)
                .count() as u32
        } else {
            0
        };
        (hi - lo + 1, crowd)
    }

    /// Total robots packed into or pressing on the blockage around a pair.
    fn blockage_size(&self, ahead: u32, cell: u32) -> u32 {
        let (run, crowd) = self.blockage_run(ahead, cell);
        run + crowd
    }

    /// The pair squeezes past: cells swap, both resume their trips.
    fn swap_pair(&mut self, owner: RobotId, blocker: RobotId, owner_cell: u32, blocker_cell: u32) {
        self.world.vacate(owner_cell);
        self.world.vacate(blocker_cell);
        self.world.occupy(blocker_cell, owner);
        self.world.occupy(owner_cell, blocker);
        self.robots[owner as usize].position = Position::Tunnel(blocker_cell);
        self.robots[blocker as usize].position = Position::Tunnel(owner_cell);
        if let FsmState::Collision { resume } = self.robots[owner as usize].fsm {
            self.robots[owner as usize].fsm = resume.into_fsm();
        }
        if let FsmState::Collision { resume } = self.robots[blocker as usize].fsm {
            self.robots[blocker as usize].fsm = resume.into_fsm();
        }
        let removed = self.take_contact(owner);
        debug_assert!(removed);
        self.flagged.insert(blocker);
        self.resolve_contact(owner, Resolution::Pass);
    }

    fn record_deposits(&mut self) {
        for at in 0..self.pending_deposits.len() {
            let by = self.pending_deposits[at];
            let digger = self.world.occupant(0).filter(|&r| {
                matches!(self.robots[r as usize].fsm, FsmState::Digging { .. })
            });
            let grew = self.world.record_deposit(digger);
            self.log.push_event(
                self.tick,
                Some(by),
                Event::DepositMade {
                    deposit_count: self.world.deposit_count(),
                },
            );
            if grew {
                for robot in &mut self.robots {
                    if let Position::Tunnel(cell) = robot.position {
                        if digger != Some(robot.id) {
                            robot.position = Position::Tunnel(cell + 1);
                        }
                    }
                }
                self.log.push_event(
                    self.tick,
                    None,
                    Event::TunnelGrew {
                        l_true: self.world.len(),
                    },
                );
            }
        }
        self.pending_deposits.clear();
    }

    fn append_samples(&mut self) {
        for contact in &self.contacts {
            self.flagged.insert(contact.owner);
            if let Position::Tunnel(cell) = self.robots[contact.owner as usize].position {
                if let Some(blocker) = cell.checked_sub(1).and_then(|a| self.world.occupant(a)) {
                    self.flagged.insert(blocker);
                }
            }
        }
        for robot in &self.robots {
            self.log.push(Record::Sample(SampleRecord {
                tick: self.tick,
                robot: robot.id,
                state: robot.fsm.tag(),
                pos: robot.position,
                heading: robot.heading,
                contact: self.flagged.contains(&robot.id),
            }));
        }
    }
}

/// Result of a completed run.
pub struct RunResult {
    pub log: EventLog,
    pub deposits: u64,
    pub l_final: u32,
}

/// Runs one full simulation from a validated configuration.
pub fn run(cfg: &SimConfig) -> Result<RunResult, ConfigError> {
    let mut sim = Sim::new(cfg)?;
    sim.run_to_end();
    Ok(RunResult {
        deposits: sim.world.deposit_count(),
        l_final: sim.world.len(),
        log: sim.into_log(),
    })
}
