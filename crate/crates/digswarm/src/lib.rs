//! Discrete-time simulator of a robot collective excavating a growing,
//! single-file tunnel.
//!
//! A small team of robots shuttles between a home area and the dig face of a
//! tunnel one body length wide, carrying pellets back one at a time. Robots
//! cannot drive through each other, so traffic in the tunnel is the central
//! obstacle: every trip risks collisions, and collisions near the face can
//! clog the passage entirely. Each batch of `deposits_per_growth` deliveries
//! extends the tunnel by one cell, so trips get longer as work progresses.
//!
//! Three trip protocols are implemented:
//!
//! - `active`: always head for the face, never turn back.
//! - `reversal`: on contact with another robot while inbound, give up and go
//!   home with a fixed probability.
//! - `adaptive`: tune both the give-up probability and the probability of
//!   starting a trip at all from the robot's own odometry estimate of how far
//!   the tunnel has grown, rewarding delivery and punishing failure.
//!
//! Every run is driven by named, counter-based random streams derived from a
//! single seed, so results are reproducible byte for byte and each random
//! decision can be audited after the fact. All analyses are computed from the
//! run's event log alone.

pub mod agent;
pub mod config;
pub mod engine;
pub mod events;
pub mod metrics;
pub mod policy;
pub mod rng;
pub mod sweep;
pub mod world;

pub use config::SimConfig;
pub use engine::{run, Sim};
pub use events::EventLog;
pub use metrics::MetricsReport;
