//! Post-hoc analyses computed from an event log alone.
//!
//! Every function here takes the NDJSON record stream as its only input, so
//! the same analyses run identically on freshly simulated logs and on logs
//! replayed from disk. The run header record supplies the tunnel's starting
//! length, team size, and horizon.

use crate::agent::StateTag;
use crate::events::{Event, EventLog, Resolution, SampleRecord};
use crate::policy::TripOutcome;
use crate::world::{Position, RobotId};
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

/// Default number of time bins for the occupancy grid.
pub const DEFAULT_OCCUPANCY_BINS: usize = 60;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("log has no run header record")]
    MissingHeader,
    #[error("failed to write csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("failed to write: {0}")]
    Io(#[from] std::io::Error),
}

/// Work-share inequality of a set of per-robot tallies, in `[0, 1]`:
/// 0 for a perfectly even split, approaching 1 as one robot does everything.
/// `None` when the tallies are empty or sum to zero.
///
/// Computed as one minus twice the area under the Lorenz curve, via the
/// trapezoid sum over the sorted values.
pub fn gini(values: &[f64]) -> Option<f64> {
    let n = values.len();
    let total: f64 = values.iter().sum();
    if n == 0 || total <= 0.0 {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("tallies are finite"));
    let mut partial = 0.0;
    let mut trapezoids = 0.0;
    for v in sorted {
        trapezoids += 2.0 * partial + v; // S_{i-1} + S_i
        partial += v;
    }
    Some(1.0 - trapezoids / (n as f64 * total))
}

/// The same inequality index computed from mean absolute pairwise
/// differences; used to cross-check [`gini`].
pub fn gini_pairwise(values: &[f64]) -> Option<f64> {
    let n = values.len();
    let total: f64 = values.iter().sum();
    if n == 0 || total <= 0.0 {
        return None;
    }
    let mut diff_sum = 0.0;
    for a in values {
        for b in values {
            diff_sum += (a - b).abs();
        }
    }
    let mean = total / n as f64;
    Some(diff_sum / (2.0 * (n * n) as f64 * mean))
}

/// Lorenz curve of the tallies: `n + 1` points from `(0, 0)` to `(1, 1)`,
/// cumulative share of robots (sorted laziest first) against cumulative
/// share of the work. `None` when the tallies are empty or sum to zero.
pub fn lorenz(values: &[f64]) -> Option<Vec<[f64; 2]>> {
    let n = values.len();
    let total: f64 = values.iter().sum();
    if n == 0 || total <= 0.0 {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("tallies are finite"));
    let mut points = Vec::with_capacity(n + 1);
    points.push([0.0, 0.0]);
    let mut partial = 0.0;
    for (i, v) in sorted.iter().enumerate() {
        partial += v;
        points.push([(i + 1) as f64 / n as f64, partial / total]);
    }
    Some(points)
}

/// Per-robot tallies and exposure fractions for one run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RobotStats {
    pub robot: RobotId,
    pub deposits: u64,
    pub trips_started: u64,
    pub successful: u64,
    pub unsuccessful: u64,
    pub rested: u64,
    pub contacts_owned: u64,
    pub give_ups: u64,
    /// Fraction of this robot's in-tunnel time spent in contact with (or
    /// directly adjacent to) another robot. Zero if it never entered.
    pub contact_fraction: f64,
    /// Fraction of all time spent outside the tunnel (home, resting, or at
    /// the soil pile).
    pub outside_fraction: f64,
}

/// Summary of one run, computed from its event log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub horizon: u64,
    pub robots: u32,
    pub l0: u32,
    pub l_final: u32,
    pub deposits: u64,
    /// Deliveries per tick over the whole run.
    pub rate: f64,
    /// Deliveries in the first tenth of the run (how fast the team starts).
    pub early_deposits: u64,
    pub gini_deposits: Option<f64>,
    pub lorenz_deposits: Option<Vec<[f64; 2]>>,
    pub mean_contact_fraction: f64,
    pub mean_outside_fraction: f64,
    pub per_robot: Vec<RobotStats>,
}

impl MetricsReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn run_header(log: &EventLog) -> Result<(u32, u32, u64), MetricsError> {
    log.events()
        .find_map(|e| match e.event {
            Event::RunMeta { l0, robots, horizon } => Some((l0, robots, horizon)),
            _ => None,
        })
        .ok_or(MetricsError::MissingHeader)
}

/// Ticks at which deliveries were recorded, in order.
pub fn deposit_ticks(log: &EventLog) -> Vec<u64> {
    log.events()
        .filter(|e| matches!(e.event, Event::DepositMade { .. }))
        .map(|e| e.tick)
        .collect()
}

/// Computes the full run summary from a log.
pub fn compute(log: &EventLog) -> Result<MetricsReport, MetricsError> {
    let (l0, robots, horizon) = run_header(log)?;
    let n = robots as usize;

    let mut deposits = vec![0u64; n];
    let mut trips_started = vec![0u64; n];
    let mut outcome_counts = vec![[0u64; 3]; n]; // successful, unsuccessful, rested
    let mut contacts_owned = vec![0u64; n];
    let mut give_ups = vec![0u64; n];
    let mut l_final = l0;
    for e in log.events() {
        let idx = e.robot.map(|r| r as usize);
        match &e.event {
            Event::DepositMade { .. } => deposits[idx.expect("delivery has a robot")] += 1,
            Event::TripStarted { .. } => trips_started[idx.expect("trip has a robot")] += 1,
            Event::TripEnded { outcome } => {
                let slot = match outcome {
                    TripOutcome::Successful => 0,
                    TripOutcome::Unsuccessful => 1,
                    TripOutcome::Rested => 2,
                };
                outcome_counts[idx.expect("trip has a robot")][slot] += 1;
            }
            Event::ContactStarted { .. } => contacts_owned[idx.expect("contact has an owner")] += 1,
            Event::ContactResolved { resolution } => {
                if *resolution == Resolution::GiveUp {
                    give_ups[idx.expect("contact has an owner")] += 1;
                }
            }
            Event::TunnelGrew { l_true } => l_final = *l_true,
            _ => {}
        }
    }

    // Exposure fractions need per-tick adjacency, so walk samples grouped by
    // tick. Samples arrive tick-ordered.
    let mut in_tunnel = vec![0u64; n];
    let mut in_contact = vec![0u64; n];
    let mut outside = vec![0u64; n];
    let mut tick_group: Vec<&SampleRecord> = Vec::with_capacity(n);
    let mut flush = |group: &mut Vec<&SampleRecord>| {
        for s in group.iter() {
            let idx = s.robot as usize;
            match s.pos {
                Position::Tunnel(cell) => {
                    in_tunnel[idx] += 1;
                    let adjacent = group.iter().any(|o| {
                        o.robot != s.robot
                            && matches!(o.pos, Position::Tunnel(c)
                                if c + 1 == cell || c == cell + 1)
                    });
                    if s.contact || adjacent {
                        in_contact[idx] += 1;
                    }
                }
                Position::Home | Position::Rest | Position::Deposit => outside[idx] += 1,
            }
        }
        group.clear();
    };
    for s in log.samples() {
        if tick_group.last().is_some_and(|last| last.tick != s.tick) {
            flush(&mut tick_group);
        }
        tick_group.push(s);
    }
    flush(&mut tick_group);

    let per_robot: Vec<RobotStats> = (0..n)
        .map(|i| RobotStats {
            robot: i as RobotId,
            deposits: deposits[i],
            trips_started: trips_started[i],
            successful: outcome_counts[i][0],
            unsuccessful: outcome_counts[i][1],
            rested: outcome_counts[i][2],
            contacts_owned: contacts_owned[i],
            give_ups: give_ups[i],
            contact_fraction: if in_tunnel[i] == 0 {
                0.0
            } else {
                in_contact[i] as f64 / in_tunnel[i] as f64
            },
            outside_fraction: if horizon == 0 {
                0.0
            } else {
                outside[i] as f64 / horizon as f64
            },
        })
        .collect();

    let shares: Vec<f64> = deposits.iter().map(|&d| d as f64).collect();
    let total: u64 = deposits.iter().sum();
    let early_cutoff = horizon / 10;
    let early_deposits = deposit_ticks(log)
        .iter()
        .filter(|&&t| t <= early_cutoff)
        .count() as u64;
    let mean = |f: fn(&RobotStats) -> f64| {
        if n == 0 {
            0.0
        } else {
            per_robot.iter().map(f).sum::<f64>() / n as f64
        }
    };

    Ok(MetricsReport {
        horizon,
        robots,
        l0,
        l_final,
        deposits: total,
        rate: if horizon == 0 {
            0.0
        } else {
            total as f64 / horizon as f64
        },
        early_deposits,
        gini_deposits: gini(&shares),
        lorenz_deposits: lorenz(&shares),
        mean_contact_fraction: mean(|r| r.contact_fraction),
        mean_outside_fraction: mean(|r| r.outside_fraction),
        per_robot,
    })
}

/// Time-binned tunnel occupancy. Columns index distance from the entrance
/// (column 0 is the entrance-adjacent cell), which stays meaningful while
/// the far end grows; rows are equal spans of ticks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OccupancyGrid {
    /// Final tunnel length; the number of columns per row.
    pub columns: u32,
    /// First and last tick covered by each row.
    pub spans: Vec<[u64; 2]>,
    /// `rows[bin][distance]`: mean cell occupancy in `[0, 1]`, or `-1.0`
    /// where that cell did not yet exist for the entire bin.
    pub rows: Vec<Vec<f64>>,
}

/// Bins the sampled robot positions into an occupancy grid.
pub fn occupancy(log: &EventLog, bins: usize) -> Result<OccupancyGrid, MetricsError> {
    let (l0, robots, horizon) = run_header(log)?;
    // Tunnel length over time: grows by one at each growth event; events at
    // a tick precede that tick's samples.
    let growth_ticks: Vec<u64> = log
        .events()
        .filter(|e| matches!(e.event, Event::TunnelGrew { .. }))
        .map(|e| e.tick)
        .collect();
    let l_true = |tick: u64| l0 + growth_ticks.iter().filter(|&&g| g <= tick).count() as u32;
    let columns = l_true(horizon);

    if horizon == 0 {
        return Ok(OccupancyGrid {
            columns,
            spans: Vec::new(),
            rows: Vec::new(),
        });
    }
    let bins = bins.clamp(1, horizon as usize) as u64;
    let bin_of = |tick: u64| ((tick - 1) * bins / horizon) as usize;

    let mut spans = vec![[u64::MAX, 0u64]; bins as usize];
    let mut ticks_in = vec![0u64; bins as usize];
    for tick in 1..=horizon {
        let b = bin_of(tick);
        spans[b][0] = spans[b][0].min(tick);
        spans[b][1] = spans[b][1].max(tick);
        ticks_in[b] += 1;
    }

    let mut counts = vec![vec![0u64; columns as usize]; bins as usize];
    for s in log.samples() {
        if let Position::Tunnel(cell) = s.pos {
            let distance = l_true(s.tick) - 1 - cell;
            counts[bin_of(s.tick)][distance as usize] += 1;
        }
    }

    let rows = (0..bins as usize)
        .map(|b| {
            let existed_all_bin = l_true(spans[b][0]);
            let samples = (robots as u64 * ticks_in[b]) as f64;
            (0..columns)
                .map(|d| {
                    if d >= existed_all_bin {
                        -1.0
                    } else {
                        counts[b][d as usize] as f64 / samples
                    }
                })
                .collect()
        })
        .collect();

    Ok(OccupancyGrid {
        columns,
        spans,
        rows,
    })
}

/// Writes the delivery timeline: one row per delivery with its tick, the
/// robot that made it, and the running total.
pub fn write_deposits_csv<W: Write>(log: &EventLog, out: W) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tick", "robot", "deposit_count"])?;
    for e in log.events() {
        if let Event::DepositMade { deposit_count } = e.event {
            w.write_record([
                e.tick.to_string(),
                e.robot.expect("delivery has a robot").to_string(),
                deposit_count.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the occupancy grid: one row per time bin, one column per distance
/// from the entrance. `-1` marks cells that did not exist for the whole bin.
pub fn write_occupancy_csv<W: Write>(grid: &OccupancyGrid, out: W) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["tick_start".to_string(), "tick_end".to_string()];
    header.extend((0..grid.columns).map(|d| format!("dist_{d}")));
    w.write_record(&header)?;
    for (span, row) in grid.spans.iter().zip(&grid.rows) {
        let mut record = vec![span[0].to_string(), span[1].to_string()];
        record.extend(row.iter().map(|v| {
            if *v < 0.0 {
                "-1".to_string()
            } else {
                format!("{v:.6}")
            }
        }));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Counts samples in a state, for tests and quick inspections.
pub fn state_ticks(log: &EventLog, state: StateTag) -> u64 {
    log.samples().filter(|s| s.state == state).count() as u64
}
