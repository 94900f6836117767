//! Parameter sweeps and protocol comparisons over batches of runs, plus the
//! small rank statistics used to judge them.
//!
//! Sweeps use common random numbers: replicate `i` of every grid cell runs
//! with seed `base_seed + i`, so cells differ only in the parameters under
//! study and not in their random draws.

use crate::config::{ConfigError, ProtocolKind, SimConfig};
use crate::engine;
use crate::metrics::{self, MetricsReport};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Grid specification for the give-up-rate sweep: every listed give-up
/// probability is run against every fixed tunnel length, `seeds` times.
/// Growth is disabled so each cell measures a steady length.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    /// Give-up probabilities to test.
    pub reversal_grid: Vec<f64>,
    /// Fixed tunnel lengths to test.
    pub length_grid: Vec<u32>,
    /// Replicates per cell.
    pub seeds: u32,
    /// Seed of the first replicate; replicate `i` uses `base_seed + i`.
    pub base_seed: u64,
    /// Ticks per run.
    pub horizon: u64,
    /// Everything else (team size, timers, ...) comes from this base
    /// configuration; its protocol, length, growth, seed, and horizon are
    /// overridden per cell.
    pub base: SimConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            reversal_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
            length_grid: (2..=10).collect(),
            seeds: 20,
            base_seed: 0,
            horizon: 3600,
            base: SimConfig::default(),
        }
    }
}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// One sweep measurement: delivery rate of one replicate of one cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateCell {
    pub reversal: f64,
    pub length: u32,
    pub seed: u64,
    /// Deliveries per tick.
    pub rate: f64,
}

/// All measurements of one sweep, with the grids that produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateMatrix {
    pub reversal_grid: Vec<f64>,
    pub length_grid: Vec<u32>,
    pub seeds: u32,
    pub cells: Vec<RateCell>,
}

impl RateMatrix {
    /// Mean rate over replicates of one cell.
    pub fn mean_rate(&self, reversal: f64, length: u32) -> f64 {
        let (mut sum, mut n) = (0.0, 0u32);
        for c in &self.cells {
            if c.reversal == reversal && c.length == length {
                sum += c.rate;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// For each length, the give-up probability with the best mean rate.
    /// Ties go to the smaller probability.
    pub fn optimal_reversal_per_length(&self) -> Vec<(u32, f64)> {
        self.length_grid
            .iter()
            .map(|&l| {
                let mut best = (f64::NEG_INFINITY, 0.0);
                for &p in &self.reversal_grid {
                    let mean = self.mean_rate(p, l);
                    if mean > best.0 {
                        best = (mean, p);
                    }
                }
                (l, best.1)
            })
            .collect()
    }

    /// Long-format CSV: one row per replicate per cell.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["reversal", "length", "seed", "rate"])?;
        for c in &self.cells {
            w.write_record([
                c.reversal.to_string(),
                c.length.to_string(),
                c.seed.to_string(),
                c.rate.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the full give-up-rate sweep.
pub fn sweep_reversal(spec: &SweepSpec) -> Result<RateMatrix, ConfigError> {
    let mut cells = Vec::with_capacity(
        spec.reversal_grid.len() * spec.length_grid.len() * spec.seeds as usize,
    );
    for &length in &spec.length_grid {
        for &reversal in &spec.reversal_grid {
            for i in 0..spec.seeds {
                let mut cfg = spec.base.clone();
                cfg.protocol.kind = ProtocolKind::Reversal;
                cfg.protocol.fixed_reversal = reversal;
                cfg.world.l0 = length;
                cfg.world.growth = false;
                cfg.engine.horizon = spec.horizon;
                cfg.seed = spec.base_seed + i as u64;
                let result = engine::run(&cfg)?;
                cells.push(RateCell {
                    reversal,
                    length,
                    seed: cfg.seed,
                    rate: if spec.horizon == 0 {
                        0.0
                    } else {
                        result.deposits as f64 / spec.horizon as f64
                    },
                });
            }
        }
    }
    Ok(RateMatrix {
        reversal_grid: spec.reversal_grid.clone(),
        length_grid: spec.length_grid.clone(),
        seeds: spec.seeds,
        cells,
    })
}

/// One protocol's outcome on one seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub deposits: u64,
    pub early_deposits: u64,
    pub gini: Option<f64>,
    pub contact_fraction: f64,
    pub outside_fraction: f64,
}

/// One protocol's outcomes across all seeds, with their means.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolSummary {
    pub protocol: ProtocolKind,
    pub per_seed: Vec<SeedOutcome>,
    pub mean_deposits: f64,
    pub sd_deposits: f64,
    pub mean_early_deposits: f64,
    /// Mean over seeds where the index is defined.
    pub mean_gini: Option<f64>,
    pub mean_contact_fraction: f64,
    pub mean_outside_fraction: f64,
}

/// Matched comparison of all three protocols on a shared seed list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    pub horizon: u64,
    pub seeds: Vec<u64>,
    pub protocols: Vec<ProtocolSummary>,
}

impl Comparison {
    pub fn summary(&self, kind: ProtocolKind) -> &ProtocolSummary {
        self.protocols
            .iter()
            .find(|p| p.protocol == kind)
            .expect("all three protocols are present")
    }

    /// Per-seed deposit counts for one protocol, in seed-list order.
    pub fn deposits(&self, kind: ProtocolKind) -> Vec<f64> {
        self.summary(kind)
            .per_seed
            .iter()
            .map(|s| s.deposits as f64)
            .collect()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }

    /// Long-format CSV: one row per protocol per seed.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "protocol",
            "seed",
            "deposits",
            "early_deposits",
            "gini",
            "contact_fraction",
            "outside_fraction",
        ])?;
        for p in &self.protocols {
            let name = serde_json::to_value(p.protocol)
                .expect("kind serializes")
                .as_str()
                .expect("kind is a string")
                .to_string();
            for s in &p.per_seed {
                w.write_record([
                    name.clone(),
                    s.seed.to_string(),
                    s.deposits.to_string(),
                    s.early_deposits.to_string(),
                    s.gini.map(|g| g.to_string()).unwrap_or_default(),
                    s.contact_fraction.to_string(),
                    s.outside_fraction.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs every protocol on every seed with otherwise identical settings and
/// summarizes the outcomes. Seeds are shared across protocols, so per-seed
/// differences are paired.
pub fn compare_protocols(base: &SimConfig, seeds: &[u64]) -> Result<Comparison, ConfigError> {
    let kinds = [
        ProtocolKind::Active,
        ProtocolKind::Reversal,
        ProtocolKind::Adaptive,
    ];
    let mut protocols = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let mut per_seed = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.protocol.kind = kind;
            cfg.seed = seed;
            let result = engine::run(&cfg)?;
            let report: MetricsReport =
                metrics::compute(&result.log).expect("fresh logs carry a header");
            per_seed.push(SeedOutcome {
                seed,
                deposits: report.deposits,
                early_deposits: report.early_deposits,
                gini: report.gini_deposits,
                contact_fraction: report.mean_contact_fraction,
                outside_fraction: report.mean_outside_fraction,
            });
        }
        let n = per_seed.len() as f64;
        let mean = |f: &dyn Fn(&SeedOutcome) -> f64| {
            if per_seed.is_empty() {
                0.0
            } else {
                per_seed.iter().map(|s| f(s)).sum::<f64>() / n
            }
        };
        let mean_deposits = mean(&|s| s.deposits as f64);
        let sd_deposits = if per_seed.len() < 2 {
            0.0
        } else {
            let ss: f64 = per_seed
                .iter()
                .map(|s| (s.deposits as f64 - mean_deposits).powi(2))
                .sum();
            (ss / (n - 1.0)).sqrt()
        };
        let defined: Vec<f64> = per_seed.iter().filter_map(|s| s.gini).collect();
        protocols.push(ProtocolSummary {
            protocol: kind,
            mean_deposits,
            sd_deposits,
            mean_early_deposits: mean(&|s| s.early_deposits as f64),
            mean_gini: if defined.is_empty() {
                None
            } else {
                Some(defined.iter().sum::<f64>() / defined.len() as f64)
            },
            mean_contact_fraction: mean(&|s| s.contact_fraction),
            mean_outside_fraction: mean(&|s| s.outside_fraction),
            per_seed,
        });
    }
    Ok(Comparison {
        horizon: base.engine.horizon,
        seeds: seeds.to_vec(),
        protocols,
    })
}

/// Average ranks (ties share their mean rank), 1-based.
fn ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = mean_rank;
        }
        i = j + 1;
    }
    out
}

/// Rank correlation between two paired samples, in `[-1, 1]`: Pearson
/// correlation of the average ranks. `None` if fewer than two pairs or
/// either side is constant.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len(), "paired samples");
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let mean = (n + 1) as f64 / 2.0;
    let (mut cov, mut var_x, mut var_y) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (rx[i] - mean, ry[i] - mean);
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return None;
    }
    Some(cov / (var_x * var_y).sqrt())
}

/// One-sided sign test: probability of seeing at least the observed number
/// of positive differences among the nonzero ones if positive and negative
/// were equally likely. Small values support "first sample tends larger".
/// Returns 1.0 when every difference is zero.
pub fn sign_test_p(diffs: &[f64]) -> f64 {
    let n = diffs.iter().filter(|d| **d != 0.0).count() as u64;
    let k = diffs.iter().filter(|d| **d > 0.0).count() as u64;
    if n == 0 {
        return 1.0;
    }
    // Upper binomial tail at p = 1/2: sum C(n, i) for i >= k, over 2^n.
    let mut coef = 1.0f64; // C(n, 0)
    let mut tail = 0.0f64;
    for i in 0..=n {
        if i >= k {
            tail += coef;
        }
        coef = coef * (n - i) as f64 / (i + 1) as f64;
    }
    tail / (n as f64).exp2()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_correlation_hits_the_extremes() {
        assert_eq!(
            spearman_rho(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]),
            Some(1.0)
        );
        assert_eq!(spearman_rho(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
    }

    #[test]
    fn rank_correlation_averages_tied_ranks() {
        // xs ranks: [1, 2.5, 2.5, 4]; ys ranks: [2, 1, 4, 3].
        let rho = spearman_rho(&[1.0, 2.0, 2.0, 3.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert!((rho - 0.31622776601683794).abs() < 1e-12, "{rho}");
    }

    #[test]
    fn rank_correlation_declines_degenerate_input() {
        assert_eq!(spearman_rho(&[1.0], &[2.0]), None);
        assert_eq!(spearman_rho(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
    }

    #[test]
    fn sign_test_matches_hand_computed_tails() {
        assert_eq!(sign_test_p(&[1.0; 5]), 1.0 / 32.0);
        // 15 positives of 20: tail C(20,15..=20) / 2^20 = 21700 / 1048576.
        let mut diffs = vec![1.0; 15];
        diffs.extend([-1.0; 5]);
        assert_eq!(sign_test_p(&diffs), 21700.0 / 1048576.0);
        // Zeros are dropped: 2 positives of 3 nonzero.
        assert_eq!(sign_test_p(&[1.0, 0.0, -1.0, 1.0]), 0.5);
        assert_eq!(sign_test_p(&[0.0, 0.0]), 1.0);
        // All negative: the tail includes everything.
        assert_eq!(sign_test_p(&[-1.0, -2.0]), 1.0);
    }

    #[test]
    fn tiny_sweep_covers_the_grid_with_shared_seeds() {
        let spec = SweepSpec {
            reversal_grid: vec![0.2, 0.8],
            length_grid: vec![2, 3],
            seeds: 2,
            base_seed: 5,
            horizon: 400,
            base: SimConfig::default(),
        };
        let matrix = sweep_reversal(&spec).unwrap();
        assert_eq!(matrix.cells.len(), 8);
        for (p, l) in [(0.2, 2), (0.2, 3), (0.8, 2), (0.8, 3)] {
            let seeds: Vec<u64> = matrix
                .cells
                .iter()
                .filter(|c| c.reversal == p && c.length == l)
                .map(|c| c.seed)
                .collect();
            assert_eq!(seeds, vec![5, 6], "cell ({p}, {l})");
        }
        assert!(matrix.cells.iter().all(|c| c.rate >= 0.0));
        let mut csv_out = Vec::new();
        matrix.write_csv(&mut csv_out).unwrap();
        let text = String::from_utf8(csv_out).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.starts_with("reversal,length,seed,rate\n"));
    }

    #[test]
    fn best_give_up_rate_breaks_ties_toward_the_smaller_value() {
        let matrix = RateMatrix {
            reversal_grid: vec![0.1, 0.5],
            length_grid: vec![2],
            seeds: 1,
            cells: vec![
                RateCell {
                    reversal: 0.1,
                    length: 2,
                    seed: 0,
                    rate: 0.5,
                },
                RateCell {
                    reversal: 0.5,
                    length: 2,
                    seed: 0,
                    rate: 0.5,
                },
            ],
        };
        assert_eq!(matrix.optimal_reversal_per_length(), vec![(2, 0.1)]);
    }

    #[test]
    fn spec_round_trips_and_rejects_unknown_keys() {
        let spec = SweepSpec::from_json(r#"{"seeds": 3, "horizon": 100}"#).unwrap();
        assert_eq!(spec.seeds, 3);
        assert_eq!(spec.horizon, 100);
        assert_eq!(spec.reversal_grid.len(), 11);
        assert_eq!(spec.length_grid, (2..=10).collect::<Vec<u32>>());
        assert!(SweepSpec::from_json(r#"{"seedz": 3}"#).is_err());
    }

    #[test]
    fn comparison_runs_all_protocols_on_the_shared_seeds() {
        let mut base = SimConfig::default();
        base.engine.horizon = 600;
        let cmp = compare_protocols(&base, &[0, 1]).unwrap();
        assert_eq!(cmp.protocols.len(), 3);
        assert_eq!(cmp.seeds, vec![0, 1]);
        for p in &cmp.protocols {
            assert_eq!(p.per_seed.len(), 2);
            let mean = p.per_seed.iter().map(|s| s.deposits as f64).sum::<f64>() / 2.0;
            assert!((p.mean_deposits - mean).abs() < 1e-12);
        }
        let mut csv_out = Vec::new();
        cmp.write_csv(&mut csv_out).unwrap();
        let text = String::from_utf8(csv_out).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.contains("\nactive,0,"));
        assert!(text.contains("\nadaptive,1,"));
        let json = cmp.to_json_pretty();
        assert!(json.contains("\"protocol\": \"reversal\""));
    }
}
