//! Run configuration: JSON-loadable, strictly validated.
//!
//! Every field has a default, so `{}` parses to the stock configuration.
//! Unknown keys are rejected rather than silently ignored, and validation
//! errors name the offending field.

use serde::{Deserialize, Serialize};

/// Which trip protocol the robots run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    /// Always head for the face; never give up on contact.
    Active,
    /// Give up on inbound contact with a fixed probability.
    Reversal,
    /// Learn both the give-up and the trip-start probability from odometry.
    Adaptive,
}

/// Parameters of the trip protocols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    /// Give-up probability at zero extension; also the adaptive start value.
    pub alpha: f64,
    /// Fixed give-up probability used by the `reversal` protocol.
    pub fixed_reversal: f64,
    /// Smoothing factor of the tunnel-length estimator, in (0, 1].
    pub gamma: f64,
    /// Learning rate of the trip-start probability.
    pub eta: f64,
    /// Recovery added to the trip-start probability after a rest.
    pub xi: f64,
    /// Rest duration, ticks.
    pub t_rest: u32,
    /// Exponent of the give-up law, in (0, 1).
    pub rev_exponent: f64,
    /// Exponent of the trip-start update law, greater than 1.
    pub ent_exponent: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            kind: ProtocolKind::Adaptive,
            alpha: 0.6,
            fixed_reversal: 0.8,
            gamma: 0.9,
            eta: 0.2,
            xi: 0.05,
            t_rest: 60,
            rev_exponent: 0.5,
            ent_exponent: 2.0,
        }
    }
}

/// The excavation site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    /// Initial tunnel length, cells.
    pub l0: u32,
    /// Deposits required per one-cell extension.
    pub deposits_per_growth: u32,
    /// Whether deliveries extend the tunnel (sweeps turn this off).
    pub growth: bool,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            l0: 1,
            deposits_per_growth: 10,
            growth: true,
        }
    }
}

/// Tick loop and traffic parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    /// Run length, ticks. One tick is one second and one body length of travel.
    pub horizon: u64,
    /// Per-tick probability that two head-on robots squeeze past each other.
    pub p_pass: f64,
    /// Same, when three or more robots are packed into the blockage.
    pub p_pass_jam: f64,
    /// Ticks to excavate one pellet at the dig face.
    pub t_dig: u32,
    /// Ticks to unload one pellet at the deposit area.
    pub t_dump: u32,
    /// Ticks a blocked robot squeezes before reconsidering its give-up
    /// decision against the same unchanged blockage.
    pub t_patience: u32,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            horizon: 10_800,
            p_pass: 0.5,
            p_pass_jam: 0.1,
            t_dig: 8,
            t_dump: 4,
            t_patience: 1,
        }
    }
}

/// Odometry error model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Half-width of the base length-measurement error, body lengths.
    pub sigma0: f64,
    /// Extra half-width added per collision suffered on the trip.
    pub sigma_collision: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigma0: 0.1,
            sigma_collision: 0.3,
        }
    }
}

/// Full configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Number of robots.
    pub robots: u32,
    /// Run seed; every random stream derives from it.
    pub seed: u64,
    pub protocol: ProtocolConfig,
    pub world: WorldConfig,
    pub engine: EngineConfig,
    pub noise: NoiseConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            robots: 4,
            seed: 0,
            protocol: ProtocolConfig::default(),
            world: WorldConfig::default(),
            engine: EngineConfig::default(),
            noise: NoiseConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("robots must be at least 1, got {0}")]
    Robots(u32),
    #[error("{name} must be a probability in [0, 1], got {value}")]
    Probability { name: &'static str, value: f64 },
    #[error("gamma must be in (0, 1], got {0}")]
    Gamma(f64),
    #[error("rev_exponent must be in (0, 1) for the adaptive protocol, got {0}")]
    RevExponent(f64),
    #[error("ent_exponent must be greater than 1 for the adaptive protocol, got {0}")]
    EntExponent(f64),
    #[error("{name} must be at least 1, got {value}")]
    AtLeastOne { name: &'static str, value: u64 },
    #[error("{name} must be finite and non-negative, got {value}")]
    NonNegative { name: &'static str, value: f64 },
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigLoadError {
    #[error("config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

fn check_probability(name: &'static str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ConfigError::Probability { name, value })
    }
}

fn check_non_negative(name: &'static str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(ConfigError::NonNegative { name, value })
    }
}

fn check_at_least_one(name: &'static str, value: u64) -> Result<(), ConfigError> {
    if value >= 1 {
        Ok(())
    } else {
        Err(ConfigError::AtLeastOne { name, value })
    }
}

impl SimConfig {
    /// Parses a strict JSON configuration and validates it. Missing fields
    /// take their defaults, so `{}` yields the stock configuration.
    pub fn from_json(text: &str) -> Result<Self, ConfigLoadError> {
        let cfg: SimConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.robots < 1 {
            return Err(ConfigError::Robots(self.robots));
        }
        let p = &self.protocol;
        check_probability("alpha", p.alpha)?;
        check_probability("fixed_reversal", p.fixed_reversal)?;
        if !(p.gamma.is_finite() && p.gamma > 0.0 && p.gamma <= 1.0) {
            return Err(ConfigError::Gamma(p.gamma));
        }
        check_non_negative("eta", p.eta)?;
        check_non_negative("xi", p.xi)?;
        check_at_least_one("t_rest", p.t_rest as u64)?;
        if p.kind == ProtocolKind::Adaptive {
            if !(p.rev_exponent.is_finite() && p.rev_exponent > 0.0 && p.rev_exponent < 1.0) {
                return Err(ConfigError::RevExponent(p.rev_exponent));
            }
            if !(p.ent_exponent.is_finite() && p.ent_exponent > 1.0) {
                return Err(ConfigError::EntExponent(p.ent_exponent));
            }
        }
        check_at_least_one("l0", self.world.l0 as u64)?;
        check_at_least_one("deposits_per_growth", self.world.deposits_per_growth as u64)?;
        check_probability("p_pass", self.engine.p_pass)?;
        check_probability("p_pass_jam", self.engine.p_pass_jam)?;
        check_at_least_one("t_dig", self.engine.t_dig as u64)?;
        check_at_least_one("t_dump", self.engine.t_dump as u64)?;
        check_at_least_one("t_patience", self.engine.t_patience as u64)?;
        check_non_negative("sigma0", self.noise.sigma0)?;
        check_non_negative("sigma_collision", self.noise.sigma_collision)?;
        Ok(())
    }

    /// Canonical JSON echo of the fully resolved configuration.
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_stock_config() {
        let cfg = SimConfig::from_json("{}").unwrap();
        assert_eq!(cfg, SimConfig::default());
        assert_eq!(cfg.robots, 4);
        assert_eq!(cfg.protocol.alpha, 0.6);
        assert_eq!(cfg.protocol.fixed_reversal, 0.8);
        assert_eq!(cfg.protocol.gamma, 0.9);
        assert_eq!(cfg.protocol.eta, 0.2);
        assert_eq!(cfg.protocol.xi, 0.05);
        assert_eq!(cfg.protocol.t_rest, 60);
        assert_eq!(cfg.protocol.rev_exponent, 0.5);
        assert_eq!(cfg.protocol.ent_exponent, 2.0);
        assert_eq!(cfg.world.l0, 1);
        assert_eq!(cfg.world.deposits_per_growth, 10);
        assert!(cfg.world.growth);
        assert_eq!(cfg.engine.horizon, 10_800);
        assert_eq!(cfg.engine.p_pass, 0.5);
        assert_eq!(cfg.engine.p_pass_jam, 0.1);
        assert_eq!(cfg.engine.t_dig, 8);
        assert_eq!(cfg.engine.t_dump, 4);
        assert_eq!(cfg.noise.sigma0, 0.1);
        assert_eq!(cfg.noise.sigma_collision, 0.3);
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn partial_objects_patch_the_stock_config() {
        let cfg = SimConfig::from_json(r#"{"protocol": {"kind": "reversal"}, "seed": 9}"#).unwrap();
        assert_eq!(cfg.protocol.kind, ProtocolKind::Reversal);
        assert_eq!(cfg.protocol.alpha, 0.6);
        assert_eq!(cfg.robots, 4);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = SimConfig::from_json(r#"{"robotz": 4}"#).unwrap_err();
        assert!(err.to_string().contains("robotz"), "{err}");
        let err = SimConfig::from_json(r#"{"protocol": {"allpha": 0.5}}"#).unwrap_err();
        assert!(err.to_string().contains("allpha"), "{err}");
    }

    #[test]
    fn invalid_gamma_names_the_field() {
        let err = SimConfig::from_json(r#"{"protocol": {"gamma": 1.5}}"#).unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");
        let err = SimConfig::from_json(r#"{"protocol": {"gamma": 0.0}}"#).unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");
    }

    #[test]
    fn probability_bounds_are_enforced() {
        for field in ["alpha", "fixed_reversal"] {
            let text = format!(r#"{{"protocol": {{"{field}": 1.2}}}}"#);
            let err = SimConfig::from_json(&text).unwrap_err();
            assert!(err.to_string().contains(field), "{err}");
        }
        for field in ["p_pass", "p_pass_jam"] {
            let text = format!(r#"{{"engine": {{"{field}": -0.1}}}}"#);
            let err = SimConfig::from_json(&text).unwrap_err();
            assert!(err.to_string().contains(field), "{err}");
        }
    }

    #[test]
    fn adaptive_exponent_bounds() {
        let err = SimConfig::from_json(r#"{"protocol": {"rev_exponent": 1.0}}"#).unwrap_err();
        assert!(err.to_string().contains("rev_exponent"), "{err}");
        let err = SimConfig::from_json(r#"{"protocol": {"ent_exponent": 1.0}}"#).unwrap_err();
        assert!(err.to_string().contains("ent_exponent"), "{err}");
        // The fixed protocols ignore the exponents, so they are not checked.
        let ok = SimConfig::from_json(r#"{"protocol": {"kind": "active", "rev_exponent": 1.0}}"#);
        assert!(ok.is_ok());
    }

    #[test]
    fn zero_robots_rejected() {
        let err = SimConfig::from_json(r#"{"robots": 0}"#).unwrap_err();
        assert!(err.to_string().contains("robots"), "{err}");
    }

    #[test]
    fn echo_round_trips() {
        let cfg = SimConfig::default();
        let echoed = SimConfig::from_json(&cfg.to_json_pretty()).unwrap();
        assert_eq!(cfg, echoed);
    }
}
