//! Scenario files: flat `key=value` lines with `#` comments.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::adversary::{AdversaryConfig, CloneBehavior};
use crate::dht_detection::{ClaimPlan, DhtRoundConfig, Transport, DEFAULT_SUCCESSORS};
use crate::identity::{RingSpace, DEFAULT_RING_BITS, HASH_FUNCTION};
use crate::net_model::DeploymentConfig;
use crate::rde_detection::{
    default_ttl, ZoneConfig, DEFAULT_PRIORITY_HALF_ANGLE, DEFAULT_TARGET_HALF_ANGLE,
};
use crate::report::Protocol;

pub const KEYS: [&str; 19] = [
    "protocol",
    "n",
    "side",
    "radio_range",
    "target_degree",
    "b",
    "g",
    "p_c",
    "theta_t",
    "theta_p",
    "ttl",
    "r",
    "clones",
    "replicas",
    "clone_behavior",
    "dropper_fraction",
    "modify_enabled",
    "trials",
    "base_seed",
];

pub const DEFAULT_SIDE: f64 = 1000.0;
pub const DEFAULT_DEGREE: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key {key:?} given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("invalid value {value:?} for {key}: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("radio_range and target_degree are mutually exclusive")]
    RangeAndDegree,
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub protocol: Protocol,
    /// The per-trial seed replaces `deployment.seed`.
    pub deployment: DeploymentConfig,
    pub bits: u32,
    pub g: usize,
    pub p_c: f64,
    /// Not settable from a file; experiments use it to force claim counts.
    pub plan: ClaimPlan,
    /// Not settable from a file.
    pub transport: Transport,
    pub theta_t: f64,
    pub theta_p: f64,
    /// `None` means `ceil(sqrt(n))`.
    pub ttl: Option<u32>,
    pub r: usize,
    pub adversary: AdversaryConfig,
    pub trials: usize,
    pub base_seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            id: "scenario".to_string(),
            protocol: Protocol::Dht,
            deployment: DeploymentConfig::with_degree(1000, DEFAULT_SIDE, DEFAULT_DEGREE, 0),
            bits: DEFAULT_RING_BITS,
            g: DEFAULT_SUCCESSORS,
            p_c: 1.0,
            plan: ClaimPlan::Probabilistic,
            transport: Transport::Greedy,
            theta_t: DEFAULT_TARGET_HALF_ANGLE,
            theta_p: DEFAULT_PRIORITY_HALF_ANGLE,
            ttl: None,
            r: 1,
            adversary: AdversaryConfig::default(),
            trials: 1,
            base_seed: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ScenarioError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| ScenarioError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: e.to_string(),
        })
}

fn bad(key: &str, value: &str, reason: &str) -> ScenarioError {
    ScenarioError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut sc = Scenario::default();
        let mut seen = BTreeSet::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(ScenarioError::Syntax {
                    line,
                    text: raw.to_string(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ScenarioError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            if !seen.insert(key.to_string()) {
                return Err(ScenarioError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            sc.set(key, value)?;
        }
        if seen.contains("radio_range") && seen.contains("target_degree") {
            return Err(ScenarioError::RangeAndDegree);
        }
        Ok(sc)
    }

    /// Reads a file; the scenario id is the file stem.
    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut sc = Self::parse(&text)?;
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            sc.id = stem.to_string();
        }
        Ok(sc)
    }

    /// Sets one key. Setting `radio_range` clears `target_degree` and vice versa.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ScenarioError> {
        match key {
            "protocol" => {
                self.protocol = match value {
                    "dht" => Protocol::Dht,
                    "rde" => Protocol::Rde,
                    _ => return Err(bad(key, value, "expected dht or rde")),
                }
            }
            "n" => self.deployment.n = parse_num(key, value)?,
            "side" => self.deployment.side = parse_num(key, value)?,
            "radio_range" => {
                self.deployment.radio_range = Some(parse_num(key, value)?);
                self.deployment.target_degree = None;
            }
            "target_degree" => {
                self.deployment.target_degree = Some(parse_num(key, value)?);
                self.deployment.radio_range = None;
            }
            "b" => self.bits = parse_num(key, value)?,
            "g" => self.g = parse_num(key, value)?,
            "p_c" => self.p_c = parse_num(key, value)?,
            "theta_t" => self.theta_t = parse_num(key, value)?,
            "theta_p" => self.theta_p = parse_num(key, value)?,
            "ttl" => self.ttl = Some(parse_num(key, value)?),
            "r" => self.r = parse_num(key, value)?,
            "clones" => self.adversary.cloned_identities = parse_num(key, value)?,
            "replicas" => self.adversary.replicas_per_identity = parse_num(key, value)?,
            "clone_behavior" => {
                self.adversary.clone_behavior = match value {
                    "participating" => CloneBehavior::Participating,
                    "non_participating" => CloneBehavior::NonParticipating,
                    _ => {
                        return Err(bad(
                            key,
                            value,
                            "expected participating or non_participating",
                        ))
                    }
                }
            }
            "dropper_fraction" => self.adversary.dropper_fraction = parse_num(key, value)?,
            "modify_enabled" => self.adversary.modify_enabled = parse_num(key, value)?,
            "trials" => self.trials = parse_num(key, value)?,
            "base_seed" => self.base_seed = parse_num(key, value)?,
            _ => {
                return Err(ScenarioError::UnknownKey {
                    line: 0,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    pub fn ttl(&self) -> u32 {
        self.ttl.unwrap_or_else(|| default_ttl(self.deployment.n))
    }

    pub fn zone(&self) -> ZoneConfig {
        ZoneConfig {
            target_half_angle: self.theta_t,
            priority_half_angle: self.theta_p,
            ttl: self.ttl(),
            claims_per_observer: self.r,
        }
    }

    /// Round parameters; `seed` is filled in per trial.
    pub fn dht_config(&self) -> DhtRoundConfig {
        DhtRoundConfig {
            p_c: self.p_c,
            g: self.g,
            bits: self.bits,
            plan: self.plan,
            transport: self.transport,
            ..DhtRoundConfig::default()
        }
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |e: &dyn std::fmt::Display| ScenarioError::Invalid(e.to_string());
        if self.trials == 0 {
            return Err(ScenarioError::Invalid("trials must be at least 1".into()));
        }
        self.deployment.effective_range().map_err(|e| invalid(&e))?;
        self.adversary.validate().map_err(|e| invalid(&e))?;
        if self.adversary.cloned_identities > self.deployment.n {
            return Err(ScenarioError::Invalid(format!(
                "cannot clone {} identities out of {} nodes",
                self.adversary.cloned_identities, self.deployment.n
            )));
        }
        match self.protocol {
            Protocol::Dht => {
                RingSpace::new(self.bits).map_err(|e| invalid(&e))?;
                self.dht_config().validate().map_err(|e| invalid(&e))?;
                if self.g == 0 || self.g >= self.deployment.n {
                    return Err(ScenarioError::Invalid(format!(
                        "g must lie in [1, n), got g={} n={}",
                        self.g, self.deployment.n
                    )));
                }
            }
            Protocol::Rde => self.zone().validate().map_err(|e| invalid(&e))?,
        }
        Ok(())
    }

    /// Canonical `key=value` dump, with the hash function recorded.
    pub fn to_config_text(&self) -> String {
        let d = &self.deployment;
        let a = &self.adversary;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("protocol", self.protocol.as_str().to_string());
        kv("n", d.n.to_string());
        kv("side", d.side.to_string());
        match (d.target_degree, d.radio_range) {
            (Some(deg), _) => kv("target_degree", deg.to_string()),
            (None, Some(r)) => kv("radio_range", r.to_string()),
            (None, None) => {}
        }
        kv("b", self.bits.to_string());
        kv("g", self.g.to_string());
        kv("p_c", self.p_c.to_string());
        kv("theta_t", self.theta_t.to_string());
        kv("theta_p", self.theta_p.to_string());
        kv("ttl", self.ttl().to_string());
        kv("r", self.r.to_string());
        kv("clones", a.cloned_identities.to_string());
        kv("replicas", a.replicas_per_identity.to_string());
        kv(
            "clone_behavior",
            match a.clone_behavior {
                CloneBehavior::Participating => "participating",
                CloneBehavior::NonParticipating => "non_participating",
            }
            .to_string(),
        );
        kv("dropper_fraction", a.dropper_fraction.to_string());
        kv("modify_enabled", a.modify_enabled.to_string());
        kv("trials", self.trials.to_string());
        kv("base_seed", self.base_seed.to_string());
        out.push_str(&format!("# hash_function={HASH_FUNCTION}\n"));
        out
    }
}
