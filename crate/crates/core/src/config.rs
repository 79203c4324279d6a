//! Experiment configuration: a versioned TOML document plus named presets.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attacker::AttackerParams;
use crate::ecosystem::Privacy;
use crate::error::{Error, Result};
use crate::exhaustive::ExhaustiveParams;
use crate::risk::DEFAULT_STIRLING_THRESHOLD;
use crate::sequence::Slack;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementConfig {
    pub sites: usize,
    pub users: usize,
    pub popularity: f64,
    /// Capacity coefficient of the target.
    pub target_capacity: f64,
    /// Capacity coefficient of every peer.
    pub peer_capacity: f64,
    pub privacy: Privacy,
    /// Load the ecosystem from a file instead of generating it.
    pub ecosystem: Option<PathBuf>,
    /// 1-based id of the target site.
    pub target: usize,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            sites: 4,
            users: 400,
            popularity: 0.5,
            target_capacity: 0.6,
            peer_capacity: 0.6,
            privacy: Privacy::Psi,
            ecosystem: None,
            target: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuctionConfig {
    /// Counted bids after the first-bid round.
    pub length: usize,
    pub slack: Slack,
    pub smoothing_target: f64,
    pub smoothing_peers: f64,
    pub stirling_threshold: u64,
}

impl Default for AuctionConfig {
    fn default() -> Self {
        Self {
            length: 10,
            slack: Slack::Infinite,
            smoothing_target: 1.0,
            smoothing_peers: 1.0,
            stirling_threshold: DEFAULT_STIRLING_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    #[default]
    Prop,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    pub target: TargetKind,
    pub exhaustive: ExhaustiveParams,
}

/// When the attack window opens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackStart {
    /// Right after the first-bid round.
    FirstRound,
    /// Once every site has placed at least one response bid.
    #[default]
    AfterResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub greedy: bool,
    pub params: AttackerParams,
    /// Attack opportunities in the window.
    pub window: usize,
    pub start: AttackStart,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            greedy: false,
            params: AttackerParams::default(),
            window: 10,
            start: AttackStart::AfterResponse,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplicateConfig {
    /// Placement draws per grid point.
    pub placements: usize,
    /// Bidding sequences per placement.
    pub sequences: usize,
}

impl Default for ReplicateConfig {
    fn default() -> Self {
        Self {
            placements: 1,
            sequences: 1,
        }
    }
}

/// Optional value lists; the experiment runs their cartesian product.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub popularity: Option<Vec<f64>>,
    pub target_capacity: Option<Vec<f64>>,
    pub peer_capacity: Option<Vec<f64>>,
    pub smoothing_target: Option<Vec<f64>>,
    pub smoothing_peers: Option<Vec<f64>>,
    pub privacy: Option<Vec<Privacy>>,
    pub aggression: Option<Vec<f64>>,
    pub lookahead: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub placement: PlacementConfig,
    pub auction: AuctionConfig,
    pub strategy: StrategyConfig,
    pub attack: AttackConfig,
    pub replicates: ReplicateConfig,
    pub grid: GridConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            placement: PlacementConfig::default(),
            auction: AuctionConfig::default(),
            strategy: StrategyConfig::default(),
            attack: AttackConfig::default(),
            replicates: ReplicateConfig::default(),
            grid: GridConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configs always serialize")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let p = &self.placement;
        if p.ecosystem.is_none() && p.sites < 3 {
            return Err(Error::TooFewSites(p.sites));
        }
        if p.target == 0 || (p.ecosystem.is_none() && p.target > p.sites) {
            return Err(Error::Config(format!("target id {} out of range", p.target)));
        }
        if self.replicates.placements == 0 || self.replicates.sequences == 0 {
            return Err(Error::Config("replicate counts must be at least 1".into()));
        }
        self.strategy.exhaustive.validate()?;
        self.attack.params.validate()?;
        Ok(())
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        self.placement.privacy = match preset {
            Preset::Psi => Privacy::Psi,
            Preset::Psica => Privacy::Psica,
        };
        self.grid.privacy = None;
    }

    pub fn apply_constraint(&mut self, c: Constraint) {
        match c {
            Constraint::PsiStar => {
                self.strategy.exhaustive.cutline = false;
                self.strategy.exhaustive.foresight = 0;
                self.auction.slack = Slack::Infinite;
            }
        }
    }
}

/// Privacy presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Psi,
    Psica,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "psi" => Ok(Preset::Psi),
            "psica" => Ok(Preset::Psica),
            _ => Err(Error::Config(format!("unknown preset {s:?}"))),
        }
    }
}

/// Named ecosystem-wide constraints on the strategic bidder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// No cutting in line, no foresight, unlimited slack.
    PsiStar,
}

impl FromStr for Constraint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "psi-star" | "psi_star" | "psistar" => Ok(Constraint::PsiStar),
            _ => Err(Error::Config(format!("unknown constraint {s:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = ExperimentConfig::default();
        cfg.grid.popularity = Some(vec![0.0, 0.5, 1.0]);
        cfg.auction.slack = Slack::Finite(2);
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_documents_take_defaults() {
        let cfg = ExperimentConfig::from_toml("schema_version = 1\n[auction]\nslack = \"inf\"\nlength = 5\n").unwrap();
        assert_eq!(cfg.auction.length, 5);
        assert_eq!(cfg.placement, PlacementConfig::default());
        let cfg = ExperimentConfig::from_toml("[auction]\nslack = 3\n").unwrap();
        assert_eq!(cfg.auction.slack, Slack::Finite(3));
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(ExperimentConfig::from_toml("schema_version = 2").is_err());
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("[auction]\nslack = 0\n").is_err());
        assert!(ExperimentConfig::from_toml("[placement]\nsites = 2\n").is_err());
        assert!(ExperimentConfig::from_toml("[attack.params]\naggression = 1.5\n").is_err());
    }

    #[test]
    fn constraint_preset() {
        let mut cfg = ExperimentConfig::default();
        cfg.strategy.exhaustive.cutline = true;
        cfg.strategy.exhaustive.foresight = 1;
        cfg.auction.slack = Slack::Finite(1);
        cfg.apply_constraint("psi-star".parse().unwrap());
        assert!(!cfg.strategy.exhaustive.cutline);
        assert_eq!(cfg.strategy.exhaustive.foresight, 0);
        assert_eq!(cfg.auction.slack, Slack::Infinite);
        cfg.apply_preset("psica".parse().unwrap());
        assert_eq!(cfg.placement.privacy, Privacy::Psica);
    }
}
