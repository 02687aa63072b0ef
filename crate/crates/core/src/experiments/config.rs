use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::contract::ContractParams;
use crate::domain::{DepositQuota, TokenAmount};
use crate::error::{Error, Result};
use crate::ledger::GossipConfig;
use crate::swarm::{BehaviorProfile, Dataset, SensorSource, WorldConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    Safety,
    Liveness,
    Combined,
    Physical,
}

impl AttackKind {
    pub fn profile(self) -> BehaviorProfile {
        match self {
            AttackKind::None => BehaviorProfile::Honest,
            AttackKind::Safety => BehaviorProfile::SafetyAttacker,
            AttackKind::Liveness => BehaviorProfile::LivenessAttacker,
            AttackKind::Combined => BehaviorProfile::CombinedAttacker,
            AttackKind::Physical => BehaviorProfile::PhysicalAttacker,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::Safety => "safety",
            AttackKind::Liveness => "liveness",
            AttackKind::Combined => "combined",
            AttackKind::Physical => "physical",
        }
    }

    pub const ATTACKS: [AttackKind; 4] = [
        AttackKind::Safety,
        AttackKind::Liveness,
        AttackKind::Combined,
        AttackKind::Physical,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssuanceMode {
    Zero,
    /// `T0 / ⌊1/K⌋`.
    Default,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopRule {
    FirstAcceptedAgreement,
    MaxSimTime { seconds: f64 },
    AgreementCount { count: usize },
}

/// One experiment: a parameter point plus the seeds to run it with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub robots: u32,
    pub attackers: u32,
    pub attack: AttackKind,
    /// Clustering threshold in colour units.
    pub radius: f64,
    /// Deposit quota as `"num/den"` or a whole number.
    pub quota: String,
    pub issuance: IssuanceMode,
    /// Starting balance of every robot, base units.
    pub initial_balance: u64,
    pub seeds: Vec<u64>,
    pub stop: StopRule,
    /// Hard cap on simulated seconds whatever the stop rule.
    pub max_sim_time: f64,
    /// Recorded readings to sample from instead of the synthetic model.
    pub dataset: Option<PathBuf>,
    pub world: WorldConfig,
    pub gossip: GossipConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            robots: 12,
            attackers: 0,
            attack: AttackKind::None,
            radius: 60.0,
            quota: "1/3".into(),
            issuance: IssuanceMode::Default,
            initial_balance: 3_000_000,
            seeds: vec![1],
            stop: StopRule::FirstAcceptedAgreement,
            max_sim_time: 4.0 * 3600.0,
            dataset: None,
            world: WorldConfig::default(),
            gossip: GossipConfig::default(),
        }
    }
}

pub fn parse_quota(s: &str) -> Result<DepositQuota> {
    let bad = || Error::InvalidConfig(format!("quota {s:?} is not of the form num/den"));
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?),
        None => (s.trim().parse().map_err(|_| bad())?, 1),
    };
    DepositQuota::new(num, den)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative dataset paths are resolved against the config file.
        if let (Some(ds), Some(dir)) = (cfg.dataset.as_mut(), path.parent()) {
            if ds.is_relative() {
                *ds = dir.join(&*ds);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn quota(&self) -> Result<DepositQuota> {
        parse_quota(&self.quota)
    }

    pub fn initial_supply(&self) -> TokenAmount {
        TokenAmount(self.initial_balance * self.robots as u64)
    }

    pub fn issuance_amount(&self) -> Result<TokenAmount> {
        Ok(match self.issuance {
            IssuanceMode::Zero => TokenAmount::ZERO,
            IssuanceMode::Default => ContractParams::default_issuance(self.initial_supply(), self.quota()?),
        })
    }

    pub fn contract_params(&self) -> Result<ContractParams> {
        let params = ContractParams {
            quota: self.quota()?,
            issuance: self.issuance_amount()?,
            radius: self.radius,
            initial_supply: self.initial_supply(),
            dim: self.world.dim(),
        };
        params.validate()?;
        Ok(params)
    }

    /// Attackers take the highest robot ids.
    pub fn profiles(&self) -> Vec<BehaviorProfile> {
        let honest = self.robots.saturating_sub(self.attackers);
        (0..self.robots)
            .map(|i| if i < honest { BehaviorProfile::Honest } else { self.attack.profile() })
            .collect()
    }

    pub fn world_config(&self) -> WorldConfig {
        WorldConfig {
            robots: self.robots,
            ..self.world.clone()
        }
    }

    pub fn sensor_source(&self) -> Result<SensorSource> {
        Ok(match &self.dataset {
            Some(p) => SensorSource::Replay(Arc::new(Dataset::load(p)?)),
            None => SensorSource::Synthetic,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.robots == 0 {
            return bad("at least one robot is required".into());
        }
        if self.attackers > self.robots {
            return bad(format!("{} attackers among {} robots", self.attackers, self.robots));
        }
        if self.attackers > 0 && self.attack == AttackKind::None {
            return bad("attackers configured without an attack kind".into());
        }
        if self.initial_balance == 0 {
            return bad("initial_balance must be positive".into());
        }
        if !(self.max_sim_time > 0.0) {
            return bad("max_sim_time must be positive".into());
        }
        match self.stop {
            StopRule::MaxSimTime { seconds } if !(seconds > 0.0) => {
                return bad("stop time must be positive".into())
            }
            StopRule::AgreementCount { count: 0 } => return bad("agreement count must be positive".into()),
            _ => {}
        }
        self.world_config().validate()?;
        self.gossip.validate()?;
        self.contract_params()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            name = "long"
            attackers = 4
            attack = "liveness"
            quota = "1"
            issuance = "zero"
            seeds = [1, 2]
            stop = { kind = "agreement_count", count = 8 }
            [world]
            noise_sigma = 5.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.quota().unwrap(), DepositQuota::ONE);
        assert_eq!(cfg.stop, StopRule::AgreementCount { count: 8 });
        assert_eq!(cfg.world.noise_sigma, 5.0);
        assert_eq!(cfg.world.speed, WorldConfig::default().speed);
        assert_eq!(cfg.issuance_amount().unwrap(), TokenAmount::ZERO);
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn invalid_configs_are_refused() {
        let mut cfg = ExperimentConfig {
            attackers: 13,
            attack: AttackKind::Safety,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.attackers = 2;
        cfg.quota = "4/3".into();
        assert!(cfg.validate().is_err());
        cfg.quota = "one third".into();
        assert!(cfg.validate().is_err());
        cfg.quota = "1/3".into();
        cfg.radius = -1.0;
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::from_toml("bogus_key = 1").is_err());
    }

    #[test]
    fn attackers_take_the_top_ids_and_issuance_follows_capacity() {
        let cfg = ExperimentConfig {
            attackers: 4,
            attack: AttackKind::Combined,
            ..Default::default()
        };
        let p = cfg.profiles();
        assert_eq!(p.iter().filter(|b| b.is_attacker()).count(), 4);
        assert!(p[..8].iter().all(|b| !b.is_attacker()));
        assert_eq!(cfg.issuance_amount().unwrap(), TokenAmount(12_000_000));
    }
}
