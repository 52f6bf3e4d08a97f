//! Run configuration: one TOML file, one section per library module.
//!
//! Every key has a default, so an empty file (or no file) is a valid
//! configuration. Unknown keys are rejected.

use std::path::Path;

use anyhow::Context;
use owc_hybrid::channel::{OpticalParams, RfParams};
use owc_hybrid::engine::{
    FemtoSinrConfig, FixedTerminal, HandoverSuccessConfig, IdleExperimentConfig, MobilityConfig, ProtocolConfig,
    RoomConfig, ScenarioConfig, TrafficConfig,
};
use owc_hybrid::policy::PolicyParams;
use owc_hybrid::transport::{CabinParams, CarFollowScenario, ReliabilitySweepConfig, VehicleLink, VehicleSweepConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub optical: OpticalParams,
    pub rf: RfParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZoningSection {
    pub a_m: f64,
    pub b_m: f64,
    pub radius_m: f64,
    /// Monte Carlo samples for zone probabilities.
    pub samples: u64,
}

impl Default for ZoningSection {
    fn default() -> Self {
        let room = RoomConfig::default();
        Self { a_m: room.a_m, b_m: room.b_m, radius_m: room.radius_m, samples: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdleSection {
    pub user_counts: Vec<usize>,
    pub placements: u64,
}

impl Default for IdleSection {
    fn default() -> Self {
        let d = IdleExperimentConfig::default();
        Self { user_counts: d.user_counts, placements: d.placements }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FemtoSection {
    pub fap_count: usize,
    pub disk_radius_m: f64,
    pub user_distance_m: f64,
    pub interferer_walls: u32,
    pub drops: usize,
    pub users_per_fap: usize,
    pub idle_probability: Option<f64>,
}

impl Default for FemtoSection {
    fn default() -> Self {
        let d = FemtoSinrConfig::default();
        Self {
            fap_count: d.fap_count,
            disk_radius_m: d.disk_radius_m,
            user_distance_m: d.user_distance_m,
            interferer_walls: d.interferer_walls,
            drops: d.drops,
            users_per_fap: d.users_per_fap,
            idle_probability: d.idle_probability,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HandoverSection {
    pub spacings_m: Vec<f64>,
    pub crossings: u64,
    pub fap_coverage_radius_m: f64,
}

impl Default for HandoverSection {
    fn default() -> Self {
        let d = HandoverSuccessConfig::default();
        Self { spacings_m: d.spacings_m, crossings: d.crossings, fap_coverage_radius_m: d.fap_coverage_radius_m }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub users: usize,
    pub duration_s: f64,
    pub mobility: MobilityConfig,
    pub traffic: TrafficConfig,
    pub fixed_terminals: Vec<FixedTerminal>,
    pub idle: IdleSection,
    pub femto: FemtoSection,
    pub handover: HandoverSection,
}

impl Default for EngineSection {
    fn default() -> Self {
        let d = ScenarioConfig::default();
        Self {
            users: d.users,
            duration_s: d.duration_s,
            mobility: d.mobility,
            traffic: d.traffic,
            fixed_terminals: d.fixed_terminals,
            idle: IdleSection::default(),
            femto: FemtoSection::default(),
            handover: HandoverSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportSection {
    pub distances_km: Vec<f64>,
    pub link: VehicleLink,
    pub cabin: CabinParams,
    pub car_distances_m: Vec<f64>,
    pub car_follow: CarFollowScenario,
}

impl Default for TransportSection {
    fn default() -> Self {
        let v = VehicleSweepConfig::default();
        let r = ReliabilitySweepConfig::default();
        Self {
            distances_km: v.distances_km,
            link: v.link,
            cabin: v.cabin,
            car_distances_m: r.distances_m,
            car_follow: r.scenario,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub channel: ChannelSection,
    pub zoning: ZoningSection,
    pub policy: PolicyParams,
    pub protocol: ProtocolConfig,
    pub engine: EngineSection,
    pub transport: TransportSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            channel: ChannelSection::default(),
            zoning: ZoningSection::default(),
            policy: PolicyParams::default(),
            protocol: ProtocolConfig::default(),
            engine: EngineSection::default(),
            transport: TransportSection::default(),
        }
    }
}

/// Config file could not be read or parsed.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl Config {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())).into())
    }

    /// Applies `--samples` to every sample or drop count.
    pub fn with_samples(mut self, samples: u64) -> Self {
        self.zoning.samples = samples;
        self.engine.idle.placements = samples;
        self.engine.femto.drops = samples as usize;
        self.engine.handover.crossings = samples;
        self
    }

    /// SHA-256 of the resolved configuration in its canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            room: self.room(),
            users: self.engine.users,
            mobility: self.engine.mobility,
            traffic: self.engine.traffic,
            policy: self.policy,
            optical: self.channel.optical,
            rf: self.channel.rf,
            protocol: self.protocol,
            duration_s: self.engine.duration_s,
            seed: self.seed,
            fixed_terminals: self.engine.fixed_terminals.clone(),
        }
    }

    pub fn idle(&self) -> IdleExperimentConfig {
        IdleExperimentConfig {
            room: self.room(),
            policy: self.policy,
            user_counts: self.engine.idle.user_counts.clone(),
            placements: self.engine.idle.placements,
            zone_samples: self.zoning.samples,
            seed: self.seed,
        }
    }

    pub fn femto(&self) -> FemtoSinrConfig {
        let f = &self.engine.femto;
        FemtoSinrConfig {
            fap_count: f.fap_count,
            disk_radius_m: f.disk_radius_m,
            user_distance_m: f.user_distance_m,
            interferer_walls: f.interferer_walls,
            drops: f.drops,
            users_per_fap: f.users_per_fap,
            idle_probability: f.idle_probability,
            room: self.room(),
            zone_samples: self.zoning.samples,
            rf: self.channel.rf,
            seed: self.seed,
        }
    }

    pub fn handover(&self) -> HandoverSuccessConfig {
        let h = &self.engine.handover;
        HandoverSuccessConfig {
            radius_m: self.zoning.radius_m,
            spacings_m: h.spacings_m.clone(),
            crossings: h.crossings,
            fap_coverage_radius_m: h.fap_coverage_radius_m,
            seed: self.seed,
        }
    }

    pub fn vehicle(&self) -> VehicleSweepConfig {
        let t = &self.transport;
        VehicleSweepConfig {
            distances_km: t.distances_km.clone(),
            link: t.link,
            cabin: t.cabin,
            rf: self.channel.rf,
            optical: self.channel.optical,
        }
    }

    pub fn reliability(&self) -> ReliabilitySweepConfig {
        ReliabilitySweepConfig { distances_m: self.transport.car_distances_m.clone(), scenario: self.transport.car_follow }
    }

    pub fn room(&self) -> RoomConfig {
        RoomConfig { a_m: self.zoning.a_m, b_m: self.zoning.b_m, radius_m: self.zoning.radius_m }
    }
}
