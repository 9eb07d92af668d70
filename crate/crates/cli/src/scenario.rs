//! Scenario files: one TOML document describing a simulation, the detector
//! settings, the sweep lists and the output directory. Every field is
//! optional and falls back to the library default.
//!
//! ```toml
//! name = "greyhole"
//!
//! [topology]
//! n_servers = 5
//! n_vms = 50
//!
//! [traffic]
//! duration_s = 36000
//! msg_interval_s = [20, 30]
//! generation = "per_node"      # or "per_network"
//! routing = "gradient"         # or "two_hop"
//! encounter_rate = 6.0         # contacts per pair per hour
//! routing_copies = 1
//! message_ttl_s = 3600
//!
//! [seed]
//! value = 7
//!
//! [attackers]
//! forge_window_s = 3600
//!
//! [[attackers.groups]]
//! kind = "greyhole"
//! nodes = ["v50", "v51"]
//! drop_prob = 0.5
//!
//! [detection]
//! rr_threshold = 0.5375
//! fxs_threshold = "adaptive"   # or a number
//!
//! [sweep]
//! rr_individual = [0.4375, 0.5375, 0.5875]
//!
//! [output]
//! dir = "out/greyhole"
//! ```

use std::path::{Path, PathBuf};

use er_sentinel_core::detect::collusion::FxsThreshold;
use er_sentinel_core::detect::{DetectionConfig, IndividualRule};
use er_sentinel_core::eval::{reference_thresholds, SweepMetric, SweepMode, SweepSpec};
use er_sentinel_core::sim::{AttackerConfig, AttackerGroup, AttackerKind, GenerationMode, Routing, SimConfig};
use er_sentinel_core::{ConfigError, NodeId, SimTime};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: Option<String>,
    pub sim: SimConfig,
    pub det: DetectionConfig,
    pub sweep: Vec<SweepSpec>,
    pub output_dir: Option<PathBuf>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: None,
            sim: SimConfig::default(),
            det: DetectionConfig::default(),
            sweep: SweepSpec::reference_set(),
            output_dir: None,
        }
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Usage(message) => CliError::Scenario { path: path.to_path_buf(), message },
            other => other,
        })
    }

    /// Parses and validates. Syntax problems come back as `Usage`, value
    /// problems as `Config`.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| CliError::Usage(e.to_string()))?;
        let scenario = file.into_scenario()?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.sim.validate()?;
        self.det.validate()?;
        for s in &self.sweep {
            s.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: Option<String>,
    #[serde(default)]
    topology: TopologySection,
    #[serde(default)]
    traffic: TrafficSection,
    #[serde(default)]
    seed: SeedSection,
    #[serde(default)]
    attackers: AttackersSection,
    #[serde(default)]
    detection: DetectionSection,
    #[serde(default)]
    sweep: SweepSection,
    #[serde(default)]
    output: OutputSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologySection {
    n_servers: Option<u32>,
    n_vms: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrafficSection {
    duration_s: Option<f64>,
    msg_interval_s: Option<[f64; 2]>,
    generation: Option<GenerationText>,
    routing: Option<RoutingText>,
    encounter_rate: Option<f64>,
    routing_copies: Option<u32>,
    message_ttl_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum GenerationText {
    PerNode,
    PerNetwork,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RoutingText {
    Gradient,
    TwoHop,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeedSection {
    value: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttackersSection {
    forge_window_s: Option<f64>,
    #[serde(default)]
    groups: Vec<GroupSection>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum KindText {
    Blackhole,
    Greyhole,
    Colluder,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupSection {
    kind: KindText,
    nodes: Vec<NodeId>,
    drop_prob: Option<f64>,
    drop_period_s: Option<f64>,
    drop_every_n: Option<u64>,
    #[serde(default)]
    colluder_partners: Vec<NodeId>,
    target_rr: Option<f64>,
    target_sr: Option<f64>,
    max_entries_per_fake: Option<usize>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum FxsText {
    Fixed(f64),
    Named(FxsName),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum FxsName {
    Adaptive,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RuleText {
    Either,
    RrOnly,
    SrOnly,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionSection {
    rr_threshold: Option<f64>,
    sr_threshold: Option<f64>,
    fxs_threshold: Option<FxsText>,
    fxs_sigmas: Option<f64>,
    fxs_floor: Option<f64>,
    window_s: Option<f64>,
    reputation_down: Option<f64>,
    reputation_up: Option<f64>,
    blacklist_reputation: Option<f64>,
    rule: Option<RuleText>,
    collusion_phase: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    rr_individual: Option<Vec<f64>>,
    sr_individual: Option<Vec<f64>>,
    rr_collusion: Option<Vec<f64>>,
    sr_collusion: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
}

fn millis(field: &str, secs: f64) -> Result<SimTime, ConfigError> {
    if !(secs >= 0.0 && secs.is_finite()) {
        return Err(ConfigError::new(field, "must be a non-negative number of seconds"));
    }
    Ok(SimTime::from_millis((secs * 1000.0).round() as u64))
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<Scenario, ConfigError> {
        let mut sim = SimConfig::default();
        let t = self.topology;
        sim.n_servers = t.n_servers.unwrap_or(sim.n_servers);
        sim.n_vms = t.n_vms.unwrap_or(sim.n_vms);

        let tr = self.traffic;
        if let Some(d) = tr.duration_s {
            sim.duration = millis("traffic.duration_s", d)?;
        }
        if let Some([lo, hi]) = tr.msg_interval_s {
            sim.msg_interval = (millis("traffic.msg_interval_s", lo)?, millis("traffic.msg_interval_s", hi)?);
        }
        if let Some(g) = tr.generation {
            sim.generation = match g {
                GenerationText::PerNode => GenerationMode::PerNode,
                GenerationText::PerNetwork => GenerationMode::PerNetwork,
            };
        }
        if let Some(r) = tr.routing {
            sim.routing = match r {
                RoutingText::Gradient => Routing::Gradient,
                RoutingText::TwoHop => Routing::TwoHop,
            };
        }
        sim.encounter_rate = tr.encounter_rate.unwrap_or(sim.encounter_rate);
        sim.routing_copies = tr.routing_copies.unwrap_or(sim.routing_copies);
        if let Some(ttl) = tr.message_ttl_s {
            sim.message_ttl = millis("traffic.message_ttl_s", ttl)?;
        }
        sim.seed = self.seed.value.unwrap_or(sim.seed);

        if let Some(w) = self.attackers.forge_window_s {
            sim.forge_window = millis("attackers.forge_window_s", w)?;
        }
        for g in self.attackers.groups {
            let drop_period_t = g.drop_period_s.map(|s| millis("attackers.drop_period_s", s)).transpose()?;
            let config = AttackerConfig {
                kind: match g.kind {
                    KindText::Blackhole => AttackerKind::Blackhole,
                    KindText::Greyhole => AttackerKind::Greyhole,
                    KindText::Colluder => AttackerKind::Colluder,
                },
                drop_prob: g.drop_prob,
                drop_period_t,
                drop_every_n: g.drop_every_n,
                colluder_partners: g.colluder_partners,
                target_rr: g.target_rr,
                target_sr: g.target_sr,
                max_entries_per_fake: g.max_entries_per_fake,
            };
            sim.attacker_mix.push(AttackerGroup { nodes: g.nodes, config });
        }

        let mut det = DetectionConfig::default();
        let d = self.detection;
        det.rr_threshold = d.rr_threshold.unwrap_or(det.rr_threshold);
        det.sr_threshold = d.sr_threshold.unwrap_or(det.sr_threshold);
        det.fxs_threshold = fxs_rule(d.fxs_threshold, d.fxs_sigmas, d.fxs_floor)?;
        if let Some(w) = d.window_s {
            det.window = millis("detection.window_s", w)?;
        }
        det.reputation_down = d.reputation_down.unwrap_or(det.reputation_down);
        det.reputation_up = d.reputation_up.unwrap_or(det.reputation_up);
        det.blacklist_reputation = d.blacklist_reputation.unwrap_or(det.blacklist_reputation);
        if let Some(r) = d.rule {
            det.rule = match r {
                RuleText::Either => IndividualRule::Either,
                RuleText::RrOnly => IndividualRule::RelayedRatioOnly,
                RuleText::SrOnly => IndividualRule::SelfForwardingOnly,
            };
        }
        det.collusion_phase = d.collusion_phase.unwrap_or(det.collusion_phase);

        let s = self.sweep;
        let lists = [
            (SweepMetric::RelayedRatio, SweepMode::Individual, s.rr_individual),
            (SweepMetric::SelfForwarding, SweepMode::Individual, s.sr_individual),
            (SweepMetric::RelayedRatio, SweepMode::Collusion, s.rr_collusion),
            (SweepMetric::SelfForwarding, SweepMode::Collusion, s.sr_collusion),
        ];
        let sweep = lists
            .into_iter()
            .map(|(metric, mode, list)| SweepSpec {
                metric,
                mode,
                thresholds: list.unwrap_or_else(|| reference_thresholds(metric, mode).to_vec()),
            })
            .collect();

        Ok(Scenario { name: self.name, sim, det, sweep, output_dir: self.output.dir })
    }
}

fn fxs_rule(text: Option<FxsText>, sigmas: Option<f64>, floor: Option<f64>) -> Result<FxsThreshold, ConfigError> {
    let FxsThreshold::Adaptive { sigmas: k0, floor: f0 } = FxsThreshold::default() else {
        unreachable!("default screen is adaptive")
    };
    match text {
        Some(FxsText::Fixed(t)) => {
            if sigmas.is_some() || floor.is_some() {
                return Err(ConfigError::new("detection.fxs_sigmas", "only applies to the adaptive screen"));
            }
            Ok(FxsThreshold::Fixed(t))
        }
        Some(FxsText::Named(FxsName::Adaptive)) | None => {
            Ok(FxsThreshold::Adaptive { sigmas: sigmas.unwrap_or(k0), floor: floor.unwrap_or(f0) })
        }
    }
}

/// `--fxs-threshold` value: a number for a fixed cut-off or `adaptive`.
pub fn parse_fxs_flag(s: &str) -> Result<FxsThreshold, String> {
    if s.eq_ignore_ascii_case("adaptive") {
        return Ok(FxsThreshold::default());
    }
    s.parse::<f64>().map(FxsThreshold::Fixed).map_err(|_| format!("expected a number or `adaptive`, got {s:?}"))
}
