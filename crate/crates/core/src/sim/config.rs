//! Scenario definition, read from a TOML document with the sections
//! `network`, `demand`, `signal`, `cav`, `routing`, `sim` and `idm`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::cav::SafetyParams;
use crate::dynamics::{Bounds, HdvParams, StopLineRule};
use crate::network::NodeId;
use crate::routing::RoutingParams;
use crate::signal::SignalParams;

/// Control configuration of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Fixed-time signals, HDVs only, shortest paths.
    Baseline,
    /// Adaptive signals, HDVs only, shortest paths.
    #[serde(alias = "signal-only")]
    Signal,
    /// Adaptive signals and planned CAV approaches, shortest paths.
    #[serde(alias = "signal+cav")]
    SignalCav,
    /// Everything, with marginal-cost routing of CAVs.
    Full,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Baseline, Mode::Signal, Mode::SignalCav, Mode::Full];

    pub fn adaptive_signals(self) -> bool {
        self != Mode::Baseline
    }

    pub fn cav_control(self) -> bool {
        matches!(self, Mode::SignalCav | Mode::Full)
    }

    pub fn routing(self) -> bool {
        self == Mode::Full
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Signal => "signal",
            Mode::SignalCav => "signal-cav",
            Mode::Full => "full",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "signal" | "signal-only" => Ok(Mode::Signal),
            "signal-cav" | "signal+cav" => Ok(Mode::SignalCav),
            "full" => Ok(Mode::Full),
            other => Err(format!("unknown mode '{other}' (baseline, signal, signal-cav, full)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    /// Network TOML file; the bundled Sioux Falls network when absent.
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdDemand {
    pub origin: NodeId,
    pub destination: NodeId,
    pub rate_veh_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemandSection {
    /// Every origin is paired with every destination at `rate_veh_h`.
    pub origins: Vec<NodeId>,
    pub destinations: Vec<NodeId>,
    pub rate_veh_h: f64,
    /// Explicit pairs, appended after the origin x destination product.
    pub pairs: Vec<OdDemand>,
    /// Relative headway jitter, uniform in `[-jitter, jitter]`.
    pub jitter: f64,
}

impl Default for DemandSection {
    fn default() -> Self {
        DemandSection {
            origins: vec![1, 2, 13, 20],
            destinations: vec![10, 11, 15, 16],
            rate_veh_h: 250.0,
            pairs: Vec::new(),
            jitter: 0.2,
        }
    }
}

impl DemandSection {
    pub fn od_pairs(&self) -> Vec<OdDemand> {
        let mut out = Vec::new();
        for &origin in &self.origins {
            for &destination in &self.destinations {
                out.push(OdDemand { origin, destination, rate_veh_h: self.rate_veh_h });
            }
        }
        out.extend(self.pairs.iter().copied());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CavSection {
    pub penetration: f64,
    pub safety: SafetyParams,
    /// Greens offered to CAV planning end this much earlier.
    pub green_guard_s: f64,
    /// A held CAV retries planning at this period.
    pub retry_s: f64,
    /// Horizon of leader crossing rollouts.
    pub rollout_horizon_s: f64,
    pub track_kp: f64,
    pub track_kv: f64,
}

impl Default for CavSection {
    fn default() -> Self {
        CavSection {
            penetration: 0.5,
            safety: SafetyParams::default(),
            green_guard_s: 0.5,
            retry_s: 1.0,
            rollout_horizon_s: 120.0,
            track_kp: 0.4,
            track_kv: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub mode: Mode,
    pub duration_s: f64,
    pub dt: f64,
    pub seed: u64,
    pub junction_s: f64,
    pub bin_width_s: f64,
    pub watchdog_s: f64,
    /// Hold every signal permanently green; control zones stay active.
    pub all_green: bool,
    pub bounds: Bounds,
    pub stop_line: StopLineRule,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            mode: Mode::Full,
            duration_s: 2100.0,
            dt: 0.1,
            seed: 1,
            junction_s: 2.0,
            bin_width_s: 10.0,
            watchdog_s: 300.0,
            all_green: false,
            bounds: Bounds::default(),
            stop_line: StopLineRule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub network: NetworkSection,
    pub demand: DemandSection,
    pub signal: SignalParams,
    pub cav: CavSection,
    pub routing: RoutingParams,
    pub sim: SimSection,
    pub idm: HdvParams,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.sim.mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.sim.seed = seed;
        self
    }

    /// CAV share actually used: modes without CAV control run HDVs only.
    pub fn effective_penetration(&self) -> f64 {
        if self.sim.mode.cav_control() {
            self.cav.penetration
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Config(msg));
        if !(self.sim.duration_s > 0.0) {
            return bad(format!("duration must be positive, got {}", self.sim.duration_s));
        }
        if !(self.sim.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.sim.dt));
        }
        if !(0.0..=1.0).contains(&self.cav.penetration) {
            return bad(format!("penetration must be in [0, 1], got {}", self.cav.penetration));
        }
        if !(0.0..1.0).contains(&self.demand.jitter) {
            return bad(format!("jitter must be in [0, 1), got {}", self.demand.jitter));
        }
        if let Some(p) = self.demand.od_pairs().iter().find(|p| !(p.rate_veh_h >= 0.0)) {
            return bad(format!("rate for {}->{} must be nonnegative", p.origin, p.destination));
        }
        if !self.cav.safety.is_valid() {
            return bad("cav.safety parameters must be positive".into());
        }
        if !self.idm.is_valid() {
            return bad("idm parameters must be positive".into());
        }
        if self.routing.k_paths == 0 || self.routing.horizon_bins == 0 {
            return bad("routing.k_paths and routing.horizon_bins must be positive".into());
        }
        if !(self.sim.bin_width_s >= self.sim.dt) {
            return bad("sim.bin_width_s must be at least dt".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_scenario() {
        let c = ScenarioConfig::default();
        assert_eq!(c.demand.od_pairs().len(), 16);
        assert_eq!(c.sim.duration_s, 2100.0);
        assert_eq!(c.cav.penetration, 0.5);
        assert_eq!(c.routing.k_paths, 7);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn parses_sections() {
        let c = ScenarioConfig::from_toml(
            r#"
            [sim]
            mode = "signal-cav"
            duration_s = 600.0
            seed = 9
            [demand]
            origins = [1]
            destinations = [10]
            rate_veh_h = 100.0
            [cav]
            penetration = 0.25
            [idm]
            t_idm = 1.2
            "#,
        )
        .unwrap();
        assert_eq!(c.sim.mode, Mode::SignalCav);
        assert_eq!(c.sim.seed, 9);
        assert_eq!(c.demand.od_pairs(), vec![OdDemand { origin: 1, destination: 10, rate_veh_h: 100.0 }]);
        assert_eq!(c.idm.t_idm, 1.2);
        assert_eq!(c.idm.a_idm, 1.5);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ScenarioConfig::from_toml("[cav]\npenetration = 1.5").is_err());
        assert!(ScenarioConfig::from_toml("[sim]\nduration_s = 0.0").is_err());
        assert!(ScenarioConfig::from_toml("[demand]\nrate_veh_h = -1.0").is_err());
        assert!(ScenarioConfig::from_toml("[bogus]\nx = 1").is_err());
    }

    #[test]
    fn modes_without_cavs_force_hdvs() {
        let c = ScenarioConfig::default().with_mode(Mode::Signal);
        assert_eq!(c.effective_penetration(), 0.0);
        assert_eq!(ScenarioConfig::default().effective_penetration(), 0.5);
        assert_eq!("signal+cav".parse::<Mode>().unwrap(), Mode::SignalCav);
    }
}
