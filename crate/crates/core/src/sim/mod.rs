//! Discrete-event coexistence simulator.
//!
//! A 2 km circular six-lane highway carries 802.11p and LTE-V2X sidelink
//! (mode 4) stations on the same 10 MHz channel. Stations move at constant
//! individual speeds, generate CAMs under the standard trigger rules, and
//! contend for the channel with their native MAC. [`engine::run`] executes
//! one seeded scenario and returns a [`metrics::MetricsReport`].

pub mod engine;
pub mod metrics;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dot11p::Dot11pConfig;
use crate::ltev2x::{CcVariant, LteConfig, PoolRestriction};
use crate::propagation::{PathLossModel, RadioConfig, ShadowingField};

/// Radio access technology of a station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tech {
    Dot11p = 0,
    Lte = 1,
}

impl Tech {
    pub fn label(self) -> &'static str {
        match self {
            Tech::Dot11p => "11p",
            Tech::Lte => "lte",
        }
    }
}

/// Scenario composition: which technologies run and which LTE mitigation /
/// countermeasure toggles are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoexistenceMode {
    /// 802.11p stations alone.
    Only11p,
    /// LTE stations alone, preamble insertion active.
    OnlyLte,
    /// LTE stations alone, plain transmissions (no preamble).
    OnlyLteNoPreamble,
    /// Both technologies, LTE without preamble insertion.
    Legacy,
    /// As `Legacy`, but every station generates strictly every 200 ms and
    /// LTE reserves with a 200 ms RRI.
    LegacyPeriodic,
    /// Both technologies, LTE prepends the decodable preamble.
    Preamble,
    /// Preamble insertion with HARQ retransmissions disabled.
    PreambleNoHarq,
    /// Preamble insertion with LTE restricted to half of the TTIs.
    PreambleHalfPool,
    /// Preamble insertion with the tightened congestion-control limits.
    PreambleModCc,
}

impl CoexistenceMode {
    pub const ALL: [CoexistenceMode; 9] = [
        CoexistenceMode::Only11p,
        CoexistenceMode::OnlyLte,
        CoexistenceMode::OnlyLteNoPreamble,
        CoexistenceMode::Legacy,
        CoexistenceMode::LegacyPeriodic,
        CoexistenceMode::Preamble,
        CoexistenceMode::PreambleNoHarq,
        CoexistenceMode::PreambleHalfPool,
        CoexistenceMode::PreambleModCc,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CoexistenceMode::Only11p => "only-11p",
            CoexistenceMode::OnlyLte => "only-lte",
            CoexistenceMode::OnlyLteNoPreamble => "only-lte-nopreamble",
            CoexistenceMode::Legacy => "legacy",
            CoexistenceMode::LegacyPeriodic => "legacy-periodic",
            CoexistenceMode::Preamble => "preamble",
            CoexistenceMode::PreambleNoHarq => "preamble-noharq",
            CoexistenceMode::PreambleHalfPool => "preamble-halfpool",
            CoexistenceMode::PreambleModCc => "preamble-modcc",
        }
    }

    pub fn parse(s: &str) -> Option<CoexistenceMode> {
        CoexistenceMode::ALL.into_iter().find(|m| m.label() == s)
    }

    pub fn has_11p(self) -> bool {
        !matches!(
            self,
            CoexistenceMode::OnlyLte | CoexistenceMode::OnlyLteNoPreamble
        )
    }

    pub fn has_lte(self) -> bool {
        !matches!(self, CoexistenceMode::Only11p)
    }

    /// Fixed 200 ms generation for every station, CAM trigger rules off.
    pub fn periodic_generation(self) -> bool {
        matches!(self, CoexistenceMode::LegacyPeriodic)
    }

    fn preamble_insertion(self) -> bool {
        matches!(
            self,
            CoexistenceMode::OnlyLte
                | CoexistenceMode::Preamble
                | CoexistenceMode::PreambleNoHarq
                | CoexistenceMode::PreambleHalfPool
                | CoexistenceMode::PreambleModCc
        )
    }

    /// Apply the mode's LTE toggles on top of `base`.
    pub fn lte_config(self, base: &LteConfig) -> LteConfig {
        let mut cfg = base.clone();
        cfg.options.preamble_insertion = self.preamble_insertion();
        cfg.options.harq = !matches!(self, CoexistenceMode::PreambleNoHarq);
        cfg.options.pool = if matches!(self, CoexistenceMode::PreambleHalfPool) {
            PoolRestriction::Half
        } else {
            PoolRestriction::Full
        };
        cfg.options.cc_variant = if matches!(self, CoexistenceMode::PreambleModCc) {
            CcVariant::Modified
        } else {
            CcVariant::Standard
        };
        if self.periodic_generation() {
            cfg.rri_ms = 200;
        }
        cfg
    }
}

/// Full configuration of one simulation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub mode: CoexistenceMode,
    /// 802.11p stations per km of road (all lanes combined).
    pub density_11p_per_km: f64,
    /// LTE stations per km of road.
    pub density_lte_per_km: f64,
    /// Circumference of the circular road, m.
    pub road_length_m: f64,
    /// Lanes per direction (same count in each direction).
    pub lanes_per_direction: u8,
    /// Lateral spacing between adjacent lanes, m.
    pub lane_width_m: f64,
    /// Mean vehicle speed, m/s.
    pub speed_mean_mps: f64,
    /// Vehicle speed standard deviation, m/s.
    pub speed_std_mps: f64,
    /// Settling time before measurements start, s.
    pub warmup_s: f64,
    /// Measurement duration after warm-up, s.
    pub duration_s: f64,
    pub radio: RadioConfig,
    pub path_loss: PathLossModel,
    pub shadowing: ShadowingField,
    pub dot11p: Dot11pConfig,
    pub lte: LteConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            mode: CoexistenceMode::Legacy,
            density_11p_per_km: 50.0,
            density_lte_per_km: 50.0,
            road_length_m: 2000.0,
            lanes_per_direction: 3,
            lane_width_m: 4.0,
            speed_mean_mps: 70.0 / 3.6,
            speed_std_mps: 7.0 / 3.6,
            warmup_s: 2.0,
            duration_s: 30.0,
            radio: RadioConfig::default(),
            path_loss: PathLossModel::default(),
            shadowing: ShadowingField::default(),
            dot11p: Dot11pConfig::default(),
            lte: LteConfig::default(),
        }
    }
}

impl SimConfig {
    /// Station counts implied by the densities and road length.
    pub fn station_counts(&self) -> (usize, usize) {
        let km = self.road_length_m / 1000.0;
        (
            (self.density_11p_per_km * km).round() as usize,
            (self.density_lte_per_km * km).round() as usize,
        )
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.radio
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if !(self.road_length_m > 0.0)
            || !(self.duration_s > 0.0)
            || self.warmup_s < 0.0
            || self.density_11p_per_km < 0.0
            || self.density_lte_per_km < 0.0
        {
            return Err(ScenarioError::Invalid(
                "road length and duration must be positive, densities and warm-up non-negative"
                    .into(),
            ));
        }
        let (n11p, nlte) = self.station_counts();
        if n11p + nlte == 0 {
            return Err(ScenarioError::Empty);
        }
        if n11p > 0 && !self.mode.has_11p() {
            return Err(ScenarioError::TechMismatch {
                mode: self.mode.label(),
                tech: "802.11p",
            });
        }
        if nlte > 0 && !self.mode.has_lte() {
            return Err(ScenarioError::TechMismatch {
                mode: self.mode.label(),
                tech: "LTE",
            });
        }
        if self.mode.has_11p() && n11p == 0 {
            return Err(ScenarioError::TechMismatch {
                mode: self.mode.label(),
                tech: "802.11p (density is zero)",
            });
        }
        if self.mode.has_lte() && nlte == 0 {
            return Err(ScenarioError::TechMismatch {
                mode: self.mode.label(),
                tech: "LTE (density is zero)",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("both station densities are zero: nothing to simulate")]
    Empty,
    #[error("mode `{mode}` is inconsistent with the {tech} density")]
    TechMismatch { mode: &'static str, tech: &'static str },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// One station of the scenario. Positions evolve as
/// `x(t) = x0 + v·t (mod road length)`; `v` is signed by travel direction.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Vehicle {
    pub id: u32,
    pub tech: Tech,
    pub lane: u8,
    /// Longitudinal position at t = 0, m.
    pub x0_m: f64,
    /// Signed constant speed, m/s.
    pub speed_mps: f64,
    /// Lateral offset of the lane, m.
    pub y_m: f64,
}

impl Vehicle {
    pub fn position_m(&self, t_s: f64, road_length_m: f64) -> f64 {
        (self.x0_m + self.speed_mps * t_s).rem_euclid(road_length_m)
    }
}

/// Shortest squared distance between two stations on the circular road.
pub fn torus_dist2_m2(x1: f64, y1: f64, x2: f64, y2: f64, road_length_m: f64) -> f64 {
    let dx = (x1 - x2).abs();
    let dx = dx.min(road_length_m - dx);
    let dy = y1 - y2;
    dx * dx + dy * dy
}

/// CAM generation interval implied by the trigger rules for a station moving
/// at constant speed: position triggers every 4 m, capped by the 1 s timeout.
pub fn cam_natural_interval_s(speed_mps: f64) -> f64 {
    let v = speed_mps.abs();
    if v <= 4.0 {
        1.0
    } else {
        4.0 / v
    }
}

/// Draw the scenario: lanes uniform, positions uniform along the road,
/// speeds normal (truncated positive), direction set by the lane.
pub fn generate_scenario<R: Rng>(cfg: &SimConfig, rng: &mut R) -> Result<Vec<Vehicle>, ScenarioError> {
    cfg.validate()?;
    let (n11p, nlte) = cfg.station_counts();
    let speed =
        Normal::new(cfg.speed_mean_mps, cfg.speed_std_mps).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    let lanes = 2 * cfg.lanes_per_direction as u32;
    let mut vehicles = Vec::with_capacity(n11p + nlte);
    for i in 0..(n11p + nlte) {
        let tech = if i < n11p { Tech::Dot11p } else { Tech::Lte };
        let lane = rng.gen_range(0..lanes) as u8;
        let forward = lane < cfg.lanes_per_direction;
        // Lanes 0.. run forward below the road axis, the rest run backward
        // above it; innermost lanes sit closest to the axis.
        let offset = (lane % cfg.lanes_per_direction) as f64 + 0.5;
        let y_m = if forward { -offset } else { offset } * cfg.lane_width_m;
        let x0_m = rng.gen_range(0.0..cfg.road_length_m);
        let mut v = speed.sample(rng);
        while v <= 0.0 {
            v = speed.sample(rng);
        }
        vehicles.push(Vehicle {
            id: i as u32,
            tech,
            lane,
            x0_m,
            speed_mps: if forward { v } else { -v },
            y_m,
        });
    }
    Ok(vehicles)
}

/// Positions of a 1-D Poisson point process of intensity `lambda_per_m` on
/// `[0, length_m)`, for free-flow validation against the analytic model.
pub fn ppp_positions<R: Rng>(lambda_per_m: f64, length_m: f64, rng: &mut R) -> Vec<f64> {
    let mut points = Vec::new();
    let mut x = 0.0;
    loop {
        let u: f64 = rng.gen();
        x -= (1.0 - u).ln() / lambda_per_m;
        if x >= length_m {
            return points;
        }
        points.push(x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn test_scenario_counts_and_lanes() {
        let cfg = SimConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let vs = generate_scenario(&cfg, &mut rng).unwrap();
        assert_eq!(vs.len(), 200);
        assert_eq!(vs.iter().filter(|v| v.tech == Tech::Dot11p).count(), 100);
        for v in &vs {
            assert!(v.speed_mps != 0.0);
            assert_eq!(v.speed_mps > 0.0, v.lane < 3);
            assert!(v.x0_m >= 0.0 && v.x0_m < 2000.0);
        }
    }

    #[test]
    fn test_empty_scenario_rejected() {
        let cfg = SimConfig {
            density_11p_per_km: 0.0,
            density_lte_per_km: 0.0,
            ..SimConfig::default()
        };
        assert!(matches!(
            generate_scenario(&cfg, &mut ChaCha12Rng::seed_from_u64(0)),
            Err(ScenarioError::Empty)
        ));
    }

    #[test]
    fn test_mode_density_mismatch_rejected() {
        let cfg = SimConfig {
            mode: CoexistenceMode::Only11p,
            ..SimConfig::default()
        };
        assert!(matches!(
            generate_scenario(&cfg, &mut ChaCha12Rng::seed_from_u64(0)),
            Err(ScenarioError::TechMismatch { .. })
        ));
    }

    #[test]
    fn test_cam_interval_bounds() {
        assert_eq!(cam_natural_interval_s(0.0), 1.0);
        assert_eq!(cam_natural_interval_s(2.0), 1.0);
        let v = 70.0 / 3.6;
        let dt = cam_natural_interval_s(v);
        assert!((1.0 / dt - 4.861).abs() < 0.01);
    }
}
