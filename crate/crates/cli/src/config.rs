//! Resolved run configuration: presets, overrides and the metadata echo.
//!
//! A [`RunConfig`] holds everything that influences the numbers a run
//! produces. It is serialized verbatim to `metadata.toml` next to the CSV
//! outputs, and re-running the tool on that file reproduces the same bytes.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

use coexsim_core::sim::{CoexistenceMode, SimConfig};

pub const PRESETS: [&str; 6] = ["fig4a", "fig4b", "fig5", "fig6", "fig7", "table2"];

/// Which free-flow model variable an analytic preset sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    /// Link distance d_u in metres, at fixed density.
    LinkDistanceM,
    /// Density λ in transmissions per metre per second, at fixed distance.
    LambdaPerMS,
}

/// Point grid of an analytic (free-flow model) experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalyticPlan {
    pub sweep: SweepVar,
    /// Swept values, in output order.
    pub values: Vec<f64>,
    /// The variable held fixed: λ for a distance sweep, d_u for a λ sweep.
    pub fixed: f64,
    /// Monte Carlo validation trials per point.
    pub mc_trials: u64,
}

/// One simulated operating point: a coexistence mode at given densities.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimPoint {
    pub mode: CoexistenceMode,
    pub density_11p_per_km: f64,
    pub density_lte_per_km: f64,
}

impl SimPoint {
    fn new(mode: CoexistenceMode, density_per_km: f64) -> SimPoint {
        SimPoint {
            mode,
            density_11p_per_km: if mode.has_11p() { density_per_km } else { 0.0 },
            density_lte_per_km: if mode.has_lte() { density_per_km } else { 0.0 },
        }
    }

    /// Per-technology density used to label output rows (mixed scenarios
    /// here always use equal densities, matching the "D+D" convention).
    pub fn label_density(&self) -> f64 {
        self.density_11p_per_km.max(self.density_lte_per_km)
    }

    /// The base configuration specialized to this point.
    pub fn sim_config(&self, base: &SimConfig) -> SimConfig {
        let mut cfg = base.clone();
        cfg.mode = self.mode;
        cfg.density_11p_per_km = self.density_11p_per_km;
        cfg.density_lte_per_km = self.density_lte_per_km;
        cfg
    }
}

/// Fully resolved experiment description; the unit of reproducibility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Preset id this configuration was derived from (or "custom").
    pub preset: String,
    /// Tool version that produced the metadata.
    pub tool_version: String,
    /// Seeds: every simulated point runs once per seed. Analytic sweeps use
    /// the first seed for their Monte Carlo validation.
    pub seeds: Vec<u64>,
    /// Base tunables (radio, channel, MAC, durations). Simulated points
    /// override mode and densities per [`SimPoint`].
    pub sim: SimConfig,
    pub analytic: Option<AnalyticPlan>,
    #[serde(default)]
    pub sim_points: Vec<SimPoint>,
}

/// Command-line overrides applied on top of a preset or a metadata file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seeds: Vec<u64>,
    pub duration_s: Option<f64>,
    pub density_per_km: Option<f64>,
    pub mode: Option<String>,
    pub trials: Option<u64>,
}

const DEFAULT_SEEDS: [u64; 3] = [1, 2, 3];
const DEFAULT_TRIALS: u64 = 1_000_000;

/// Densities of the table-style sweeps, vehicles per km per technology.
const SWEEP_DENSITIES: [f64; 3] = [50.0, 100.0, 150.0];

pub fn preset(name: &str) -> Result<RunConfig> {
    let sim = SimConfig::default();
    let mut cfg = RunConfig {
        preset: name.to_owned(),
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        seeds: DEFAULT_SEEDS.to_vec(),
        sim,
        analytic: None,
        sim_points: Vec::new(),
    };
    match name {
        // Free-flow reception probability vs link distance at λ = 1/m/s
        // (1000 transmissions per km per second), both sensing thresholds.
        "fig4a" => {
            cfg.analytic = Some(AnalyticPlan {
                sweep: SweepVar::LinkDistanceM,
                values: (1..=50).map(|i| 10.0 * i as f64).collect(),
                fixed: 1.0,
                mc_trials: DEFAULT_TRIALS,
            });
        }
        // Reception probability at d_u = 200 m vs density, log grid.
        "fig4b" => {
            cfg.analytic = Some(AnalyticPlan {
                sweep: SweepVar::LambdaPerMS,
                values: (0..=24)
                    .map(|i| 10f64.powf(-1.0 + 2.0 * i as f64 / 24.0))
                    .collect(),
                fixed: 200.0,
                mc_trials: DEFAULT_TRIALS,
            });
        }
        // LTE alone, with and without the preamble, at 100 and 200 v/km:
        // the mitigation must not disturb LTE's own reception.
        "fig5" => {
            for d in [100.0, 200.0] {
                cfg.sim_points.push(SimPoint::new(CoexistenceMode::OnlyLte, d));
                cfg.sim_points
                    .push(SimPoint::new(CoexistenceMode::OnlyLteNoPreamble, d));
            }
        }
        // 50+50 v/km: each technology alone, legacy coexistence, the fully
        // periodic traffic variant, and preamble insertion.
        "fig6" => {
            cfg.sim_points = vec![
                SimPoint::new(CoexistenceMode::Only11p, 50.0),
                SimPoint::new(CoexistenceMode::OnlyLte, 50.0),
                SimPoint::new(CoexistenceMode::Legacy, 50.0),
                SimPoint::new(CoexistenceMode::LegacyPeriodic, 50.0),
                SimPoint::new(CoexistenceMode::Preamble, 50.0),
            ];
        }
        // Countermeasure comparison across densities.
        "fig7" => {
            for d in SWEEP_DENSITIES {
                for mode in [
                    CoexistenceMode::Legacy,
                    CoexistenceMode::Preamble,
                    CoexistenceMode::PreambleNoHarq,
                    CoexistenceMode::PreambleHalfPool,
                    CoexistenceMode::PreambleModCc,
                ] {
                    cfg.sim_points.push(SimPoint::new(mode, d));
                }
            }
        }
        // Full aggregate table: 7 mode rows × 3 densities.
        "table2" => {
            for d in SWEEP_DENSITIES {
                for mode in [
                    CoexistenceMode::Only11p,
                    CoexistenceMode::OnlyLte,
                    CoexistenceMode::Legacy,
                    CoexistenceMode::Preamble,
                    CoexistenceMode::PreambleNoHarq,
                    CoexistenceMode::PreambleHalfPool,
                    CoexistenceMode::PreambleModCc,
                ] {
                    cfg.sim_points.push(SimPoint::new(mode, d));
                }
            }
        }
        "custom" => {
            cfg.sim_points = vec![SimPoint::new(CoexistenceMode::Legacy, 50.0)];
        }
        other => bail!(
            "unknown preset `{other}`; available: {}, custom, or a metadata.toml path",
            PRESETS.join(", ")
        ),
    }
    Ok(cfg)
}

pub fn load_metadata(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading metadata file {}", path.display()))?;
    let cfg: RunConfig =
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(cfg)
}

impl RunConfig {
    pub fn apply(&mut self, ov: &Overrides) -> Result<()> {
        if !ov.seeds.is_empty() {
            self.seeds = ov.seeds.clone();
        }
        if let Some(d) = ov.duration_s {
            if !(d > 0.0) {
                bail!("--duration must be positive");
            }
            self.sim.duration_s = d;
        }
        if let Some(t) = ov.trials {
            if let Some(plan) = &mut self.analytic {
                plan.mc_trials = t;
            }
        }
        if let Some(m) = &ov.mode {
            let mode = CoexistenceMode::parse(m).ok_or_else(|| {
                anyhow!(
                    "unknown mode `{m}`; available: {}",
                    CoexistenceMode::ALL.map(|m| m.label()).join(", ")
                )
            })?;
            for p in &mut self.sim_points {
                *p = SimPoint::new(mode, p.label_density());
            }
        }
        if let Some(d) = ov.density_per_km {
            if d < 0.0 {
                bail!("--density must be non-negative");
            }
            for p in &mut self.sim_points {
                *p = SimPoint::new(p.mode, d);
            }
        }
        if self.seeds.is_empty() {
            bail!("at least one --seed is required");
        }
        for p in &self.sim_points {
            p.sim_config(&self.sim)
                .validate()
                .map_err(|e| anyhow!("invalid point {:?}: {e}", p.mode.label()))?;
        }
        Ok(())
    }

    pub fn metadata_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).context("serializing metadata")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve_and_round_trip_through_toml() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            let text = cfg.metadata_toml().unwrap();
            let back: RunConfig = toml::from_str(&text).unwrap();
            assert_eq!(back.preset, cfg.preset);
            assert_eq!(back.seeds, cfg.seeds);
            assert_eq!(back.sim_points.len(), cfg.sim_points.len());
            assert_eq!(back.analytic.is_some(), cfg.analytic.is_some());
        }
        assert!(preset("bogus").is_err());
    }

    #[test]
    fn table2_has_seven_modes_by_three_densities() {
        let cfg = preset("table2").unwrap();
        assert_eq!(cfg.sim_points.len(), 21);
    }

    #[test]
    fn overrides_apply() {
        let mut cfg = preset("custom").unwrap();
        cfg.apply(&Overrides {
            seeds: vec![9],
            duration_s: Some(5.0),
            density_per_km: Some(80.0),
            mode: Some("preamble".into()),
            trials: None,
        })
        .unwrap();
        assert_eq!(cfg.seeds, vec![9]);
        assert_eq!(cfg.sim.duration_s, 5.0);
        assert_eq!(cfg.sim_points[0].mode, CoexistenceMode::Preamble);
        assert_eq!(cfg.sim_points[0].density_11p_per_km, 80.0);
        assert_eq!(cfg.sim_points[0].density_lte_per_km, 80.0);
    }
}
