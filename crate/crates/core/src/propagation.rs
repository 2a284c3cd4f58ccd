//! Shared radio layer: path loss, thermal noise, correlated shadowing,
//! packet-error-rate curves and 802.11p frame timing.
//!
//! Distances are metres, powers dBm (or milliwatts where noted), times
//! microseconds. The propagation environment is a highway line-of-sight
//! channel: a fourth-power distance law above one metre, with log-normal
//! shadowing that decorrelates exponentially with distance travelled.
//!
//! # Example
//!
//! ```
//! use coexsim_core::propagation::{PathLossModel, noise_power_dbm};
//!
//! let pl = PathLossModel::default();
//! assert!((pl.loss_db(100.0) - 100.06).abs() < 1e-9);
//! assert!((noise_power_dbm(10.0, 6.0) - -98.0).abs() < 1e-9);
//! ```

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Constants
// ---------------------------------------------------------------------------

/// Thermal noise density at 290 K, dBm/Hz.
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

/// Distances below this are clamped before evaluating the path loss, m.
pub const MIN_PROPAGATION_DISTANCE_M: f64 = 1.0;

/// Width of the packet-error transition: the PER falls from 0.9 to 0.5 over
/// this many dB of SINR.
pub const PER_TRANSITION_WIDTH_DB: f64 = 1.82;

/// 802.11p PHY preamble + signal field duration, µs (independent of payload).
pub const DOT11P_PREAMBLE_US: u64 = 40;

/// OFDM symbol duration of the 10 MHz 802.11p PHY, µs.
pub const DOT11P_SYMBOL_US: u64 = 8;

/// Data bits carried per OFDM symbol at the default rate (QPSK 1/2, 6 Mb/s).
pub const DOT11P_BITS_PER_SYMBOL: u64 = 48;

/// Service + tail bits prepended/appended by the PHY, bits.
pub const DOT11P_SERVICE_TAIL_BITS: u64 = 16 + 6;

// ---------------------------------------------------------------------------
// Radio configuration
// ---------------------------------------------------------------------------

/// Radio parameters shared by both technologies on the 10 MHz ITS channel,
/// including every detection threshold used by the MAC layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadioConfig {
    /// Transmit power spectral density, dBm/MHz (both technologies).
    pub tx_power_density_dbm_mhz: f64,
    /// Channel bandwidth, MHz.
    pub bandwidth_mhz: f64,
    /// Transmit antenna gain, dB.
    pub antenna_gain_tx_db: f64,
    /// Receive antenna gain, dB.
    pub antenna_gain_rx_db: f64,
    /// Receiver noise figure, dB.
    pub noise_figure_db: f64,
    /// CCA energy-detection threshold of 802.11p, dBm (total in-band power).
    pub cca_energy_threshold_dbm: f64,
    /// Minimum received power at which an 802.11p receiver still locks onto
    /// a decodable preamble, dBm (noise floor plus the preamble SINR limit).
    pub preamble_detect_threshold_dbm: f64,
    /// Power above which a sample counts as busy for the 802.11p CBR, dBm.
    pub cbr_busy_threshold_11p_dbm: f64,
    /// Per-subchannel power above which a subchannel-TTI counts as busy for
    /// the LTE-V2X CBR, dBm.
    pub cbr_busy_threshold_lte_dbm: f64,
    /// RSRP above which a decoded sidelink reservation excludes a resource
    /// during semi-persistent scheduling, dBm.
    pub sps_sensing_threshold_dbm: f64,
    /// Log-normal shadowing standard deviation, dB.
    pub shadowing_std_dev_db: f64,
    /// Shadowing decorrelation distance, m.
    pub shadowing_decorrelation_m: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            tx_power_density_dbm_mhz: 13.0,
            bandwidth_mhz: 10.0,
            antenna_gain_tx_db: 3.0,
            antenna_gain_rx_db: 3.0,
            noise_figure_db: 6.0,
            cca_energy_threshold_dbm: -65.0,
            preamble_detect_threshold_dbm: -98.8,
            cbr_busy_threshold_11p_dbm: -85.0,
            cbr_busy_threshold_lte_dbm: -94.0,
            sps_sensing_threshold_dbm: -110.0,
            shadowing_std_dev_db: 3.0,
            shadowing_decorrelation_m: 25.0,
        }
    }
}

impl RadioConfig {
    /// Total transmit power over the full channel, dBm (23 dBm by default).
    pub fn total_tx_power_dbm(&self) -> f64 {
        self.tx_power_dbm(self.bandwidth_mhz)
    }

    /// Transmit power radiated into `width_mhz` of the channel, dBm.
    pub fn tx_power_dbm(&self, width_mhz: f64) -> f64 {
        self.tx_power_density_dbm_mhz + 10.0 * width_mhz.log10()
    }

    /// Sum of both antenna gains, dB.
    pub fn combined_antenna_gain_db(&self) -> f64 {
        self.antenna_gain_tx_db + self.antenna_gain_rx_db
    }

    /// Noise power in `width_mhz` of bandwidth at this noise figure, dBm.
    pub fn noise_dbm(&self, width_mhz: f64) -> f64 {
        noise_power_dbm(width_mhz, self.noise_figure_db)
    }

    /// Check the threshold ordering that makes preamble insertion effective.
    pub fn validate(&self) -> Result<(), String> {
        if self.bandwidth_mhz <= 0.0 {
            return Err("bandwidth must be positive".into());
        }
        if self.preamble_detect_threshold_dbm >= self.cca_energy_threshold_dbm {
            return Err(format!(
                "preamble detection threshold ({} dBm) must lie below the CCA energy \
                 threshold ({} dBm)",
                self.preamble_detect_threshold_dbm, self.cca_energy_threshold_dbm
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Path loss
// ---------------------------------------------------------------------------

/// Log-distance path loss `L(d) = alpha + 10·beta·log10(d)`, clamped at 1 m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathLossModel {
    /// Intercept at 1 m, dB.
    pub alpha_db: f64,
    /// Distance exponent (4 ⇒ 40 dB/decade).
    pub beta: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        PathLossModel { alpha_db: 20.06, beta: 4.0 }
    }
}

impl PathLossModel {
    /// Path loss at distance `d` m, in dB.
    pub fn loss_db(&self, d: f64) -> f64 {
        let d = d.max(MIN_PROPAGATION_DISTANCE_M);
        self.alpha_db + 10.0 * self.beta * d.log10()
    }

    /// Distance in m at which the loss equals `loss_db`.
    ///
    /// Pure inverse without the 1 m clamp; losses below the intercept yield
    /// sub-metre distances, which callers clamp as appropriate.
    pub fn inverse(&self, loss_db: f64) -> f64 {
        10f64.powf((loss_db - self.alpha_db) / (10.0 * self.beta))
    }

    /// Linear attenuation factor `1/L(d)` expressed from the squared
    /// distance, for hot paths that avoid the square root and the logarithm:
    /// `factor = 10^(-alpha/10) / (d²)^(beta/2)`.
    pub fn linear_gain_from_d2(&self, d2: f64) -> f64 {
        let d2 = d2.max(MIN_PROPAGATION_DISTANCE_M * MIN_PROPAGATION_DISTANCE_M);
        10f64.powf(-self.alpha_db / 10.0) / d2.powf(self.beta / 2.0)
    }
}

/// Path loss under the default highway model, dB (convenience wrapper).
pub fn path_loss_db(d: f64) -> f64 {
    PathLossModel::default().loss_db(d)
}

/// Inverse of [`path_loss_db`] (convenience wrapper).
pub fn inverse_path_loss(loss_db: f64) -> f64 {
    PathLossModel::default().inverse(loss_db)
}

// ---------------------------------------------------------------------------
// Noise and unit helpers
// ---------------------------------------------------------------------------

/// Thermal noise power in `bandwidth_mhz` at noise figure `nf_db`, dBm.
pub fn noise_power_dbm(bandwidth_mhz: f64, nf_db: f64) -> f64 {
    THERMAL_NOISE_DBM_PER_HZ + 10.0 * (bandwidth_mhz * 1e6).log10() + nf_db
}

/// Convert dBm to milliwatts.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Convert milliwatts to dBm.
pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

// ---------------------------------------------------------------------------
// Shadowing
// ---------------------------------------------------------------------------

/// Log-normal shadowing process parameters (state lives with each link).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShadowingField {
    /// Standard deviation, dB.
    pub std_dev_db: f64,
    /// Decorrelation distance, m.
    pub decorrelation_m: f64,
}

impl Default for ShadowingField {
    fn default() -> Self {
        ShadowingField { std_dev_db: 3.0, decorrelation_m: 25.0 }
    }
}

impl ShadowingField {
    /// Advance a link's shadowing value after its endpoints moved a combined
    /// `delta_d` m since the previous sample.
    ///
    /// Stationary Gauss-Markov chain in the dB domain:
    /// `s' = rho·s + sqrt(1 − rho²)·N(0, sigma)` with
    /// `rho = exp(−delta_d / decorrelation)`. `prev = None` draws a fresh
    /// `N(0, sigma)`; `delta_d = 0` returns `prev` unchanged.
    pub fn step<R: Rng + ?Sized>(&self, prev: Option<f64>, delta_d: f64, rng: &mut R) -> f64 {
        match prev {
            None => self.std_dev_db * standard_normal(rng),
            Some(s) => {
                if delta_d == 0.0 {
                    return s;
                }
                let rho = (-delta_d / self.decorrelation_m).exp();
                rho * s + (1.0 - rho * rho).sqrt() * self.std_dev_db * standard_normal(rng)
            }
        }
    }
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

// ---------------------------------------------------------------------------
// Packet error model
// ---------------------------------------------------------------------------

/// Logistic PER-vs-SINR curve for one technology/MCS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerCurve {
    /// SINR at which the PER is 0.5, dB.
    pub sinr50_db: f64,
    /// Logistic slope, 1/dB.
    pub slope_per_db: f64,
    /// Human-readable label ("802.11p MCS 2", ...).
    pub label: &'static str,
}

impl PerCurve {
    fn shared_slope() -> f64 {
        9f64.ln() / PER_TRANSITION_WIDTH_DB
    }

    /// 802.11p QPSK 1/2 (MCS 2), 350 B packets.
    pub fn dot11p_mcs2() -> Self {
        PerCurve { sinr50_db: 1.02, slope_per_db: Self::shared_slope(), label: "802.11p MCS 2" }
    }

    /// LTE-V2X MCS 11, 350 B packets in one TTI.
    pub fn lte_mcs11() -> Self {
        PerCurve { sinr50_db: 5.15, slope_per_db: Self::shared_slope(), label: "LTE-V2X MCS 11" }
    }

    /// 802.11p preamble acquisition (soft counterpart of the −0.8 dB limit).
    pub fn preamble() -> Self {
        PerCurve { sinr50_db: -0.8, slope_per_db: Self::shared_slope(), label: "802.11p preamble" }
    }

    /// Packet error probability at `sinr_db`.
    pub fn per(&self, sinr_db: f64) -> f64 {
        1.0 / (1.0 + (self.slope_per_db * (sinr_db - self.sinr50_db)).exp())
    }
}

/// Mean SINR of a reception, dB.
///
/// `interference` lists co-channel contributions as `(power_mw, weight)`
/// pairs, where the weight is the fraction of the frame the interferer
/// overlaps multiplied by the fraction of its power falling into the
/// receiver's band. Returns −∞ for zero useful power.
pub fn mean_sinr_db(useful_mw: f64, noise_mw: f64, interference: &[(f64, f64)]) -> f64 {
    let mut denom_mw = noise_mw;
    for &(p_mw, weight) in interference {
        denom_mw += p_mw * weight;
    }
    if useful_mw <= 0.0 {
        return f64::NEG_INFINITY;
    }
    mw_to_dbm(useful_mw / denom_mw)
}

// ---------------------------------------------------------------------------
// Frame timing
// ---------------------------------------------------------------------------

/// 802.11p frame duration for a `payload_bytes` MPDU at 6 Mb/s, µs.
///
/// Preamble plus one OFDM symbol per 48 data bits (service and tail bits
/// included), rounded up: 350 B → 512 µs, 700 B → 984 µs.
pub fn frame_duration_us(payload_bytes: u64) -> u64 {
    let bits = DOT11P_SERVICE_TAIL_BITS + 8 * payload_bytes;
    let symbols = bits.div_ceil(DOT11P_BITS_PER_SYMBOL);
    DOT11P_PREAMBLE_US + DOT11P_SYMBOL_US * symbols
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_path_loss_round_trip() {
        let pl = PathLossModel::default();
        for d in [1.0, 3.7, 55.0, 444.63] {
            let back = pl.inverse(pl.loss_db(d));
            assert!((back - d).abs() < 1e-9, "round trip failed at {d}");
        }
    }

    #[test]
    fn test_per_anchors() {
        let c = PerCurve::dot11p_mcs2();
        assert!((c.per(1.02) - 0.5).abs() < 1e-12);
        assert!((c.per(1.02 - PER_TRANSITION_WIDTH_DB) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn test_linear_gain_matches_log_form() {
        let pl = PathLossModel::default();
        for d in [1.0, 2.0, 17.0, 321.0] {
            let lin = pl.linear_gain_from_d2(d * d);
            let log = 10f64.powf(-pl.loss_db(d) / 10.0);
            assert!((lin / log - 1.0).abs() < 1e-12, "mismatch at {d}");
        }
    }
}
