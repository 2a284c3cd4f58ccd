//! Analytical reception model for an 802.11p link embedded in a free-flow
//! stream of LTE-V2X sidelink transmitters sharing the channel.
//!
//! The scenario is a straight road carrying a Poisson population of LTE-V2X
//! transmissions (`lambda` transmissions per metre per second, i.e. one
//! spatial Poisson process of density `lambda·t_tti` per TTI). An 802.11p
//! transmitter sends one frame to a receiver `link_distance` metres away.
//! Only the strongest (nearest) LTE interferer per TTI matters; reception is
//! a hard SINR threshold. CSMA defers the frame while the nearest interferer
//! is inside the transmitter's *protected range* — the distance at which the
//! LTE signal is still sensed, which is what preamble insertion enlarges.
//!
//! Three estimators of the packet reception probability (PRP) are provided:
//! a closed form ([`prp_closed_form`]), a numerical evaluation of the exact
//! boundary-straddling integral ([`prp_exact_numeric`]) and an independent
//! Monte Carlo oracle ([`prp_monte_carlo`]).
//!
//! # Example
//!
//! ```
//! use coexsim_core::analytic::FreeFlowParams;
//!
//! let legacy = FreeFlowParams::legacy(1.0, 200.0);
//! let preamble = FreeFlowParams::preamble(1.0, 200.0);
//! let b_leg = coexsim_core::analytic::prp_closed_form(&legacy);
//! let b_pre = coexsim_core::analytic::prp_closed_form(&preamble);
//! assert!(b_pre.p_pr > b_leg.p_pr);
//! ```

mod montecarlo;
mod quadrature;

pub use montecarlo::{prp_monte_carlo, BranchTally, McCombining, McEstimate};
pub use quadrature::{prp_exact_numeric, ExactPrp, QuadratureSpec};

use crate::dot11p::AIFS_US;
use crate::propagation::{dbm_to_mw, frame_duration_us, mw_to_dbm, PathLossModel, RadioConfig};
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Parameters and derived quantities
// ---------------------------------------------------------------------------

/// Default 802.11p channel occupancy per packet: 350 B frame plus AIFS, s.
pub fn default_t_pck_s() -> f64 {
    (frame_duration_us(350) + AIFS_US) as f64 * 1e-6
}

/// LTE-V2X TTI duration, s.
pub const DEFAULT_T_TTI_S: f64 = 1e-3;

/// Inputs of the free-flow reception model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeFlowParams {
    /// LTE-V2X transmission rate density λ, transmissions per m per s.
    pub lambda_per_m_s: f64,
    /// 802.11p transmitter-receiver distance d_u, m.
    pub link_distance_m: f64,
    /// 802.11p channel occupancy per packet (frame + AIFS), s.
    pub t_pck_s: f64,
    /// LTE-V2X TTI duration, s.
    pub t_tti_s: f64,
    /// Power at which the 802.11p transmitter senses an LTE signal, dBm:
    /// the CCA energy threshold (legacy) or the preamble detection floor
    /// (preamble insertion).
    pub sense_threshold_dbm: f64,
    /// Hard reception SINR threshold γ, dB.
    pub sinr_threshold_db: f64,
    /// Shared radio parameters.
    pub radio: RadioConfig,
    /// Path-loss model.
    pub path_loss: PathLossModel,
}

impl FreeFlowParams {
    /// Parameters for a legacy 802.11p transmitter (energy detection only).
    pub fn legacy(lambda_per_m_s: f64, link_distance_m: f64) -> Self {
        let radio = RadioConfig::default();
        FreeFlowParams {
            lambda_per_m_s,
            link_distance_m,
            t_pck_s: default_t_pck_s(),
            t_tti_s: DEFAULT_T_TTI_S,
            sense_threshold_dbm: radio.cca_energy_threshold_dbm,
            sinr_threshold_db: 1.02,
            radio,
            path_loss: PathLossModel::default(),
        }
    }

    /// Parameters for an 802.11p transmitter that also detects the preambles
    /// inserted by LTE-V2X stations.
    pub fn preamble(lambda_per_m_s: f64, link_distance_m: f64) -> Self {
        let radio = RadioConfig::default();
        FreeFlowParams {
            sense_threshold_dbm: radio.preamble_detect_threshold_dbm,
            ..Self::legacy(lambda_per_m_s, link_distance_m)
        }
    }

    /// Validate the structural invariants of the model.
    pub fn validate(&self) -> Result<(), AnalyticError> {
        if !(self.t_pck_s > 0.0 && self.t_pck_s < self.t_tti_s) {
            return Err(AnalyticError::InvalidParams(format!(
                "t_pck ({}) must lie in (0, t_tti = {})",
                self.t_pck_s, self.t_tti_s
            )));
        }
        if self.lambda_per_m_s < 0.0 || self.link_distance_m <= 0.0 {
            return Err(AnalyticError::InvalidParams(
                "lambda must be ≥ 0 and link_distance > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Quantities derived once from [`FreeFlowParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedQuantities {
    /// Spatial density of LTE transmissions per TTI, 1/m (λ_TTI = λ·t_TTI).
    pub lambda_tti_per_m: f64,
    /// TTIs per second (N_TTI = 1/t_TTI).
    pub n_tti_per_s: f64,
    /// Protected range d_x*, m.
    pub protected_range_m: f64,
    /// Minimum harmless interferer distance d_i, m (+∞ when noise-limited).
    pub min_interferer_distance_m: f64,
    /// Probability that an idle-start packet fits inside the current TTI.
    pub p_c: f64,
}

impl DerivedQuantities {
    pub fn from_params(params: &FreeFlowParams) -> Self {
        DerivedQuantities {
            lambda_tti_per_m: params.lambda_per_m_s * params.t_tti_s,
            n_tti_per_s: 1.0 / params.t_tti_s,
            protected_range_m: protected_range(params),
            min_interferer_distance_m: min_interferer_distance(params),
            p_c: (params.t_tti_s - params.t_pck_s) / params.t_tti_s,
        }
    }
}

/// Full decomposition of the packet reception probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrpBreakdown {
    /// Probability the channel is sensed busy when the packet is generated.
    pub p_busy: f64,
    /// PRP conditioned on a deferred (TTI-aligned) transmission.
    pub p_pr_given_busy: f64,
    /// Probability of an idle start that completes within the current TTI.
    pub p_c_idle: f64,
    /// Probability of an idle start that straddles the TTI boundary.
    pub p_sq_idle: f64,
    /// PRP against a fresh, unprotected interferer.
    pub p_pr_unprotected: f64,
    /// Overall packet reception probability.
    pub p_pr: f64,
}

/// Errors from the numerical estimators.
#[derive(Debug, thiserror::Error)]
pub enum AnalyticError {
    #[error(
        "quadrature failed to converge: last refinement changed the result by \
         {delta:.3e} (tolerance {tolerance:.1e})"
    )]
    NonConvergence { delta: f64, tolerance: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

// ---------------------------------------------------------------------------
// Link-budget quantities
// ---------------------------------------------------------------------------

/// Protected range d_x*: the distance up to which the 802.11p transmitter
/// senses an LTE transmission, m.
///
/// The sensing budget is referenced to an isotropic port (no antenna gains):
/// detection thresholds are receiver-input powers of a standard monitor
/// chain, while the directional gains apply to the data links. Returns 0 when
/// the threshold exceeds the strongest receivable power (nothing is sensed);
/// clamps to the 1 m validity floor of the loss model.
pub fn protected_range(params: &FreeFlowParams) -> f64 {
    let tx_dbm = params.radio.total_tx_power_dbm();
    let budget_db = tx_dbm - params.sense_threshold_dbm;
    if budget_db < params.path_loss.alpha_db {
        return 0.0;
    }
    params.path_loss.inverse(budget_db).max(1.0)
}

/// Minimum harmless interferer distance d_i, m: the closest an LTE
/// transmitter may sit to the *receiver* while the SINR still meets γ.
///
/// Solves `P_R / (P_N + P_I(d_i)) = γ` on the data link (antenna gains on
/// both the useful and the interfering path). Returns +∞ when even the
/// noise alone pushes the SINR below γ (noise-limited failure).
pub fn min_interferer_distance(params: &FreeFlowParams) -> f64 {
    let gains = params.radio.combined_antenna_gain_db();
    let tx_dbm = params.radio.total_tx_power_dbm();
    let p_r_mw = dbm_to_mw(tx_dbm + gains - params.path_loss.loss_db(params.link_distance_m));
    let p_n_mw = dbm_to_mw(params.radio.noise_dbm(params.radio.bandwidth_mhz));
    let gamma_lin = dbm_to_mw(params.sinr_threshold_db);
    let max_interference_mw = p_r_mw / gamma_lin - p_n_mw;
    if max_interference_mw <= 0.0 {
        return f64::INFINITY;
    }
    let loss_db = tx_dbm + gains - mw_to_dbm(max_interference_mw);
    params.path_loss.inverse(loss_db).max(1.0)
}

// ---------------------------------------------------------------------------
// Closed-form probabilities
// ---------------------------------------------------------------------------

/// Probability that the channel is sensed busy at packet generation.
///
/// The nearest LTE transmission of the current TTI falls (in receiver
/// coordinates) inside `[d_u − d_x*, d_u + d_x*]`:
/// `½[(1 − e^{−2λ(d_x*+d_u)}) + sign(d_x*−d_u)(1 − e^{−2λ|d_x*−d_u|})]`.
pub fn p_busy(lambda_tti: f64, d_x_star: f64, d_u: f64) -> f64 {
    let sum = d_x_star + d_u;
    let diff = d_x_star - d_u;
    0.5 * ((1.0 - (-2.0 * lambda_tti * sum).exp())
        + diff.signum() * (1.0 - (-2.0 * lambda_tti * diff.abs()).exp()))
}

/// PRP of a deferred, TTI-aligned transmission: the fresh interferer is
/// conditioned outside the protected area and must also clear d_i.
///
/// `(1/(2(1−P_busy)))·[e^{−2λ·max(d_i, d_x*−d_u)} + e^{−2λ·max(d_i, d_x*+d_u)}]`
/// with the signed difference (the protected interval may cross the
/// receiver). An infinite d_i yields 0.
pub fn p_pr_given_busy(lambda_tti: f64, d_x_star: f64, d_u: f64, d_i: f64) -> f64 {
    if d_i.is_infinite() {
        return 0.0;
    }
    let pb = p_busy(lambda_tti, d_x_star, d_u);
    let near = d_i.max(d_x_star - d_u);
    let far = d_i.max(d_x_star + d_u);
    let num = (-2.0 * lambda_tti * near).exp() + (-2.0 * lambda_tti * far).exp();
    (num / (2.0 * (1.0 - pb))).clamp(0.0, 1.0)
}

/// PRP against a completely fresh (unprotected) interferer:
/// `e^{−2λ_TTI·d_i}`, or 0 for an infinite d_i.
pub fn p_pr_unprotected(lambda_tti: f64, d_i: f64) -> f64 {
    if d_i.is_infinite() {
        return 0.0;
    }
    (-2.0 * lambda_tti * d_i).exp()
}

/// Closed-form PRP with its full probability decomposition.
///
/// A packet is generated uniformly inside a TTI and meets one of three
/// arrival cases: channel busy (defer, full alignment with the next clear
/// TTI), idle start fitting inside the current TTI, or idle start straddling
/// the boundary. The straddling term is approximated by letting whichever
/// TTI holds the larger overlap dominate, splitting the case half/half
/// between a protected and an unprotected interferer:
/// `P_PR ≃ (1 − P_sq_idle/2)·P_PR|busy + (P_sq_idle/2)·P_PR|unprotected`.
pub fn prp_closed_form(params: &FreeFlowParams) -> PrpBreakdown {
    let d = DerivedQuantities::from_params(params);
    let lam = d.lambda_tti_per_m;
    let pb = p_busy(lam, d.protected_range_m, params.link_distance_m);
    let p_c_idle = (1.0 - pb) * d.p_c;
    let p_sq_idle = (1.0 - pb) * (1.0 - d.p_c);
    let p_prb = p_pr_given_busy(
        lam,
        d.protected_range_m,
        params.link_distance_m,
        d.min_interferer_distance_m,
    );
    let p_unpr = p_pr_unprotected(lam, d.min_interferer_distance_m);
    let p_pr = (1.0 - p_sq_idle / 2.0) * p_prb + (p_sq_idle / 2.0) * p_unpr;
    PrpBreakdown {
        p_busy: pb,
        p_pr_given_busy: p_prb,
        p_c_idle,
        p_sq_idle,
        p_pr_unprotected: p_unpr,
        p_pr,
    }
}

// ---------------------------------------------------------------------------
// Shared kernel for the numerical estimators
// ---------------------------------------------------------------------------

/// Linear-domain quantities used by both the quadrature and the Monte Carlo.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LinearKernel {
    pub lambda_tti: f64,
    pub t_pck_s: f64,
    pub t_tti_s: f64,
    /// Protected interval in receiver coordinates, m.
    pub s_lo: f64,
    pub s_hi: f64,
    pub d_i: f64,
    /// Useful received power, mW.
    pub p_r_mw: f64,
    /// Noise power, mW.
    pub p_n_mw: f64,
    /// Linear SINR threshold.
    pub gamma_lin: f64,
    /// Interferer EIRP × 10^(−α/10): interference at x m is k_i/max(x,1)^β.
    pub k_i_mw: f64,
    pub beta: f64,
}

impl LinearKernel {
    pub fn new(params: &FreeFlowParams) -> Self {
        let d = DerivedQuantities::from_params(params);
        let gains = params.radio.combined_antenna_gain_db();
        let tx_dbm = params.radio.total_tx_power_dbm();
        LinearKernel {
            lambda_tti: d.lambda_tti_per_m,
            t_pck_s: params.t_pck_s,
            t_tti_s: params.t_tti_s,
            s_lo: params.link_distance_m - d.protected_range_m,
            s_hi: params.link_distance_m + d.protected_range_m,
            d_i: d.min_interferer_distance_m,
            p_r_mw: dbm_to_mw(
                tx_dbm + gains - params.path_loss.loss_db(params.link_distance_m),
            ),
            p_n_mw: dbm_to_mw(params.radio.noise_dbm(params.radio.bandwidth_mhz)),
            gamma_lin: dbm_to_mw(params.sinr_threshold_db),
            k_i_mw: dbm_to_mw(tx_dbm + gains - params.path_loss.alpha_db),
            beta: params.path_loss.beta,
        }
    }

    /// Interference power from an LTE transmitter at signed position `x`, mW.
    pub fn interference_mw(&self, x: f64) -> f64 {
        self.k_i_mw / x.abs().max(1.0).powf(self.beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_partition_sums_to_one() {
        let b = prp_closed_form(&FreeFlowParams::legacy(1.0, 200.0));
        assert!((b.p_busy + b.p_c_idle + b.p_sq_idle - 1.0).abs() < 1e-12);
    }

    #[test]
    fn test_no_interference_limit() {
        let b = prp_closed_form(&FreeFlowParams::legacy(0.0, 200.0));
        assert_eq!(b.p_pr, 1.0);
    }
}
