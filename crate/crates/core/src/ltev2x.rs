//! LTE-V2X sidelink mode 4: resource grid, sensing-based semi-persistent
//! scheduling (SB-SPS), HARQ blind retransmission, preamble-insertion signal
//! shaping, pool restriction and congestion control.
//!
//! The channel is a lattice of 1 ms TTIs × 5 subchannels of 2 MHz; every
//! packet occupies 2 contiguous subchannels of one TTI (4 possible pair
//! positions). Times are simulator ticks (1/14 µs): a TTI is 14 000 ticks,
//! one OFDM symbol exactly 1000, so the 13 data symbols end at tick 13 000
//! and the last symbol is silent.
//!
//! # Example
//!
//! ```
//! use coexsim_core::ltev2x::{cr_limit, CcVariant};
//!
//! assert_eq!(cr_limit(0.5, CcVariant::Standard), Some(0.03));
//! assert_eq!(cr_limit(0.5, CcVariant::Modified), Some(0.0015));
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::propagation::RadioConfig;

// ---------------------------------------------------------------------------
// Grid constants (ticks of 1/14 µs)
// ---------------------------------------------------------------------------

/// Ticks per TTI (1 ms).
pub const TTI_TICKS: u64 = 14_000;

/// Ticks per OFDM symbol (1/14 ms: 14 symbols per TTI).
pub const SYMBOL_TICKS: u64 = 1_000;

/// Data symbols per TTI; the 14th symbol is kept silent for RX/TX turnaround.
pub const DATA_SYMBOLS: u64 = 13;

/// Tick within the TTI at which the data transmission ends.
pub const DATA_END_TICK: u64 = DATA_SYMBOLS * SYMBOL_TICKS;

/// Duration of the inserted 802.11p preamble, ticks (40 µs).
pub const PREAMBLE_TICKS: u64 = 560;

/// Number of subchannels in the 10 MHz channel.
pub const SUBCHANNELS: usize = 5;

/// Subchannels occupied by one packet (contiguous pair).
pub const SUBCH_PER_PACKET: u8 = 2;

/// Number of distinct contiguous-pair positions.
pub const PAIR_POSITIONS: u8 = (SUBCHANNELS as u8) - SUBCH_PER_PACKET + 1;

/// Subchannel bandwidth, MHz.
pub const SUBCHANNEL_MHZ: f64 = 2.0;

/// Sensing window, TTIs (1 s).
pub const SENSING_WINDOW_TTIS: u32 = 1_000;

/// HARQ retransmission window after the primary copy, TTIs.
pub const HARQ_WINDOW_TTIS: u16 = 15;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Congestion-control variant of the CR limit table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CcVariant {
    /// ETSI limits keyed to CBR brackets 0.3 / 0.65 / 0.8.
    Standard,
    /// Both the limits and the brackets halved (earlier, stronger reaction).
    Modified,
}

/// Resource-pool restriction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolRestriction {
    /// Every TTI admissible.
    Full,
    /// Only 25 of every 50 TTIs admissible (time sharing with 802.11p).
    Half,
}

/// Behavioural switches of the LTE-V2X transmitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LteTxOptions {
    /// Blind HARQ retransmission (two copies per message).
    pub harq: bool,
    /// Replace the first 40 µs of the TTI with a decodable 802.11p preamble.
    pub preamble_insertion: bool,
    pub pool: PoolRestriction,
    pub cc_variant: CcVariant,
}

impl Default for LteTxOptions {
    fn default() -> Self {
        LteTxOptions {
            harq: true,
            preamble_insertion: false,
            pool: PoolRestriction::Full,
            cc_variant: CcVariant::Standard,
        }
    }
}

/// LTE-V2X MAC parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LteConfig {
    /// Resource reservation interval, ms.
    pub rri_ms: u32,
    /// Probability of keeping the resource when the counter expires.
    pub keep_probability: f64,
    /// Reselection-counter draw bounds (inclusive).
    pub counter_min: u8,
    pub counter_max: u8,
    /// CBR measurement window, ms.
    pub cbr_window_ms: u64,
    /// Floor of the congestion-stretched generation interval, s.
    pub cc_t_g_s: f64,
    pub options: LteTxOptions,
}

impl Default for LteConfig {
    fn default() -> Self {
        LteConfig {
            rri_ms: 100,
            keep_probability: 0.5,
            counter_min: 5,
            counter_max: 15,
            cbr_window_ms: 100,
            cc_t_g_s: 0.1,
            options: LteTxOptions::default(),
        }
    }
}

// ---------------------------------------------------------------------------
// Resource grid
// ---------------------------------------------------------------------------

/// The time–frequency lattice and its admissibility mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResourceGrid {
    pub pool: PoolRestriction,
}

impl ResourceGrid {
    pub fn new(pool: PoolRestriction) -> Self {
        ResourceGrid { pool }
    }

    /// Whether a TTI index is inside the transmit pool.
    pub fn admissible(&self, tti: u64) -> bool {
        match self.pool {
            PoolRestriction::Full => true,
            PoolRestriction::Half => tti % 50 < 25,
        }
    }
}

// ---------------------------------------------------------------------------
// Emitted signal profile
// ---------------------------------------------------------------------------

/// Frequency extent of one signal piece.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    /// The whole 10 MHz channel.
    FullChannel,
    /// `count` subchannels starting at `first`.
    Subchannels { first: u8, count: u8 },
}

/// One constant-power piece of a transmission, ticks relative to TTI start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalPiece {
    pub start_tick: u64,
    pub end_tick: u64,
    pub band: Band,
    pub power_dbm: f64,
}

/// Time–frequency power profile of one LTE-V2X transmission.
///
/// Without preamble insertion: 13 symbols on the used subchannel pair, last
/// symbol silent. With it: the first 40 µs carry a decodable 802.11p
/// preamble at full power across all subchannels (announcing 1 ms of
/// occupancy), then the remaining data time on the pair only. The spectral
/// density is 13 dBm/MHz throughout, so the preamble deposits ≈ 4.3 % of a
/// used subchannel's energy onto each unused one.
pub fn emitted_signal(preamble_insertion: bool, pair: u8, radio: &RadioConfig) -> Vec<SignalPiece> {
    let pair_power_dbm = radio.tx_power_dbm(SUBCHANNEL_MHZ * SUBCH_PER_PACKET as f64);
    let data_band = Band::Subchannels { first: pair, count: SUBCH_PER_PACKET };
    if preamble_insertion {
        vec![
            SignalPiece {
                start_tick: 0,
                end_tick: PREAMBLE_TICKS,
                band: Band::FullChannel,
                power_dbm: radio.total_tx_power_dbm(),
            },
            SignalPiece {
                start_tick: PREAMBLE_TICKS,
                end_tick: DATA_END_TICK,
                band: data_band,
                power_dbm: pair_power_dbm,
            },
        ]
    } else {
        vec![SignalPiece {
            start_tick: 0,
            end_tick: DATA_END_TICK,
            band: data_band,
            power_dbm: pair_power_dbm,
        }]
    }
}

// ---------------------------------------------------------------------------
// Sensing database
// ---------------------------------------------------------------------------

/// A reservation learned from a decoded SCI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reservation {
    pub phase: u32,
    pub pair: u8,
    pub rsrp_mw: f64,
    pub expires_tti: u64,
}

/// Per-station sensing memory: a 1 s ring of per-(phase, subchannel) RSSI
/// averages plus the reservations decoded from other stations' SCIs.
#[derive(Debug, Clone)]
pub struct SensingDb {
    rri_ttis: u32,
    cycles: u32,
    /// `rri_ttis × SUBCHANNELS × cycles` ring of linear RSSI averages; NaN
    /// marks TTIs where the station was transmitting (no measurement).
    rssi_mw: Vec<f64>,
    /// Decoded reservation per transmitting station.
    reservations: Vec<Option<Reservation>>,
}

impl SensingDb {
    pub fn new(rri_ttis: u32, n_stations: usize) -> Self {
        let cycles = (SENSING_WINDOW_TTIS / rri_ttis).max(1);
        SensingDb {
            rri_ttis,
            cycles,
            rssi_mw: vec![f64::NAN; rri_ttis as usize * SUBCHANNELS * cycles as usize],
            reservations: vec![None; n_stations],
        }
    }

    fn slot_index(&self, phase: u32, subch: usize, cycle_slot: u32) -> usize {
        ((phase as usize * SUBCHANNELS) + subch) * self.cycles as usize + cycle_slot as usize
    }

    /// Store one TTI's per-subchannel RSSI averages (mW). Pass `None` for a
    /// TTI spent transmitting: half-duplex leaves no measurement.
    pub fn record_tti(&mut self, tti: u64, rssi_mw: Option<&[f64; SUBCHANNELS]>) {
        let phase = (tti % self.rri_ttis as u64) as u32;
        let cycle_slot = ((tti / self.rri_ttis as u64) % self.cycles as u64) as u32;
        for subch in 0..SUBCHANNELS {
            let idx = self.slot_index(phase, subch, cycle_slot);
            self.rssi_mw[idx] = match rssi_mw {
                Some(v) => v[subch],
                None => f64::NAN,
            };
        }
    }

    /// Record (or refresh) the reservation decoded from `station`'s SCI.
    pub fn record_reservation(&mut self, station: usize, r: Reservation) {
        self.reservations[station] = Some(r);
    }

    /// Average measured RSSI of a candidate (phase, pair), mW. Unmeasured
    /// resources rank as free (0).
    pub fn avg_rssi_mw(&self, phase: u32, pair: u8) -> f64 {
        let mut sum = 0.0;
        let mut n = 0u32;
        for subch in pair as usize..(pair + SUBCH_PER_PACKET) as usize {
            for cycle_slot in 0..self.cycles {
                let v = self.rssi_mw[self.slot_index(phase, subch, cycle_slot)];
                if v.is_finite() {
                    sum += v;
                    n += 1;
                }
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Strongest live reservation RSRP overlapping each (phase, pair), mW.
    fn exclusion_grid(&self, now_tti: u64) -> Vec<f64> {
        let mut grid = vec![0.0f64; self.rri_ttis as usize * PAIR_POSITIONS as usize];
        for r in self.reservations.iter().flatten() {
            if r.expires_tti <= now_tti {
                continue;
            }
            // A reservation on pair p shares a subchannel with candidate
            // pairs p−1, p and p+1.
            let lo = r.pair.saturating_sub(SUBCH_PER_PACKET - 1);
            let hi = (r.pair + SUBCH_PER_PACKET - 1).min(PAIR_POSITIONS - 1);
            for q in lo..=hi {
                let idx = r.phase as usize * PAIR_POSITIONS as usize + q as usize;
                grid[idx] = grid[idx].max(r.rsrp_mw);
            }
        }
        grid
    }

    pub fn rri_ttis(&self) -> u32 {
        self.rri_ttis
    }
}

// ---------------------------------------------------------------------------
// Semi-persistent scheduling
// ---------------------------------------------------------------------------

/// HARQ secondary resource relative to the primary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HarqResource {
    /// TTIs after the primary (1..=15).
    pub offset_ttis: u16,
    pub pair: u8,
}

/// The grant a station holds after (re)selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpsProcess {
    /// Reserved TTI phase (absolute TTI mod RRI).
    pub phase: u32,
    pub pair: u8,
    /// Remaining reserved opportunities before keep-or-reselect.
    pub counter: u8,
    pub harq: Option<HarqResource>,
}

/// Draw a reselection counter uniform in [counter_min, counter_max].
pub fn draw_counter<R: Rng>(cfg: &LteConfig, rng: &mut R) -> u8 {
    rng.gen_range(cfg.counter_min..=cfg.counter_max)
}

/// Sensing-based resource selection.
///
/// Candidates are every pool-admissible (TTI phase, subchannel pair).
/// Resources covered by a live decoded reservation with RSRP at or above the
/// sensing threshold are excluded (threshold relaxed by +3 dB until some
/// candidate survives); the survivors are ranked by average RSSI and the
/// winner is drawn uniformly from the best 20 %.
pub fn sps_select<R: Rng>(
    db: &SensingDb,
    grid: &ResourceGrid,
    threshold_mw: f64,
    now_tti: u64,
    rng: &mut R,
) -> (u32, u8) {
    let exclusion = db.exclusion_grid(now_tti);
    let mut threshold = threshold_mw;
    let mut candidates: Vec<(f64, u32, u8)> = Vec::new();
    loop {
        for phase in 0..db.rri_ttis() {
            // The phase decides pool admissibility (the RRI is a multiple
            // of the 50 ms mask period).
            if !grid.admissible(phase as u64) {
                continue;
            }
            for pair in 0..PAIR_POSITIONS {
                let reserved = exclusion[phase as usize * PAIR_POSITIONS as usize + pair as usize];
                if reserved >= threshold {
                    continue;
                }
                candidates.push((db.avg_rssi_mw(phase, pair), phase, pair));
            }
        }
        if !candidates.is_empty() {
            break;
        }
        threshold *= 10f64.powf(0.3); // +3 dB
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("RSSI values are finite"));
    let best = (candidates.len().div_ceil(5)).max(1);
    let (_, phase, pair) = candidates[rng.gen_range(0..best)];
    (phase, pair)
}

/// Counter expiry: keep the grant (true) or reselect (false).
pub fn keep_or_reselect<R: Rng>(cfg: &LteConfig, rng: &mut R) -> bool {
    rng.gen::<f64>() < cfg.keep_probability
}

/// Pick the HARQ secondary: a pool-admissible TTI 1–15 ms after the primary
/// phase, same exclusion/ranking rule. `None` when the pool leaves no
/// admissible TTI in the window (the message is then sent once).
pub fn harq_resource<R: Rng>(
    db: &SensingDb,
    grid: &ResourceGrid,
    threshold_mw: f64,
    now_tti: u64,
    primary_phase: u32,
    rng: &mut R,
) -> Option<HarqResource> {
    let exclusion = db.exclusion_grid(now_tti);
    let rri = db.rri_ttis();
    let mut threshold = threshold_mw;
    let mut candidates: Vec<(f64, u16, u8)> = Vec::new();
    let mut any_admissible = false;
    loop {
        for offset in 1..=HARQ_WINDOW_TTIS {
            let tti = primary_phase as u64 + offset as u64;
            if !grid.admissible(tti) {
                continue;
            }
            any_admissible = true;
            let phase = (tti % rri as u64) as u32;
            for pair in 0..PAIR_POSITIONS {
                let reserved = exclusion[phase as usize * PAIR_POSITIONS as usize + pair as usize];
                if reserved >= threshold {
                    continue;
                }
                candidates.push((db.avg_rssi_mw(phase, pair), offset, pair));
            }
        }
        if !any_admissible {
            return None;
        }
        if !candidates.is_empty() {
            break;
        }
        threshold *= 10f64.powf(0.3);
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("RSSI values are finite"));
    let best = (candidates.len().div_ceil(5)).max(1);
    let (_, offset, pair) = candidates[rng.gen_range(0..best)];
    Some(HarqResource { offset_ttis: offset, pair })
}

// ---------------------------------------------------------------------------
// CBR and congestion control
// ---------------------------------------------------------------------------

/// CBR over one window: busy subchannel-TTIs / measurable subchannel-TTIs.
pub fn cbr_lte(busy_subchannel_ttis: u64, total_subchannel_ttis: u64) -> f64 {
    if total_subchannel_ttis == 0 {
        return 0.0;
    }
    busy_subchannel_ttis as f64 / total_subchannel_ttis as f64
}

/// Maximum allowed channel occupation ratio for a CBR level; `None` below
/// the first bracket means unrestricted.
pub fn cr_limit(cbr: f64, variant: CcVariant) -> Option<f64> {
    match variant {
        CcVariant::Standard => match cbr {
            c if c <= 0.3 => None,
            c if c <= 0.65 => Some(0.03),
            c if c <= 0.8 => Some(0.006),
            _ => Some(0.003),
        },
        CcVariant::Modified => match cbr {
            c if c <= 0.15 => None,
            c if c <= 0.325 => Some(0.015),
            c if c <= 0.4 => Some(0.003),
            _ => Some(0.0015),
        },
    }
}

/// Congestion-control outcome for one station at one CBR report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcDecision {
    /// Whether the HARQ copy is currently permitted.
    pub harq_allowed: bool,
    /// Minimum generation interval imposed on the application, s.
    pub min_interval_s: f64,
    /// The active CR limit, if any.
    pub cr_limit: Option<f64>,
}

/// Subchannel-TTIs available per second (grid capacity for the CR metric).
pub const SUBCHANNEL_TTIS_PER_S: f64 = 1000.0 * SUBCHANNELS as f64;

/// Two-step congestion control.
///
/// Step 1 drops the blind retransmission when two copies per message would
/// exceed the CR limit at the station's natural generation rate; step 2, if
/// a single copy still exceeds it, stretches the generation interval to the
/// value at which the single-copy occupation meets the limit exactly
/// (clamped to [t_g, 1 s], mirroring the 802.11p DCC bounds).
pub fn apply_cc(
    cbr: f64,
    variant: CcVariant,
    harq_enabled: bool,
    natural_interval_s: f64,
    t_g_s: f64,
) -> CcDecision {
    let subch = SUBCH_PER_PACKET as f64;
    let limit = match cr_limit(cbr, variant) {
        None => {
            return CcDecision { harq_allowed: harq_enabled, min_interval_s: t_g_s, cr_limit: None }
        }
        Some(l) => l,
    };
    let copies = if harq_enabled { 2.0 } else { 1.0 };
    let cr_full = copies * subch / (SUBCHANNEL_TTIS_PER_S * natural_interval_s);
    if cr_full <= limit {
        return CcDecision { harq_allowed: harq_enabled, min_interval_s: t_g_s, cr_limit: Some(limit) };
    }
    let cr_single = subch / (SUBCHANNEL_TTIS_PER_S * natural_interval_s);
    if cr_single <= limit {
        return CcDecision { harq_allowed: false, min_interval_s: t_g_s, cr_limit: Some(limit) };
    }
    let stretched = (subch / (SUBCHANNEL_TTIS_PER_S * limit)).clamp(t_g_s, 1.0);
    CcDecision { harq_allowed: false, min_interval_s: stretched, cr_limit: Some(limit) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_cr_limit_brackets() {
        assert_eq!(cr_limit(0.2, CcVariant::Standard), None);
        assert_eq!(cr_limit(0.5, CcVariant::Standard), Some(0.03));
        assert_eq!(cr_limit(0.7, CcVariant::Standard), Some(0.006));
        assert_eq!(cr_limit(0.9, CcVariant::Standard), Some(0.003));
        assert_eq!(cr_limit(0.1, CcVariant::Modified), None);
        assert_eq!(cr_limit(0.2, CcVariant::Modified), Some(0.015));
        assert_eq!(cr_limit(0.35, CcVariant::Modified), Some(0.003));
        assert_eq!(cr_limit(0.5, CcVariant::Modified), Some(0.0015));
    }

    #[test]
    fn test_pool_masks() {
        let full = ResourceGrid::new(PoolRestriction::Full);
        let half = ResourceGrid::new(PoolRestriction::Half);
        assert!((0..200).all(|t| full.admissible(t)));
        let admissible = (0..100).filter(|&t| half.admissible(t)).count();
        assert_eq!(admissible, 50);
        assert!(half.admissible(24) && !half.admissible(25));
    }
}
