//! IEEE 802.11p side: CSMA/CA medium access, CCA semantics (energy detection
//! plus decoded-preamble busy declaration), CBR measurement and reactive DCC.
//!
//! The CSMA/CA state machine is event-driven and engine-agnostic: the caller
//! feeds it packet arrivals, channel transitions and timer expirations
//! together with the current clear-channel verdict, and it answers with the
//! next timer to arm or the instruction to start transmitting. All times are
//! simulator ticks (1/14 µs, so that both the 13 µs slot and the 1 ms TTI
//! are exact integers).
//!
//! # Example
//!
//! ```
//! use coexsim_core::dot11p::dcc_interval;
//!
//! // Below the 0.62 knee DCC leaves the generation rate alone.
//! assert_eq!(dcc_interval(0.1, 0.5), 0.1);
//! // Above it the interval saturates at 1 s almost immediately.
//! assert_eq!(dcc_interval(0.1, 0.7), 1.0);
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Timing constants (ticks of 1/14 µs unless noted)
// ---------------------------------------------------------------------------

/// Simulator ticks per microsecond: both the 13 µs CSMA slot and the
/// 1000/14 µs LTE OFDM symbol are integral in this base.
pub const TICKS_PER_US: u64 = 14;

/// Arbitration inter-frame space, µs ("initial space" sensed before every
/// access attempt, including re-attempts after a busy period).
pub const AIFS_US: u64 = 110;

/// Backoff slot duration, µs.
pub const SLOT_US: u64 = 13;

/// Largest backoff draw, slots (uniform over [0, 15]).
pub const CW_MAX_SLOTS: u32 = 15;

/// Busy duration declared by a decoded LTE preamble, µs: the whole TTI,
/// including its silent last symbol.
pub const LTE_DECLARED_BUSY_US: u64 = 1000;

/// AIFS in ticks.
pub const AIFS_TICKS: u64 = AIFS_US * TICKS_PER_US;

/// Slot in ticks.
pub const SLOT_TICKS: u64 = SLOT_US * TICKS_PER_US;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// 802.11p MAC parameters. Detection thresholds live in
/// [`crate::propagation::RadioConfig`]; this holds timing and DCC knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Dot11pConfig {
    /// Arbitration inter-frame space, µs.
    pub aifs_us: u64,
    /// Backoff slot, µs.
    pub slot_us: u64,
    /// Upper bound of the uniform backoff draw, slots.
    pub cw_max_slots: u32,
    /// CAM payload, bytes.
    pub payload_bytes: u64,
    /// CBR measurement window, ms.
    pub cbr_window_ms: u64,
    /// Reactive DCC enabled.
    pub dcc_enabled: bool,
    /// DCC floor interval t_g, s.
    pub dcc_t_g_s: f64,
}

impl Default for Dot11pConfig {
    fn default() -> Self {
        Dot11pConfig {
            aifs_us: AIFS_US,
            slot_us: SLOT_US,
            cw_max_slots: CW_MAX_SLOTS,
            payload_bytes: 350,
            cbr_window_ms: 100,
            dcc_enabled: true,
            dcc_t_g_s: 0.1,
        }
    }
}

// ---------------------------------------------------------------------------
// CCA
// ---------------------------------------------------------------------------

/// Clear-channel assessment: busy iff the total in-band power reaches the
/// energy threshold or a previously decoded preamble declared the medium
/// occupied past `now`.
pub fn cca_busy(total_power_dbm: f64, now: u64, nav_until: u64, energy_threshold_dbm: f64) -> bool {
    total_power_dbm >= energy_threshold_dbm || now < nav_until
}

/// CBR over one window: time-weighted busy fraction, with the station's own
/// transmission time excluded from the denominator (it cannot listen then).
pub fn cbr_11p(busy_ticks: u64, window_ticks: u64, own_tx_ticks: u64) -> f64 {
    let listening = window_ticks.saturating_sub(own_tx_ticks);
    if listening == 0 {
        return 1.0;
    }
    busy_ticks.min(listening) as f64 / listening as f64
}

// ---------------------------------------------------------------------------
// DCC
// ---------------------------------------------------------------------------

/// Reactive DCC packet-interval rule:
/// `t_Δ = max{t_g, min{1, t_g·4000·(δ − 0.62)/δ}}`, in seconds.
///
/// Below the 0.62 knee the bracketed term is negative and the floor t_g
/// wins; above it the factor 4000 saturates the interval at 1 s within a
/// fraction of a percent of CBR, so the rule is effectively two-level.
pub fn dcc_interval(t_g_s: f64, cbr: f64) -> f64 {
    if cbr <= 0.0 {
        return t_g_s;
    }
    t_g_s.max((t_g_s * 4000.0 * (cbr - 0.62) / cbr).min(1.0))
}

// ---------------------------------------------------------------------------
// CSMA/CA state machine
// ---------------------------------------------------------------------------

/// A queued CAM awaiting channel access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueuedPacket {
    pub msg_id: u64,
    pub generated_at: u64,
}

/// Access phases of the CSMA/CA process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Nothing queued.
    Idle,
    /// Packet queued, waiting for the channel to go idle.
    WaitIdle,
    /// Sensing the arbitration inter-frame space.
    Aifs { until: u64 },
    /// Counting down backoff slots; the armed slot ends at `slot_end`.
    Backoff { slot_end: u64 },
    /// Own frame on air.
    Transmitting { until: u64 },
}

/// What the caller must do after feeding an event to the state machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacAction {
    /// Nothing to arm; wait for the next channel transition.
    None,
    /// Arm (or re-arm) the station's MAC timer at this tick. Any previously
    /// armed timer is stale: `timer_seq` identifies the current one.
    Timer(u64),
    /// Begin transmission now.
    StartTx,
}

/// Per-station CSMA/CA state.
#[derive(Debug, Clone)]
pub struct CsmaState {
    pub phase: Phase,
    /// Backoff has been drawn for the queued packet.
    backoff_drawn: bool,
    /// Remaining backoff slots (valid when `backoff_drawn`).
    pub backoff_remaining: u32,
    /// Medium declared busy until this tick by a decoded preamble.
    pub nav_until: u64,
    pub queued: Option<QueuedPacket>,
    /// Bumped whenever a new timer is armed; stale timer events (older seq)
    /// must be discarded by the caller.
    pub timer_seq: u64,
    aifs_ticks: u64,
    slot_ticks: u64,
    cw_max_slots: u32,
}

impl CsmaState {
    pub fn new(cfg: &Dot11pConfig) -> Self {
        CsmaState {
            phase: Phase::Idle,
            backoff_drawn: false,
            backoff_remaining: 0,
            nav_until: 0,
            queued: None,
            timer_seq: 0,
            aifs_ticks: cfg.aifs_us * TICKS_PER_US,
            slot_ticks: cfg.slot_us * TICKS_PER_US,
            cw_max_slots: cfg.cw_max_slots,
        }
    }

    /// Queue a CAM (replacing any unsent predecessor) and, if the station
    /// was not already contending or transmitting, begin channel access.
    pub fn enqueue<R: Rng>(
        &mut self,
        pkt: QueuedPacket,
        now: u64,
        busy: bool,
        rng: &mut R,
    ) -> MacAction {
        let was_idle = matches!(self.phase, Phase::Idle);
        self.queued = Some(pkt);
        if was_idle {
            self.backoff_drawn = false;
            self.begin_contention(now, busy, rng)
        } else {
            // Superseding an unsent CAM keeps the access progress.
            MacAction::None
        }
    }

    /// The channel's busy/idle verdict (energy or NAV) may have changed.
    pub fn channel_update<R: Rng>(&mut self, now: u64, busy: bool, rng: &mut R) -> MacAction {
        match self.phase {
            Phase::WaitIdle if !busy => self.start_aifs(now),
            Phase::Aifs { .. } | Phase::Backoff { .. } if busy => self.interrupt(now, rng),
            _ => MacAction::None,
        }
    }

    /// The armed timer fired (caller has already verified `timer_seq`).
    pub fn timer_fired<R: Rng>(&mut self, now: u64, busy: bool, rng: &mut R) -> MacAction {
        match self.phase {
            Phase::WaitIdle => {
                // NAV expiry checkpoint.
                if busy {
                    self.arm_nav_timer(now)
                } else {
                    self.start_aifs(now)
                }
            }
            Phase::Aifs { until } if now >= until => {
                if busy {
                    return self.interrupt(now, rng);
                }
                if !self.backoff_drawn || self.backoff_remaining == 0 {
                    // Fresh arrival that sensed a full idle AIFS, or an
                    // exhausted counter: transmit immediately.
                    MacAction::StartTx
                } else {
                    self.arm_slot(now)
                }
            }
            Phase::Backoff { slot_end } if now >= slot_end => {
                if busy {
                    return self.interrupt(now, rng);
                }
                self.backoff_remaining -= 1;
                if self.backoff_remaining == 0 {
                    MacAction::StartTx
                } else {
                    self.arm_slot(now)
                }
            }
            _ => MacAction::None,
        }
    }

    /// Mark the frame on air (caller acted on [`MacAction::StartTx`]).
    pub fn tx_started(&mut self, now: u64, duration_ticks: u64) -> QueuedPacket {
        let pkt = self.queued.take().expect("StartTx without a queued packet");
        self.phase = Phase::Transmitting { until: now + duration_ticks };
        self.backoff_drawn = false;
        self.timer_seq += 1;
        pkt
    }

    /// Own transmission finished; contend again if a CAM arrived meanwhile.
    pub fn tx_finished<R: Rng>(&mut self, now: u64, busy: bool, rng: &mut R) -> MacAction {
        self.phase = Phase::Idle;
        if self.queued.is_some() {
            self.backoff_drawn = false;
            self.begin_contention(now, busy, rng)
        } else {
            MacAction::None
        }
    }

    /// Extend the declared-busy horizon from a decoded preamble. The caller
    /// must follow up with [`Self::channel_update`].
    pub fn declare_busy(&mut self, until: u64) {
        self.nav_until = self.nav_until.max(until);
    }

    fn begin_contention<R: Rng>(&mut self, now: u64, busy: bool, rng: &mut R) -> MacAction {
        if busy {
            self.draw_backoff(rng);
            self.phase = Phase::WaitIdle;
            self.arm_nav_timer(now)
        } else {
            self.start_aifs(now)
        }
    }

    /// Busy hit during AIFS or a backoff slot: abort the attempt, draw the
    /// packet's backoff if not drawn yet, and wait for idle.
    fn interrupt<R: Rng>(&mut self, now: u64, rng: &mut R) -> MacAction {
        if !self.backoff_drawn {
            self.draw_backoff(rng);
        }
        self.phase = Phase::WaitIdle;
        self.arm_nav_timer(now)
    }

    fn draw_backoff<R: Rng>(&mut self, rng: &mut R) {
        self.backoff_drawn = true;
        self.backoff_remaining = rng.gen_range(0..=self.cw_max_slots);
    }

    fn start_aifs(&mut self, now: u64) -> MacAction {
        let until = now + self.aifs_ticks;
        self.phase = Phase::Aifs { until };
        self.timer_seq += 1;
        MacAction::Timer(until)
    }

    fn arm_slot(&mut self, now: u64) -> MacAction {
        let slot_end = now + self.slot_ticks;
        self.phase = Phase::Backoff { slot_end };
        self.timer_seq += 1;
        MacAction::Timer(slot_end)
    }

    /// While waiting in a NAV-declared busy period no channel transition
    /// event will arrive at its expiry, so arm a checkpoint there.
    fn arm_nav_timer(&mut self, now: u64) -> MacAction {
        if self.nav_until > now {
            self.timer_seq += 1;
            MacAction::Timer(self.nav_until)
        } else {
            MacAction::None
        }
    }
}
