//! Event-driven execution of one coexistence scenario.
//!
//! Time advances in integer ticks of 1/14 µs, which represent every protocol
//! interval exactly (TTI = 14 000, AIFS = 1 540, slot = 182, preamble = 560
//! ticks). A binary heap orders events by `(time, class, key)`, so ties
//! resolve identically on every run; all randomness flows through per-purpose
//! ChaCha streams derived from the run seed, making runs bit-reproducible.
//!
//! Channel bookkeeping works on *pieces*: constant-power time–frequency
//! rectangles of the active transmissions. Receptions integrate interference
//! over piece overlaps at the end of each copy's airtime; CBR and LTE
//! sensing integrate the same pieces once per TTI over the piecewise-constant
//! segments between piece edges.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::dot11p::{cbr_11p, dcc_interval, CsmaState, MacAction, Phase, QueuedPacket};
use crate::ltev2x::{
    apply_cc, cbr_lte, cr_limit, draw_counter, emitted_signal, harq_resource, keep_or_reselect,
    sps_select, Band, Reservation, ResourceGrid, SensingDb, SpsProcess, PREAMBLE_TICKS,
    SUBCHANNELS, TTI_TICKS,
};
use crate::propagation::{dbm_to_mw, frame_duration_us, PerCurve};

use super::metrics::{CbrSample, MetricsCollector, MetricsReport, DA_MAX_DISTANCE_M};
use super::{
    cam_natural_interval_s, generate_scenario, torus_dist2_m2, ScenarioError, SimConfig, Tech,
    Vehicle,
};

/// Simulation ticks per second (1 tick = 1/14 µs).
pub const TICKS_PER_S: u64 = 14_000_000;

const LN10_OVER_10: f64 = std::f64::consts::LN_10 / 10.0;

/// How long a completed transmission can still overlap a pending reception
/// or the sensing walk: one TTI.
const RETENTION_TICKS: u64 = TTI_TICKS;

/// Half-duplex lookback for own-transmission intervals (HARQ horizon).
const OWN_AIR_TICKS: u64 = 16 * TTI_TICKS;

pub fn seconds_to_ticks(s: f64) -> u64 {
    (s * TICKS_PER_S as f64).round() as u64
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

// Class constants order simultaneous events: transmissions complete first,
// then the TTI rolls over (sensing, grants), CBR windows close, preambles
// are evaluated, MAC timers fire and CAMs are generated last.
const EV_TX_END: u8 = 0;
const EV_TTI: u8 = 1;
const EV_CBR: u8 = 2;
const EV_PRE_LTE: u8 = 3;
const EV_PRE_11P: u8 = 4;
const EV_MAC_TIMER: u8 = 5;
const EV_CAM: u8 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    time: u64,
    class: u8,
    key: u32,
    /// Timer generation for stale MAC-timer detection.
    seq: u64,
}

// ---------------------------------------------------------------------------
// Runtime state
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct Msg {
    id: u64,
    gen: u64,
}

#[derive(Debug, Clone, Copy)]
struct PendingCopy {
    tti: u64,
    pair: u8,
    msg: Msg,
    sci_phase: u32,
    sci_pair: u8,
}

/// LTE-side state of one station.
struct LteUe {
    sps: Option<SpsProcess>,
    db: SensingDb,
    queued: Option<Msg>,
    pending_harq: Option<PendingCopy>,
    /// Congestion-control step 1 verdict from the last CBR window.
    harq_allowed: bool,
    /// TTIs of own transmissions in the trailing second (2 subchannels each).
    cr_history: VecDeque<u64>,
}

struct Station {
    v: Vehicle,
    mac_rng: ChaCha12Rng,
    rx_rng: ChaCha12Rng,
    csma: Option<CsmaState>,
    lte: Option<LteUe>,
    /// Release gate between consecutive CAMs (DCC / congestion control), s.
    min_interval_s: f64,
    last_gen: Option<u64>,
    /// Natural CAM interval in ticks.
    cam_ticks: u64,
    /// Last completed CBR window value.
    cbr: f64,
    /// Trailing CBR windows feeding the smoothed congestion-control input.
    cbr_windows: VecDeque<f64>,
    /// Smoothed (1 s trailing mean) CBR driving LTE congestion control.
    cbr_cc: f64,
    // CBR window accumulators.
    busy_ticks: u64,
    own_ticks: u64,
    lte_busy_subch: u64,
    lte_meas_ttis: u64,
    /// Busy horizon declared by decoded LTE preambles (CBR accounting).
    lte_declared_until: u64,
    /// Recent own airtime intervals for half-duplex blocking.
    own_air: VecDeque<(u64, u64)>,
}

/// One transmission copy on air (kept one TTI past its end).
struct Transmission {
    id: u32,
    station: u32,
    tech: Tech,
    msg: Msg,
    start: u64,
    /// Start of the decodable payload (skips an inserted preamble).
    data_start: u64,
    /// End of airtime.
    end: u64,
    /// Subchannel pair of the payload (LTE only).
    pair: u8,
    /// Reservation announced in the SCI (LTE only).
    sci_phase: u32,
    sci_pair: u8,
    preamble: bool,
    /// Total payload power in its band, mW.
    data_mw: f64,
    pieces: Vec<TxPiece>,
    /// Linear channel gain (antennas, path loss, shadowing) to every
    /// station, indexed by station id; own entry 0.
    gain: Vec<f64>,
}

struct TxPiece {
    start: u64,
    end: u64,
    /// Total in-channel power, mW.
    full_mw: f64,
    /// Power per subchannel, mW.
    subch_mw: [f64; SUBCHANNELS],
}

const CAND_PENDING: u8 = 0;
const CAND_BLOCKED: u8 = 1;
const CAND_FAILED: u8 = 2;
const CAND_DECODED: u8 = 3;
const CAND_SELF: u8 = 4;

#[derive(Clone, Copy)]
struct Cand {
    dist_m: f32,
    state: u8,
}

/// Per-message reception ledger, finalized when the last copy lands.
struct MsgAccum {
    tech: Tech,
    gen: u64,
    in_window: bool,
    copies_left: u8,
    /// Indexed like the tech's member list.
    cand: Vec<Cand>,
}

#[derive(Default)]
struct WalkScratch {
    breakpoints: Vec<u64>,
    seg: Vec<SegPiece>,
    declared: Vec<bool>,
    lte_e: Vec<[f64; SUBCHANNELS]>,
    lte_own: Vec<bool>,
}

struct SegPiece {
    tx: usize,
    station: u32,
    full_mw: f64,
    subch_mw: [f64; SUBCHANNELS],
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

struct Engine {
    cfg: SimConfig,
    n: usize,
    /// Station ids per technology, ascending.
    members: [Vec<u32>; 2],
    stations: Vec<Station>,
    /// Per directed link: (last shadowing sample dB, tick it was drawn at);
    /// `u64::MAX` marks a link never sampled.
    shadow: Vec<(f64, u64)>,
    shadow_rng: ChaCha12Rng,
    queue: BinaryHeap<Reverse<Event>>,
    active: Vec<Transmission>,
    msgs: HashMap<u64, MsgAccum>,
    metrics: MetricsCollector,
    scratch: WalkScratch,
    warm: u64,
    end: u64,
    next_tx_id: u32,
    next_msg_id: u64,
    rri_ttis: u64,
    grid: ResourceGrid,
    window_ticks: u64,
    frame_ticks: u64,
    // Cached linear-domain constants.
    cca_mw: f64,
    thr_11p_busy_mw: f64,
    thr_lte_busy_mw: f64,
    pre_detect_mw: f64,
    sps_thr_mw: f64,
    noise_full_mw: f64,
    noise_pair_mw: f64,
    mw_11p: f64,
    ant_gain_lin: f64,
    per_11p: PerCurve,
    per_lte: PerCurve,
    per_pre: PerCurve,
    /// TTI for which a preamble evaluation is already scheduled.
    preamble_eval_tti: u64,
}

/// Run one scenario to completion and report its metrics.
pub fn run(cfg: &SimConfig, seed: u64) -> Result<MetricsReport, ScenarioError> {
    let mut engine = Engine::new(cfg, seed)?;
    engine.event_loop();
    let counts = [engine.members[0].len(), engine.members[1].len()];
    Ok(engine.metrics.into_report(counts, cfg.duration_s))
}

impl Engine {
    fn new(cfg: &SimConfig, seed: u64) -> Result<Engine, ScenarioError> {
        let mut cfg = cfg.clone();
        cfg.lte = cfg.mode.lte_config(&cfg.lte);
        let mut scenario_rng = ChaCha12Rng::seed_from_u64(seed);
        scenario_rng.set_stream(0);
        let vehicles = generate_scenario(&cfg, &mut scenario_rng)?;
        let n = vehicles.len();
        let mut shadow_rng = ChaCha12Rng::seed_from_u64(seed);
        shadow_rng.set_stream(1);

        let mut members: [Vec<u32>; 2] = [Vec::new(), Vec::new()];
        let rri_ttis = cfg.lte.rri_ms as u64;
        let periodic = cfg.mode.periodic_generation();
        let mut stations = Vec::with_capacity(n);
        for v in &vehicles {
            members[v.tech as usize].push(v.id);
            let mut mac_rng = ChaCha12Rng::seed_from_u64(seed);
            mac_rng.set_stream(2 + 2 * v.id as u64);
            let mut rx_rng = ChaCha12Rng::seed_from_u64(seed);
            rx_rng.set_stream(3 + 2 * v.id as u64);
            let interval_s = if periodic { 0.2 } else { cam_natural_interval_s(v.speed_mps) };
            stations.push(Station {
                v: *v,
                mac_rng,
                rx_rng,
                csma: (v.tech == Tech::Dot11p).then(|| CsmaState::new(&cfg.dot11p)),
                lte: (v.tech == Tech::Lte).then(|| LteUe {
                    sps: None,
                    db: SensingDb::new(rri_ttis as u32, n),
                    queued: None,
                    pending_harq: None,
                    harq_allowed: cfg.lte.options.harq,
                    cr_history: VecDeque::new(),
                }),
                min_interval_s: cfg.dot11p.dcc_t_g_s,
                last_gen: None,
                cam_ticks: seconds_to_ticks(interval_s),
                cbr: 0.0,
                cbr_windows: VecDeque::new(),
                cbr_cc: 0.0,
                busy_ticks: 0,
                own_ticks: 0,
                lte_busy_subch: 0,
                lte_meas_ttis: 0,
                lte_declared_until: 0,
                own_air: VecDeque::new(),
            });
        }

        let radio = &cfg.radio;
        let warm = seconds_to_ticks(cfg.warmup_s);
        let end = warm + seconds_to_ticks(cfg.duration_s);
        let mut engine = Engine {
            n,
            members,
            stations,
            shadow: vec![(0.0, u64::MAX); n * n],
            shadow_rng,
            queue: BinaryHeap::new(),
            active: Vec::new(),
            msgs: HashMap::new(),
            metrics: MetricsCollector::new(TICKS_PER_S as f64),
            scratch: WalkScratch::default(),
            warm,
            end,
            next_tx_id: 0,
            next_msg_id: 0,
            rri_ttis,
            grid: ResourceGrid::new(cfg.lte.options.pool),
            window_ticks: cfg.dot11p.cbr_window_ms * (TTI_TICKS / 1_000) * 1_000,
            frame_ticks: frame_duration_us(cfg.dot11p.payload_bytes) * (TICKS_PER_S / 1_000_000),
            cca_mw: dbm_to_mw(radio.cca_energy_threshold_dbm),
            thr_11p_busy_mw: dbm_to_mw(radio.cbr_busy_threshold_11p_dbm),
            thr_lte_busy_mw: dbm_to_mw(radio.cbr_busy_threshold_lte_dbm),
            pre_detect_mw: dbm_to_mw(radio.preamble_detect_threshold_dbm),
            sps_thr_mw: dbm_to_mw(radio.sps_sensing_threshold_dbm),
            noise_full_mw: dbm_to_mw(radio.noise_dbm(radio.bandwidth_mhz)),
            noise_pair_mw: dbm_to_mw(radio.noise_dbm(2.0 * crate::ltev2x::SUBCHANNEL_MHZ)),
            mw_11p: dbm_to_mw(radio.total_tx_power_dbm()),
            ant_gain_lin: dbm_to_mw(radio.combined_antenna_gain_db()),
            per_11p: PerCurve::dot11p_mcs2(),
            per_lte: PerCurve::lte_mcs11(),
            per_pre: PerCurve::preamble(),
            preamble_eval_tti: u64::MAX,
            cfg,
        };

        engine.push(Event { time: 0, class: EV_TTI, key: 0, seq: 0 });
        engine.push(Event { time: engine.window_ticks, class: EV_CBR, key: 0, seq: 0 });
        for s in 0..n {
            let span = engine.stations[s].cam_ticks;
            let offset = engine.stations[s].mac_rng.gen_range(0..span);
            engine.push(Event { time: offset, class: EV_CAM, key: s as u32, seq: 0 });
        }
        Ok(engine)
    }

    fn push(&mut self, ev: Event) {
        self.queue.push(Reverse(ev));
    }

    fn event_loop(&mut self) {
        while let Some(Reverse(ev)) = self.queue.pop() {
            if ev.time > self.end {
                break;
            }
            match ev.class {
                EV_TX_END => self.on_tx_end(ev.key, ev.time),
                EV_TTI => self.on_tti_boundary(ev.time),
                EV_CBR => self.on_cbr_window(ev.time),
                EV_PRE_LTE => self.on_preamble_lte(ev.time),
                EV_PRE_11P => self.on_preamble_11p(ev.key, ev.time),
                EV_MAC_TIMER => self.on_mac_timer(ev.key, ev.time, ev.seq),
                EV_CAM => self.on_cam(ev.key, ev.time),
                _ => unreachable!(),
            }
        }
    }

    // -- channel helpers ---------------------------------------------------

    /// Linear gain vector of a transmission starting now at station `s`:
    /// antenna gains, path loss from current positions, and the per-link
    /// correlated shadowing process advanced to `t`.
    fn compute_gains(&mut self, s: u32, t: u64) -> Vec<f64> {
        let t_s = t as f64 / TICKS_PER_S as f64;
        let road = self.cfg.road_length_m;
        let vs = self.stations[s as usize].v;
        let xs = vs.position_m(t_s, road);
        let mut gain = vec![0.0; self.n];
        for (r, item) in gain.iter_mut().enumerate() {
            if r == s as usize {
                continue;
            }
            let vr = self.stations[r].v;
            let xr = vr.position_m(t_s, road);
            let d2 = torus_dist2_m2(xs, vs.y_m, xr, vr.y_m, road);
            let idx = s as usize * self.n + r;
            let (prev_db, last) = self.shadow[idx];
            let (prev, delta_d) = if last == u64::MAX {
                (None, 0.0)
            } else {
                let dt_s = (t - last) as f64 / TICKS_PER_S as f64;
                (Some(prev_db), (vs.speed_mps.abs() + vr.speed_mps.abs()) * dt_s)
            };
            let shadow_db = self.cfg.shadowing.step(prev, delta_d, &mut self.shadow_rng);
            self.shadow[idx] = (shadow_db, t);
            *item = self.ant_gain_lin
                * self.cfg.path_loss.linear_gain_from_d2(d2)
                * (shadow_db * LN10_OVER_10).exp();
        }
        gain
    }

    /// CCA verdict for an 802.11p station: declared-busy horizon or total
    /// received energy from all foreign pieces on air at `t`.
    fn cca_busy_at(&self, s: u32, t: u64) -> bool {
        let st = &self.stations[s as usize];
        if t < st.csma.as_ref().expect("11p station").nav_until {
            return true;
        }
        let mut level = 0.0;
        for tx in &self.active {
            if tx.station == s {
                continue;
            }
            for p in &tx.pieces {
                if p.start <= t && t < p.end {
                    level += p.full_mw * tx.gain[s as usize];
                }
            }
        }
        level >= self.cca_mw
    }

    fn handle_action(&mut self, s: u32, t: u64, action: MacAction) {
        match action {
            MacAction::None => {}
            MacAction::Timer(at) => {
                let seq = self.stations[s as usize].csma.as_ref().unwrap().timer_seq;
                self.push(Event { time: at, class: EV_MAC_TIMER, key: s, seq });
            }
            MacAction::StartTx => self.start_11p_tx(s, t),
        }
    }

    /// Re-feed the busy/idle verdict to every 802.11p station that is
    /// currently waiting or contending (energy or NAV may have changed).
    fn reevaluate_11p(&mut self, t: u64) {
        for i in 0..self.members[0].len() {
            let s = self.members[0][i];
            let phase = self.stations[s as usize].csma.as_ref().unwrap().phase;
            if matches!(phase, Phase::Idle | Phase::Transmitting { .. }) {
                continue;
            }
            let busy = self.cca_busy_at(s, t);
            let st = &mut self.stations[s as usize];
            let action = st.csma.as_mut().unwrap().channel_update(t, busy, &mut st.mac_rng);
            debug_assert!(action != MacAction::StartTx);
            self.handle_action(s, t, action);
        }
    }

    // -- transmission creation ----------------------------------------------

    /// Open the per-message reception ledger at the primary copy's start.
    fn create_accum(&mut self, msg: Msg, tech: Tech, s: u32, t: u64, copies: u8) {
        let t_s = t as f64 / TICKS_PER_S as f64;
        let road = self.cfg.road_length_m;
        let vs = self.stations[s as usize].v;
        let xs = vs.position_m(t_s, road);
        let cand: Vec<Cand> = self.members[tech as usize]
            .iter()
            .map(|&rid| {
                if rid == s {
                    return Cand { dist_m: 0.0, state: CAND_SELF };
                }
                let vr = self.stations[rid as usize].v;
                let d2 = torus_dist2_m2(xs, vs.y_m, vr.position_m(t_s, road), vr.y_m, road);
                Cand { dist_m: d2.sqrt() as f32, state: CAND_PENDING }
            })
            .collect();
        let in_window = t > self.warm;
        if in_window {
            self.metrics.count_transmitted_message(tech);
        }
        self.msgs.insert(msg.id, MsgAccum { tech, gen: msg.gen, in_window, copies_left: copies, cand });
    }

    fn start_11p_tx(&mut self, s: u32, t: u64) {
        let frame_ticks = self.frame_ticks;
        let pkt: QueuedPacket = {
            let st = &mut self.stations[s as usize];
            st.csma.as_mut().unwrap().tx_started(t, frame_ticks)
        };
        let msg = Msg { id: pkt.msg_id, gen: pkt.generated_at };
        let gain = self.compute_gains(s, t);
        let end = t + frame_ticks;
        let id = self.next_tx_id;
        self.next_tx_id += 1;
        self.create_accum(msg, Tech::Dot11p, s, t, 1);
        if t > self.warm {
            self.metrics.count_transmitted_copy(Tech::Dot11p);
        }
        self.active.push(Transmission {
            id,
            station: s,
            tech: Tech::Dot11p,
            msg,
            start: t,
            data_start: t,
            end,
            pair: 0,
            sci_phase: 0,
            sci_pair: 0,
            preamble: false,
            data_mw: self.mw_11p,
            pieces: vec![TxPiece {
                start: t,
                end,
                full_mw: self.mw_11p,
                subch_mw: [self.mw_11p / SUBCHANNELS as f64; SUBCHANNELS],
            }],
            gain,
        });
        let st = &mut self.stations[s as usize];
        st.own_air.push_back((t, end));
        while st.own_air.front().is_some_and(|&(_, e)| e + OWN_AIR_TICKS < t) {
            st.own_air.pop_front();
        }
        self.push(Event { time: end, class: EV_TX_END, key: id, seq: 0 });
        // Other stations may decode this frame's preamble and hold off for
        // the whole frame even below the energy threshold.
        self.push(Event { time: t + PREAMBLE_TICKS, class: EV_PRE_11P, key: id, seq: 0 });
        self.reevaluate_11p(t);
    }

    /// Put one LTE copy on air at TTI `tti` (`primary_copies` is `Some` for
    /// the reservation's primary copy, `None` for the HARQ repeat).
    #[allow(clippy::too_many_arguments)]
    fn fire_lte_tx(
        &mut self,
        s: u32,
        t: u64,
        tti: u64,
        pair: u8,
        msg: Msg,
        sci: (u32, u8),
        primary_copies: Option<u8>,
    ) {
        let preamble = self.cfg.lte.options.preamble_insertion;
        let gain = self.compute_gains(s, t);
        let profile = emitted_signal(preamble, pair, &self.cfg.radio);
        let pieces: Vec<TxPiece> = profile
            .iter()
            .map(|p| {
                let mw = dbm_to_mw(p.power_dbm);
                let mut subch = [0.0; SUBCHANNELS];
                match p.band {
                    Band::FullChannel => subch.fill(mw / SUBCHANNELS as f64),
                    Band::Subchannels { first, count } => {
                        for c in first..first + count {
                            subch[c as usize] = mw / count as f64;
                        }
                    }
                }
                TxPiece { start: t + p.start_tick, end: t + p.end_tick, full_mw: mw, subch_mw: subch }
            })
            .collect();
        let data = pieces.last().expect("LTE profile has a payload piece");
        let (data_start, data_mw, end) = (data.start, data.full_mw, data.end);
        let id = self.next_tx_id;
        self.next_tx_id += 1;
        if let Some(copies) = primary_copies {
            self.create_accum(msg, Tech::Lte, s, t, copies);
        }
        if self.msgs.get(&msg.id).map(|a| a.in_window).unwrap_or(false) {
            self.metrics.count_transmitted_copy(Tech::Lte);
        }
        self.active.push(Transmission {
            id,
            station: s,
            tech: Tech::Lte,
            msg,
            start: t,
            data_start,
            end,
            pair,
            sci_phase: sci.0,
            sci_pair: sci.1,
            preamble,
            data_mw,
            pieces,
            gain,
        });
        let st = &mut self.stations[s as usize];
        st.own_air.push_back((t, end));
        while st.own_air.front().is_some_and(|&(_, e)| e + OWN_AIR_TICKS < t) {
            st.own_air.pop_front();
        }
        st.lte.as_mut().unwrap().cr_history.push_back(tti);
        self.push(Event { time: end, class: EV_TX_END, key: id, seq: 0 });
        if preamble && self.preamble_eval_tti != tti && !self.members[0].is_empty() {
            self.preamble_eval_tti = tti;
            self.push(Event { time: t + PREAMBLE_TICKS, class: EV_PRE_LTE, key: 0, seq: 0 });
        }
        self.reevaluate_11p(t);
    }

    // -- event handlers -----------------------------------------------------

    fn on_cam(&mut self, s: u32, t: u64) {
        let st = &mut self.stations[s as usize];
        // DCC / congestion-control release gate, re-checked at fire time.
        if let Some(last) = st.last_gen {
            let release = last + seconds_to_ticks(st.min_interval_s);
            if t < release {
                self.push(Event { time: release, class: EV_CAM, key: s, seq: 0 });
                return;
            }
        }
        st.last_gen = Some(t);
        let next = t + st.cam_ticks;
        let msg = Msg { id: self.next_msg_id, gen: t };
        self.next_msg_id += 1;
        let tech = st.v.tech;
        if t > self.warm {
            self.metrics.count_generated(tech);
        }
        match tech {
            Tech::Dot11p => {
                let busy = self.cca_busy_at(s, t);
                let st = &mut self.stations[s as usize];
                let pkt = QueuedPacket { msg_id: msg.id, generated_at: t };
                let action = st.csma.as_mut().unwrap().enqueue(pkt, t, busy, &mut st.mac_rng);
                self.handle_action(s, t, action);
            }
            Tech::Lte => {
                let st = &mut self.stations[s as usize];
                let Station { lte, mac_rng, .. } = st;
                let ue = lte.as_mut().unwrap();
                // An unsent predecessor is superseded in the queue.
                ue.queued = Some(msg);
                if ue.sps.is_none() {
                    let tti = t / TTI_TICKS;
                    let (phase, pair) =
                        sps_select(&ue.db, &self.grid, self.sps_thr_mw, tti, mac_rng);
                    let harq = if self.cfg.lte.options.harq {
                        harq_resource(&ue.db, &self.grid, self.sps_thr_mw, tti, phase, mac_rng)
                    } else {
                        None
                    };
                    let counter = draw_counter(&self.cfg.lte, mac_rng);
                    ue.sps = Some(SpsProcess { phase, pair, counter, harq });
                }
            }
        }
        self.push(Event { time: next, class: EV_CAM, key: s, seq: 0 });
    }

    fn on_mac_timer(&mut self, s: u32, t: u64, seq: u64) {
        if self.stations[s as usize].csma.as_ref().unwrap().timer_seq != seq {
            return; // stale timer
        }
        let busy = self.cca_busy_at(s, t);
        let st = &mut self.stations[s as usize];
        let action = st.csma.as_mut().unwrap().timer_fired(t, busy, &mut st.mac_rng);
        self.handle_action(s, t, action);
    }

    fn on_tti_boundary(&mut self, t: u64) {
        let tti = t / TTI_TICKS;
        if t > 0 {
            self.walk_tti(t - TTI_TICKS, t);
            let cutoff = t - RETENTION_TICKS;
            self.active.retain(|tx| tx.end > cutoff);
        }
        if t + TTI_TICKS <= self.end {
            self.push(Event { time: t + TTI_TICKS, class: EV_TTI, key: 0, seq: 0 });
        }
        if self.members[1].is_empty() {
            return;
        }
        let phase = (tti % self.rri_ttis) as u32;
        let variant = self.cfg.lte.options.cc_variant;
        let harq_cfg = self.cfg.lte.options.harq;
        for i in 0..self.members[1].len() {
            let s = self.members[1][i];
            let mut fire_secondary: Option<PendingCopy> = None;
            let mut skip_secondary: Option<u64> = None;
            let mut fire_primary: Option<(u8, Msg, u8, u32)> = None;
            {
                let st = &mut self.stations[s as usize];
                let Station { lte, mac_rng, cbr_cc, .. } = st;
                let ue = lte.as_mut().unwrap();
                while ue.cr_history.front().is_some_and(|&x| x + 1_000 <= tti) {
                    ue.cr_history.pop_front();
                }
                if let Some(p) = ue.pending_harq {
                    if p.tti == tti {
                        ue.pending_harq = None;
                        let within = match cr_limit(*cbr_cc, variant) {
                            None => true,
                            Some(limit) => {
                                2.0 * (ue.cr_history.len() + 1) as f64
                                    / crate::ltev2x::SUBCHANNEL_TTIS_PER_S
                                    <= limit
                            }
                        };
                        if within {
                            fire_secondary = Some(p);
                        } else {
                            skip_secondary = Some(p.msg.id);
                        }
                    }
                }
                if let Some(sps) = ue.sps.as_mut() {
                    if sps.phase == phase {
                        // Use the reserved opportunity (unless the radio is
                        // already committed to a HARQ copy this TTI).
                        if fire_secondary.is_none() {
                            if let Some(msg) = ue.queued.take() {
                                let copies = match (harq_cfg && ue.harq_allowed, sps.harq) {
                                    (true, Some(h)) => {
                                        ue.pending_harq = Some(PendingCopy {
                                            tti: tti + h.offset_ttis as u64,
                                            pair: h.pair,
                                            msg,
                                            sci_phase: sps.phase,
                                            sci_pair: sps.pair,
                                        });
                                        2
                                    }
                                    _ => 1,
                                };
                                fire_primary = Some((sps.pair, msg, copies, sps.phase));
                            }
                        }
                        // The opportunity consumes the counter whether or not
                        // a packet was waiting.
                        sps.counter -= 1;
                        if sps.counter == 0 {
                            if keep_or_reselect(&self.cfg.lte, mac_rng) {
                                sps.counter = draw_counter(&self.cfg.lte, mac_rng);
                            } else {
                                let (new_phase, new_pair) = sps_select(
                                    &ue.db, &self.grid, self.sps_thr_mw, tti, mac_rng,
                                );
                                let harq = if harq_cfg {
                                    harq_resource(
                                        &ue.db, &self.grid, self.sps_thr_mw, tti, new_phase,
                                        mac_rng,
                                    )
                                } else {
                                    None
                                };
                                *sps = SpsProcess {
                                    phase: new_phase,
                                    pair: new_pair,
                                    counter: draw_counter(&self.cfg.lte, mac_rng),
                                    harq,
                                };
                            }
                        }
                    }
                }
            }
            if let Some(id) = skip_secondary {
                self.complete_copy_skip(id);
            }
            if let Some(p) = fire_secondary {
                self.fire_lte_tx(s, t, tti, p.pair, p.msg, (p.sci_phase, p.sci_pair), None);
            }
            if let Some((pair, msg, copies, sci_phase)) = fire_primary {
                self.fire_lte_tx(s, t, tti, pair, msg, (sci_phase, pair), Some(copies));
            }
        }
    }

    /// Integrate the finished TTI `[t0, t1)` over the piecewise-constant
    /// power segments: 802.11p busy time (energy above threshold or a
    /// declared LTE-preamble window) and per-subchannel LTE RSSI/dwell.
    fn walk_tti(&mut self, t0: u64, t1: u64) {
        let active = std::mem::take(&mut self.active);
        let mut sc = std::mem::take(&mut self.scratch);
        let tti = t0 / TTI_TICKS;

        sc.breakpoints.clear();
        sc.breakpoints.push(t0);
        sc.breakpoints.push(t1);
        for tx in &active {
            for p in &tx.pieces {
                if p.end > t0 && p.start < t1 {
                    sc.breakpoints.push(p.start.clamp(t0, t1));
                    sc.breakpoints.push(p.end.clamp(t0, t1));
                }
            }
        }
        sc.breakpoints.sort_unstable();
        sc.breakpoints.dedup();

        let nlte = self.members[1].len();
        sc.declared.clear();
        for &s in &self.members[0] {
            sc.declared.push(self.stations[s as usize].lte_declared_until >= t1);
        }
        sc.lte_e.clear();
        sc.lte_e.resize(nlte, [0.0; SUBCHANNELS]);
        sc.lte_own.clear();
        sc.lte_own.resize(nlte, false);

        for w in 0..sc.breakpoints.len() - 1 {
            let (a, b) = (sc.breakpoints[w], sc.breakpoints[w + 1]);
            let len = b - a;
            sc.seg.clear();
            for (ti, tx) in active.iter().enumerate() {
                for p in &tx.pieces {
                    if p.start <= a && p.end >= b {
                        sc.seg.push(SegPiece {
                            tx: ti,
                            station: tx.station,
                            full_mw: p.full_mw,
                            subch_mw: p.subch_mw,
                        });
                    }
                }
            }
            for (mi, &s) in self.members[0].iter().enumerate() {
                let mut level = 0.0;
                let mut own = false;
                for p in &sc.seg {
                    if p.station == s {
                        own = true;
                    } else {
                        level += p.full_mw * active[p.tx].gain[s as usize];
                    }
                }
                let st = &mut self.stations[s as usize];
                if own {
                    st.own_ticks += len;
                } else if sc.declared[mi] || level >= self.thr_11p_busy_mw {
                    st.busy_ticks += len;
                }
            }
            for (mi, &s) in self.members[1].iter().enumerate() {
                let mut level = [0.0; SUBCHANNELS];
                for p in &sc.seg {
                    if p.station == s {
                        sc.lte_own[mi] = true;
                    } else {
                        let g = active[p.tx].gain[s as usize];
                        match active[p.tx].tech {
                            // An 802.11p burst is not aligned to the LTE
                            // resource grid, so subchannel filtering does not
                            // isolate a 2 MHz slice of it: each subchannel's
                            // energy estimate sees the full burst power.
                            Tech::Dot11p => {
                                for c in 0..SUBCHANNELS {
                                    level[c] += p.full_mw * g;
                                }
                            }
                            Tech::Lte => {
                                for c in 0..SUBCHANNELS {
                                    level[c] += p.subch_mw[c] * g;
                                }
                            }
                        }
                    }
                }
                for c in 0..SUBCHANNELS {
                    sc.lte_e[mi][c] += level[c] * len as f64;
                }
            }
        }

        for (mi, &s) in self.members[1].iter().enumerate() {
            let st = &mut self.stations[s as usize];
            let ue = st.lte.as_mut().unwrap();
            if sc.lte_own[mi] {
                // Half-duplex: a TTI spent transmitting leaves no measurement.
                ue.db.record_tti(tti, None);
            } else {
                let mut avg = [0.0; SUBCHANNELS];
                for c in 0..SUBCHANNELS {
                    avg[c] = sc.lte_e[mi][c] / TTI_TICKS as f64;
                    // A subchannel-TTI is CBR-busy when its average S-RSSI
                    // reaches the busy threshold.
                    if avg[c] >= self.thr_lte_busy_mw {
                        st.lte_busy_subch += 1;
                    }
                }
                ue.db.record_tti(tti, Some(&avg));
                st.lte_meas_ttis += 1;
            }
        }

        self.scratch = sc;
        self.active = active;
    }

    fn on_cbr_window(&mut self, t: u64) {
        let window = self.window_ticks;
        let t_g = self.cfg.dot11p.dcc_t_g_s;
        for s in 0..self.n as u32 {
            let st = &mut self.stations[s as usize];
            let tech = st.v.tech;
            let cbr = match tech {
                Tech::Dot11p => cbr_11p(st.busy_ticks, window, st.own_ticks),
                Tech::Lte => cbr_lte(st.lte_busy_subch, st.lte_meas_ttis * SUBCHANNELS as u64),
            };
            // Congestion control acts on a 1 s trailing mean rather than a
            // single 100 ms window: per-window noise would otherwise make
            // stations churn between control brackets (LTE) or across the
            // DCC knee (802.11p).
            st.cbr_windows.push_back(cbr);
            if st.cbr_windows.len() > 10 {
                st.cbr_windows.pop_front();
            }
            st.cbr_cc = st.cbr_windows.iter().sum::<f64>() / st.cbr_windows.len() as f64;
            match tech {
                Tech::Dot11p => {
                    st.min_interval_s = if self.cfg.dot11p.dcc_enabled {
                        dcc_interval(t_g, st.cbr_cc)
                    } else {
                        t_g
                    };
                }
                Tech::Lte => {
                    let natural_s = st.cam_ticks as f64 / TICKS_PER_S as f64;
                    let decision = apply_cc(
                        st.cbr_cc,
                        self.cfg.lte.options.cc_variant,
                        self.cfg.lte.options.harq,
                        natural_s,
                        self.cfg.lte.cc_t_g_s,
                    );
                    st.lte.as_mut().unwrap().harq_allowed = decision.harq_allowed;
                    st.min_interval_s = decision.min_interval_s;
                }
            }
            st.cbr = cbr;
            st.busy_ticks = 0;
            st.own_ticks = 0;
            st.lte_busy_subch = 0;
            st.lte_meas_ttis = 0;
            if t > self.warm {
                self.metrics.record_cbr(CbrSample {
                    window_end_s: t as f64 / TICKS_PER_S as f64,
                    station: s,
                    tech,
                    cbr,
                });
            }
        }
        if t + window <= self.end {
            self.push(Event { time: t + window, class: EV_CBR, key: 0, seq: 0 });
        }
    }

    /// Joint evaluation of all LTE preambles of the TTI at 802.11p stations:
    /// identical waveforms combine as useful power; 802.11p frames on air
    /// interfere. Decoders hold their NAV for the announced 1 ms and count
    /// the declared window as CBR-busy.
    fn on_preamble_lte(&mut self, t: u64) {
        let tti_start = t - PREAMBLE_TICKS;
        let tti_end = tti_start + TTI_TICKS;
        let active = std::mem::take(&mut self.active);
        let pres: Vec<usize> = active
            .iter()
            .enumerate()
            .filter(|(_, tx)| tx.preamble && tx.start == tti_start)
            .map(|(i, _)| i)
            .collect();
        for i in 0..self.members[0].len() {
            let s = self.members[0][i];
            let st = &self.stations[s as usize];
            if st.own_air.iter().any(|&(a, b)| a < t && b > tti_start) {
                continue; // transmitting: cannot decode
            }
            let mut useful = 0.0;
            for &pi in &pres {
                useful += active[pi].pieces[0].full_mw * active[pi].gain[s as usize];
            }
            if useful < self.pre_detect_mw {
                continue;
            }
            let mut interf = 0.0;
            for (ti, tx) in active.iter().enumerate() {
                if pres.contains(&ti) || tx.station == s {
                    continue;
                }
                for p in &tx.pieces {
                    let lo = p.start.max(tti_start);
                    let hi = p.end.min(t);
                    if lo < hi {
                        interf += p.full_mw * tx.gain[s as usize] * (hi - lo) as f64;
                    }
                }
            }
            interf /= PREAMBLE_TICKS as f64;
            let sinr_db = 10.0 * (useful / (self.noise_full_mw + interf)).log10();
            if sinr_db >= self.per_pre.sinr50_db {
                let st = &mut self.stations[s as usize];
                st.lte_declared_until = st.lte_declared_until.max(tti_end);
                st.csma.as_mut().unwrap().declare_busy(tti_end);
                let action = st.csma.as_mut().unwrap().channel_update(t, true, &mut st.mac_rng);
                self.handle_action(s, t, action);
            }
        }
        self.active = active;
        // The preamble-to-payload power step may also clear energy-based CCA.
        self.reevaluate_11p(t);
    }

    /// One 802.11p frame's preamble at its 40 µs mark: stations that decode
    /// it defer for the whole frame even below the energy threshold.
    fn on_preamble_11p(&mut self, tx_id: u32, t: u64) {
        let active = std::mem::take(&mut self.active);
        let Some(fi) = active.iter().position(|tx| tx.id == tx_id) else {
            self.active = active;
            return;
        };
        let frame = &active[fi];
        let win_start = frame.start;
        for i in 0..self.members[0].len() {
            let s = self.members[0][i];
            if s == frame.station {
                continue;
            }
            let st = &self.stations[s as usize];
            if st.own_air.iter().any(|&(a, b)| a < t && b > win_start) {
                continue;
            }
            let useful = frame.data_mw * frame.gain[s as usize];
            if useful < self.pre_detect_mw {
                continue;
            }
            let mut interf = 0.0;
            for (ti, tx) in active.iter().enumerate() {
                if ti == fi || tx.station == s {
                    continue;
                }
                for p in &tx.pieces {
                    let lo = p.start.max(win_start);
                    let hi = p.end.min(t);
                    if lo < hi {
                        interf += p.full_mw * tx.gain[s as usize] * (hi - lo) as f64;
                    }
                }
            }
            interf /= PREAMBLE_TICKS as f64;
            let sinr_db = 10.0 * (useful / (self.noise_full_mw + interf)).log10();
            if sinr_db >= self.per_pre.sinr50_db {
                let until = frame.end;
                let st = &mut self.stations[s as usize];
                st.csma.as_mut().unwrap().declare_busy(until);
                let action = st.csma.as_mut().unwrap().channel_update(t, true, &mut st.mac_rng);
                self.handle_action(s, t, action);
            }
        }
        self.active = active;
    }

    fn on_tx_end(&mut self, tx_id: u32, t: u64) {
        let active = std::mem::take(&mut self.active);
        let ti = active.iter().position(|tx| tx.id == tx_id).expect("ended tx is still live");
        let tx = &active[ti];
        let tech = tx.tech;
        let msg_id = tx.msg.id;
        let span = (tx.end - tx.data_start) as f64;
        let mut accum = self.msgs.remove(&msg_id).expect("accum lives until its last copy");
        let t_s = t as f64 / TICKS_PER_S as f64;
        let road = self.cfg.road_length_m;
        let xs = self.stations[tx.station as usize].v.position_m(t_s, road);
        let ys = self.stations[tx.station as usize].v.y_m;
        let curve = match tech {
            Tech::Dot11p => self.per_11p,
            Tech::Lte => self.per_lte,
        };
        let noise = match tech {
            Tech::Dot11p => self.noise_full_mw,
            Tech::Lte => self.noise_pair_mw,
        };
        for (ci, &rid) in self.members[tech as usize].iter().enumerate() {
            let cand = &mut accum.cand[ci];
            if cand.state == CAND_SELF || cand.state == CAND_DECODED {
                continue;
            }
            let rst = &mut self.stations[rid as usize];
            if rst.own_air.iter().any(|&(a, b)| a < tx.end && b > tx.start) {
                cand.state = cand.state.max(CAND_BLOCKED);
                continue;
            }
            let useful = tx.data_mw * tx.gain[rid as usize];
            let mut interf = 0.0;
            for (oi, otx) in active.iter().enumerate() {
                if oi == ti || otx.station == rid {
                    continue;
                }
                for p in &otx.pieces {
                    let lo = p.start.max(tx.data_start);
                    let hi = p.end.min(tx.end);
                    if lo < hi {
                        let in_band = match tech {
                            Tech::Dot11p => p.full_mw,
                            Tech::Lte => {
                                p.subch_mw[tx.pair as usize] + p.subch_mw[tx.pair as usize + 1]
                            }
                        };
                        interf += in_band * otx.gain[rid as usize] * (hi - lo) as f64;
                    }
                }
            }
            interf /= span;
            let sinr_db = 10.0 * (useful / (noise + interf)).log10();
            let per = curve.per(sinr_db);
            if rst.rx_rng.gen::<f64>() >= per {
                cand.state = CAND_DECODED;
                let vr = rst.v;
                let d2 =
                    torus_dist2_m2(xs, ys, vr.position_m(t_s, road), vr.y_m, road);
                let in_range = d2.sqrt() <= DA_MAX_DISTANCE_M;
                self.metrics.record_decode(
                    tech,
                    tx.station,
                    rid,
                    accum.gen,
                    t,
                    in_range,
                    t > self.warm,
                );
                if tech == Tech::Lte {
                    let reservation = Reservation {
                        phase: tx.sci_phase,
                        pair: tx.sci_pair,
                        rsrp_mw: (tx.data_mw / 2.0) * tx.gain[rid as usize],
                        expires_tti: t / TTI_TICKS + self.rri_ttis + 1,
                    };
                    let rst = &mut self.stations[rid as usize];
                    rst.lte.as_mut().unwrap().db.record_reservation(tx.station as usize, reservation);
                }
            } else {
                cand.state = cand.state.max(CAND_FAILED);
            }
        }
        let station = tx.station;
        self.active = active;
        accum.copies_left -= 1;
        if accum.copies_left == 0 {
            self.finalize_msg(accum);
        } else {
            self.msgs.insert(msg_id, accum);
        }
        if tech == Tech::Dot11p {
            let busy = self.cca_busy_at(station, t);
            let st = &mut self.stations[station as usize];
            let action = st.csma.as_mut().unwrap().tx_finished(t, busy, &mut st.mac_rng);
            self.handle_action(station, t, action);
        }
        self.reevaluate_11p(t);
    }

    /// A planned HARQ copy was withheld by the CR gate: the message ends one
    /// copy short.
    fn complete_copy_skip(&mut self, msg_id: u64) {
        let mut accum = self.msgs.remove(&msg_id).expect("skipped copy has an accum");
        accum.copies_left -= 1;
        if accum.copies_left == 0 {
            self.finalize_msg(accum);
        } else {
            self.msgs.insert(msg_id, accum);
        }
    }

    /// All copies have landed: score each candidate. Candidates blocked for
    /// every copy are excluded (their radio never had a chance to listen).
    fn finalize_msg(&mut self, accum: MsgAccum) {
        if !accum.in_window {
            return;
        }
        for cand in &accum.cand {
            match cand.state {
                CAND_FAILED | CAND_DECODED => {
                    self.metrics.record_prr_sample(
                        accum.tech,
                        cand.dist_m as f64,
                        cand.state == CAND_DECODED,
                    );
                }
                _ => {}
            }
        }
    }
}
