//! CSMA/CA, CBR and DCC behavior of the 802.11p side.

use approx::assert_relative_eq;
use coexsim_core::dot11p::{
    cbr_11p, cca_busy, dcc_interval, CsmaState, Dot11pConfig, MacAction, Phase, QueuedPacket,
    AIFS_TICKS, SLOT_TICKS,
};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

fn pkt(id: u64, t: u64) -> QueuedPacket {
    QueuedPacket { msg_id: id, generated_at: t }
}

// --- DCC -------------------------------------------------------------------

#[test]
fn dcc_interval_triple_is_exact() {
    // Below and at the knee the floor applies; above it the interval
    // saturates at 1 s. Zero tolerance.
    assert_eq!(dcc_interval(0.1, 0.5), 0.1);
    assert_eq!(dcc_interval(0.1, 0.62), 0.1);
    assert_eq!(dcc_interval(0.1, 0.7), 1.0);
}

#[test]
fn dcc_interval_bounds_and_monotonicity() {
    let mut last = 0.0;
    for i in 0..=100 {
        let cbr = i as f64 / 100.0;
        let t = dcc_interval(0.1, cbr);
        assert!((0.1..=1.0).contains(&t));
        assert!(t >= last);
        last = t;
    }
    // The transition band is a sliver: 0.1% CBR above the knee already
    // saturates far past 1 s before clamping.
    assert_eq!(dcc_interval(0.1, 0.63), 1.0);
}

// --- CBR / CCA ---------------------------------------------------------------

#[test]
fn cbr_excludes_own_transmission_time() {
    // 30 busy ticks seen over a 100-tick window of which 40 were own-tx.
    assert_relative_eq!(cbr_11p(30, 100, 40), 0.5, epsilon = 1e-12);
    assert_relative_eq!(cbr_11p(0, 100, 0), 0.0, epsilon = 1e-12);
    // Degenerate: transmitted the whole window.
    assert_eq!(cbr_11p(0, 100, 100), 1.0);
    // Clamp: busy cannot exceed the listening time.
    assert_eq!(cbr_11p(80, 100, 40), 1.0);
}

#[test]
fn cca_combines_energy_and_nav() {
    assert!(cca_busy(-64.9, 0, 0, -65.0));
    assert!(!cca_busy(-65.1, 0, 0, -65.0));
    // NAV declares busy regardless of measured energy.
    assert!(cca_busy(-120.0, 10, 20, -65.0));
    assert!(!cca_busy(-120.0, 20, 20, -65.0));
}

// --- CSMA/CA traces ----------------------------------------------------------

#[test]
fn fresh_arrival_on_idle_channel_sends_after_one_aifs() {
    let mut st = CsmaState::new(&Dot11pConfig::default());
    let mut r = rng(1);
    let a = st.enqueue(pkt(1, 1000), 1000, false, &mut r);
    assert_eq!(a, MacAction::Timer(1000 + AIFS_TICKS));
    // Channel stayed idle through the AIFS: transmit without any backoff.
    assert_eq!(st.timer_fired(1000 + AIFS_TICKS, false, &mut r), MacAction::StartTx);
    let sent = st.tx_started(1000 + AIFS_TICKS, 7168);
    assert_eq!(sent.msg_id, 1);
    assert!(matches!(st.phase, Phase::Transmitting { until } if until == 1000 + AIFS_TICKS + 7168));
}

#[test]
fn busy_arrival_draws_backoff_once_and_counts_it_down() {
    let mut st = CsmaState::new(&Dot11pConfig::default());
    let mut r = rng(3);
    // Arrival on a busy channel: backoff drawn immediately, wait for idle.
    assert_eq!(st.enqueue(pkt(1, 0), 0, true, &mut r), MacAction::None);
    assert!(matches!(st.phase, Phase::WaitIdle));
    let drawn = st.backoff_remaining;
    assert!(drawn <= 15);

    // Idle transition: AIFS first.
    let a = st.channel_update(500, false, &mut r);
    assert_eq!(a, MacAction::Timer(500 + AIFS_TICKS));
    let mut now = 500 + AIFS_TICKS;
    let mut action = st.timer_fired(now, false, &mut r);
    // Then one timer per slot until the counter hits zero.
    let mut slots = 0;
    while let MacAction::Timer(t) = action {
        assert_eq!(t, now + SLOT_TICKS);
        now = t;
        slots += 1;
        action = st.timer_fired(now, false, &mut r);
        assert!(slots <= 15, "backoff must exhaust within CW");
    }
    assert_eq!(action, MacAction::StartTx);
    // One armed slot per drawn backoff unit.
    assert_eq!(slots, drawn as u64);
}

#[test]
fn backoff_freezes_on_busy_and_resumes_without_redraw() {
    let cfg = Dot11pConfig::default();
    // Find a seed whose first draw is at least 2 so the countdown is visible.
    let mut st = CsmaState::new(&cfg);
    let mut r = rng(12);
    st.enqueue(pkt(1, 0), 0, true, &mut r);
    let drawn = st.backoff_remaining;
    assert!(drawn >= 2, "seed 12 draws {drawn}; pick another seed");

    // Idle: AIFS, then count one slot down.
    st.channel_update(100, false, &mut r);
    st.timer_fired(100 + AIFS_TICKS, false, &mut r);
    let now = 100 + AIFS_TICKS + SLOT_TICKS;
    st.timer_fired(now, false, &mut r);
    assert_eq!(st.backoff_remaining, drawn - 1);

    // Busy interrupt mid-backoff: counter must freeze, not redraw.
    assert_eq!(st.channel_update(now + 10, true, &mut r), MacAction::None);
    assert!(matches!(st.phase, Phase::WaitIdle));
    assert_eq!(st.backoff_remaining, drawn - 1);

    // Idle again: a full AIFS precedes the remaining slots.
    let a = st.channel_update(now + 500, false, &mut r);
    assert_eq!(a, MacAction::Timer(now + 500 + AIFS_TICKS));
}

#[test]
fn aifs_interrupted_by_busy_draws_backoff() {
    let mut st = CsmaState::new(&Dot11pConfig::default());
    let mut r = rng(2);
    st.enqueue(pkt(1, 0), 0, false, &mut r);
    // Busy arrives mid-AIFS: the attempt aborts and a backoff is drawn.
    assert_eq!(st.channel_update(AIFS_TICKS / 2, true, &mut r), MacAction::None);
    assert!(matches!(st.phase, Phase::WaitIdle));
    // The fresh-arrival privilege is gone: after idle + AIFS the station
    // still has slots to count (when the draw is nonzero).
    st.channel_update(10_000, false, &mut r);
    let a = st.timer_fired(10_000 + AIFS_TICKS, false, &mut r);
    if st.backoff_remaining > 0 {
        assert_eq!(a, MacAction::Timer(10_000 + AIFS_TICKS + SLOT_TICKS));
    } else {
        assert_eq!(a, MacAction::StartTx);
    }
}

#[test]
fn nav_declaration_blocks_until_expiry() {
    let mut st = CsmaState::new(&Dot11pConfig::default());
    let mut r = rng(4);
    st.declare_busy(50_000);
    // Arrival during the declared window: treated as busy even with no
    // energy on the channel; a checkpoint timer is armed at NAV expiry.
    let a = st.enqueue(pkt(1, 10_000), 10_000, true, &mut r);
    assert_eq!(a, MacAction::Timer(50_000));
    // At expiry the channel reads idle: AIFS begins.
    let a = st.timer_fired(50_000, false, &mut r);
    assert_eq!(a, MacAction::Timer(50_000 + AIFS_TICKS));
}

#[test]
fn superseding_cam_keeps_access_progress() {
    let mut st = CsmaState::new(&Dot11pConfig::default());
    let mut r = rng(5);
    st.enqueue(pkt(1, 0), 0, true, &mut r);
    let drawn = st.backoff_remaining;
    let seq = st.timer_seq;
    // A newer CAM replaces the queued one without restarting contention.
    assert_eq!(st.enqueue(pkt(2, 100), 100, true, &mut r), MacAction::None);
    assert_eq!(st.queued.unwrap().msg_id, 2);
    assert_eq!(st.backoff_remaining, drawn);
    assert_eq!(st.timer_seq, seq);
}

#[test]
fn tx_finished_with_queued_cam_recontends() {
    let mut st = CsmaState::new(&Dot11pConfig::default());
    let mut r = rng(6);
    st.enqueue(pkt(1, 0), 0, false, &mut r);
    st.timer_fired(AIFS_TICKS, false, &mut r);
    st.tx_started(AIFS_TICKS, 7168);
    // CAM 2 arrives while on air: queued, no action.
    assert_eq!(st.enqueue(pkt(2, 500), 500, true, &mut r), MacAction::None);
    // At TX end with an idle channel, a fresh AIFS starts for CAM 2.
    let end = AIFS_TICKS + 7168;
    let a = st.tx_finished(end, false, &mut r);
    assert_eq!(a, MacAction::Timer(end + AIFS_TICKS));
}

#[test]
fn backoff_draw_is_uniform_zero_to_fifteen() {
    let cfg = Dot11pConfig::default();
    let mut counts = [0u32; 16];
    let mut r = rng(7);
    for i in 0..16_000 {
        let mut st = CsmaState::new(&cfg);
        st.enqueue(pkt(i, 0), 0, true, &mut r);
        counts[st.backoff_remaining as usize] += 1;
    }
    let mean: f64 =
        counts.iter().enumerate().map(|(v, &c)| v as f64 * c as f64).sum::<f64>() / 16_000.0;
    assert!((mean - 7.5).abs() < 0.15, "backoff mean {mean}, want 7.5");
    for (v, &c) in counts.iter().enumerate() {
        assert!(c > 0, "value {v} never drawn");
        assert!((c as f64 - 1000.0).abs() < 150.0, "value {v} drawn {c} times");
    }
}
