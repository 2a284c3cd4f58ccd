//! Radio-model checks against independently derived reference values.

use approx::assert_relative_eq;
use coexsim_core::propagation::{
    dbm_to_mw, frame_duration_us, inverse_path_loss, mean_sinr_db, mw_to_dbm, noise_power_dbm,
    path_loss_db, PathLossModel, PerCurve, RadioConfig, ShadowingField,
};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[test]
fn path_loss_matches_hand_computed_values() {
    // 20.06 + 40 log10(d)
    assert_relative_eq!(path_loss_db(1.0), 20.06, epsilon = 1e-12);
    assert_relative_eq!(path_loss_db(10.0), 60.06, epsilon = 1e-12);
    assert_relative_eq!(path_loss_db(100.0), 100.06, epsilon = 1e-12);
    assert_relative_eq!(path_loss_db(316.227766016838), 120.06, epsilon = 1e-9);
}

#[test]
fn path_loss_clamps_below_one_meter() {
    assert_eq!(path_loss_db(0.0), path_loss_db(1.0));
    assert_eq!(path_loss_db(0.5), path_loss_db(1.0));
}

#[test]
fn inverse_path_loss_round_trips() {
    for d in [1.0, 5.0, 55.0, 390.0, 444.0] {
        assert_relative_eq!(inverse_path_loss(path_loss_db(d)), d, epsilon = 1e-9);
    }
}

#[test]
fn linear_gain_matches_log_form() {
    let model = PathLossModel::default();
    for d in [1.0f64, 37.0, 212.0] {
        let expected = dbm_to_mw(-model.loss_db(d));
        assert_relative_eq!(model.linear_gain_from_d2(d * d), expected, max_relative = 1e-12);
    }
    // The squared-distance form must clamp identically.
    assert_eq!(model.linear_gain_from_d2(0.25), model.linear_gain_from_d2(1.0));
}

#[test]
fn noise_floor_is_minus_98_dbm_for_10_mhz() {
    // -174 dBm/Hz + 10 log10(10 MHz) + 6 dB noise figure.
    assert_relative_eq!(noise_power_dbm(10.0, 6.0), -98.0, epsilon = 1e-9);
    // A 4 MHz data allocation (two subchannels) is ~4 dB quieter.
    assert_relative_eq!(noise_power_dbm(4.0, 6.0), -98.0 - 10.0 * (10.0f64 / 4.0).log10(),
        epsilon = 1e-9);
}

#[test]
fn radio_defaults_match_published_settings() {
    let r = RadioConfig::default();
    assert_relative_eq!(r.total_tx_power_dbm(), 23.0, epsilon = 1e-12);
    assert_relative_eq!(r.tx_power_dbm(10.0), 23.0, epsilon = 1e-12);
    // Two 2 MHz subchannels carry the data of one transmission.
    assert_relative_eq!(r.tx_power_dbm(4.0), 19.020599913279625, epsilon = 1e-9);
    assert_relative_eq!(r.tx_power_dbm(2.0), 16.010299956639813, epsilon = 1e-9);
    assert_relative_eq!(r.combined_antenna_gain_db(), 6.0, epsilon = 1e-12);
    assert_relative_eq!(r.noise_dbm(r.bandwidth_mhz), -98.0, epsilon = 1e-9);
    assert_eq!(r.cca_energy_threshold_dbm, -65.0);
    assert_relative_eq!(r.preamble_detect_threshold_dbm, -98.8, epsilon = 1e-12);
    r.validate().expect("defaults are valid");
}

#[test]
fn per_curves_hit_their_anchors() {
    let p11 = PerCurve::dot11p_mcs2();
    let plte = PerCurve::lte_mcs11();
    let ppre = PerCurve::preamble();
    assert_relative_eq!(p11.per(1.02), 0.5, epsilon = 1e-12);
    assert_relative_eq!(plte.per(5.15), 0.5, epsilon = 1e-12);
    assert_relative_eq!(ppre.per(-0.8), 0.5, epsilon = 1e-12);
    // The transition is 1.82 dB wide from PER 0.9 to 0.1.
    assert_relative_eq!(p11.per(1.02 - 1.82), 0.9, epsilon = 1e-12);
    assert_relative_eq!(p11.per(1.02 + 1.82), 0.1, epsilon = 1e-12);
}

#[test]
fn per_is_monotone_and_bounded() {
    let c = PerCurve::lte_mcs11();
    let mut last = 1.0;
    let mut s = -20.0;
    while s <= 30.0 {
        let per = c.per(s);
        assert!((0.0..=1.0).contains(&per));
        assert!(per <= last);
        last = per;
        s += 0.25;
    }
}

#[test]
fn frame_duration_examples() {
    // 350 B: 40 µs preamble + ceil((16+6+2800)/48) = 59 symbols × 8 µs.
    assert_eq!(frame_duration_us(350), 512);
    assert_eq!(frame_duration_us(700), 984);
    // Monotone in payload.
    assert!(frame_duration_us(351) >= frame_duration_us(350));
}

#[test]
fn mean_sinr_weights_interference_linearly() {
    let useful = dbm_to_mw(-60.0);
    let noise = dbm_to_mw(-98.0);
    // Two equal interferers at half overlap equal one at full overlap.
    let i = dbm_to_mw(-70.0);
    let split = mean_sinr_db(useful, noise, &[(i, 0.5), (i, 0.5)]);
    let merged = mean_sinr_db(useful, noise, &[(i, 1.0)]);
    assert_relative_eq!(split, merged, epsilon = 1e-12);
    // No interference reduces to the SNR.
    let snr = mean_sinr_db(useful, noise, &[]);
    assert_relative_eq!(snr, -60.0 - -98.0, epsilon = 1e-12);
    // Zero useful power is unreceivable.
    assert_eq!(mean_sinr_db(0.0, noise, &[]), f64::NEG_INFINITY);
}

#[test]
fn dbm_mw_round_trip() {
    for dbm in [-98.8, -65.0, 0.0, 13.0, 23.0] {
        assert_relative_eq!(mw_to_dbm(dbm_to_mw(dbm)), dbm, epsilon = 1e-12);
    }
}

#[test]
fn shadowing_is_frozen_at_zero_displacement() {
    let f = ShadowingField::default();
    let mut rng = ChaCha12Rng::seed_from_u64(42);
    let s0 = f.step(None, 0.0, &mut rng);
    let s1 = f.step(Some(s0), 0.0, &mut rng);
    assert_eq!(s0, s1);
}

#[test]
fn shadowing_statistics_match_gauss_markov_model() {
    let f = ShadowingField::default();
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let n = 200_000usize;

    // Marginal: N(0, 3 dB) regardless of step size.
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    let mut corr_at_25 = 0.0;
    let mut prev = None;
    for _ in 0..n {
        let s = f.step(prev, 25.0, &mut rng);
        if let Some(p) = prev {
            corr_at_25 += p * s;
        }
        sum += s;
        sum2 += s * s;
        prev = Some(s);
    }
    let mean = sum / n as f64;
    let var = sum2 / n as f64 - mean * mean;
    assert!(mean.abs() < 0.05, "shadowing mean {mean} should be ~0");
    assert!((var.sqrt() - 3.0).abs() < 0.05, "shadowing std {} should be ~3", var.sqrt());
    // One decorrelation distance leaves correlation e^-1.
    let rho = corr_at_25 / (n as f64 - 1.0) / var;
    assert!((rho - (-1.0f64).exp()).abs() < 0.02, "rho(25 m) = {rho}, want ~0.368");
}

#[test]
fn shadowing_large_step_decorrelates() {
    let f = ShadowingField::default();
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    let mut corr = 0.0;
    let n = 100_000;
    let mut prev = f.step(None, 0.0, &mut rng);
    for _ in 0..n {
        let s = f.step(Some(prev), 2_000.0, &mut rng);
        corr += prev * s;
        prev = s;
    }
    assert!((corr / n as f64 / 9.0).abs() < 0.02);
}
