//! Release acceptance gates. Each test prints one PASS/FAIL line (visible
//! with `cargo test -- --nocapture`) and asserts its criterion.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use coexsim_core::analytic::{
    protected_range, prp_closed_form, prp_exact_numeric, prp_monte_carlo, FreeFlowParams,
    McCombining, QuadratureSpec,
};
use coexsim_core::dot11p::dcc_interval;
use coexsim_core::ltev2x::{cr_limit, CcVariant};
use coexsim_core::sim::metrics::{da_ccdf_quantile, MetricsReport};
use coexsim_core::sim::{engine, CoexistenceMode, SimConfig, Tech};

fn gate(name: &str, pass: bool, detail: &str) {
    println!("ACCEPTANCE {name}: {}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

fn params(preamble: bool, lambda: f64, du: f64) -> FreeFlowParams {
    if preamble {
        FreeFlowParams::preamble(lambda, du)
    } else {
        FreeFlowParams::legacy(lambda, du)
    }
}

fn sim_cfg(mode: CoexistenceMode, density: f64) -> SimConfig {
    SimConfig {
        mode,
        density_11p_per_km: if mode.has_11p() { density } else { 0.0 },
        density_lte_per_km: if mode.has_lte() { density } else { 0.0 },
        ..SimConfig::default()
    }
}

fn run3(mode: CoexistenceMode, density: f64) -> Vec<MetricsReport> {
    [1u64, 2, 3]
        .iter()
        .map(|&s| engine::run(&sim_cfg(mode, density), s).expect("run"))
        .collect()
}

fn mean_aggregate(reports: &[MetricsReport], tech: Tech, f: impl Fn(&coexsim_core::sim::metrics::Aggregate) -> f64) -> f64 {
    let vals: Vec<f64> = reports
        .iter()
        .flat_map(|r| r.aggregates.iter().filter(|a| a.tech == tech).map(&f))
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

/// Pooled PRR per 10 m bin across seeds: Σ decoded / Σ candidates.
fn pooled_prr(reports: &[MetricsReport], tech: Tech) -> BTreeMap<i64, f64> {
    let mut acc: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    for r in reports {
        for b in r.prr.iter().filter(|b| b.tech == tech && b.n_samples > 0) {
            let e = acc.entry(b.bin_low_m as i64).or_insert((0.0, 0.0));
            e.0 += b.prr * b.n_samples as f64;
            e.1 += b.n_samples as f64;
        }
    }
    acc.into_iter().map(|(k, (d, c))| (k, d / c)).collect()
}

#[test]
fn c1_partition_identity() {
    let start = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let lambda = 10f64.powf(rng.gen_range(-4.0..1.0));
        let du = rng.gen_range(1.0..500.0);
        let b = prp_closed_form(&params(rng.gen(), lambda, du));
        worst = worst.max((b.p_busy + b.p_c_idle + b.p_sq_idle - 1.0).abs());
    }
    let elapsed = start.elapsed();
    gate(
        "C1 state partition sums to 1 within 1e-12 on 1000 random points",
        worst <= 1e-12 && elapsed.as_secs_f64() < 1.0,
        &format!("worst deviation {worst:.3e}, elapsed {elapsed:?}"),
    );
}

#[test]
fn c2_closed_form_matches_monte_carlo() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (i, du) in (1..=8).map(|k| 50.0 * k as f64).enumerate() {
        for pre in [false, true] {
            let p = params(pre, 1.0, du);
            let closed = prp_closed_form(&p).p_pr;
            let mc = prp_monte_carlo(&p, 1_000_000, 42 + i as u64, McCombining::DominantOverlap);
            worst = worst.max((closed - mc.p_pr).abs());
        }
    }
    let elapsed = start.elapsed();
    gate(
        "C2 |closed - MC(1e6)| <= 0.05 for d_u in {50..400}, both thresholds, < 2 min",
        worst <= 0.05 && elapsed.as_secs_f64() < 120.0,
        &format!("worst |closed-mc| {worst:.4}, elapsed {elapsed:?}"),
    );
}

#[test]
fn c3_quadrature_converges_and_reports_the_gap() {
    let mut worst_delta = 0.0f64;
    let mut worst_gap = 0.0f64;
    let mut converged = true;
    for du in (1..=50).map(|k| 10.0 * k as f64) {
        for pre in [false, true] {
            let p = params(pre, 1.0, du);
            match prp_exact_numeric(&p, &QuadratureSpec::default()) {
                Ok(e) => {
                    worst_delta = worst_delta.max(e.refinement_delta);
                    worst_gap = worst_gap.max((e.p_pr - prp_closed_form(&p).p_pr).abs());
                    converged &= e.refinement_delta < 1e-3;
                }
                Err(_) => converged = false,
            }
        }
    }
    println!(
        "C3 report: max |exact - closed| over the distance sweep = {worst_gap:.4} (no bound claimed)"
    );
    gate(
        "C3 quadrature refinement delta < 1e-3 across the distance sweep",
        converged,
        &format!("worst delta {worst_delta:.2e}"),
    );
}

#[test]
fn c4_protected_range_ratio() {
    let leg = protected_range(&FreeFlowParams::legacy(1.0, 200.0));
    let pre = protected_range(&FreeFlowParams::preamble(1.0, 200.0));
    let ratio = pre / leg;
    let want = 10f64.powf(33.8 / 40.0);
    let quoted = 390.0 / 55.0;
    gate(
        "C4 protected-range ratio = 10^(33.8/40) within 0.1% and 390/55 within 2%",
        (ratio / want - 1.0).abs() <= 0.001 && (ratio / quoted - 1.0).abs() <= 0.02,
        &format!("ratio {ratio:.6}, want {want:.6}, quoted {quoted:.4}"),
    );
}

#[test]
fn c5_preamble_dominates_and_gap_shrinks_with_distance() {
    let mut ordered = true;
    for du in (1..=50).map(|k| 10.0 * k as f64) {
        let leg = prp_closed_form(&FreeFlowParams::legacy(1.0, du)).p_pr;
        let pre = prp_closed_form(&FreeFlowParams::preamble(1.0, du)).p_pr;
        ordered &= pre >= leg - 1e-12;
    }
    for i in 0..=24 {
        let lambda = 10f64.powf(-1.0 + 2.0 * i as f64 / 24.0);
        let leg = prp_closed_form(&FreeFlowParams::legacy(lambda, 200.0)).p_pr;
        let pre = prp_closed_form(&FreeFlowParams::preamble(lambda, 200.0)).p_pr;
        ordered &= pre >= leg - 1e-12;
    }
    let gap = |du: f64| {
        prp_closed_form(&FreeFlowParams::preamble(1.0, du)).p_pr
            - prp_closed_form(&FreeFlowParams::legacy(1.0, du)).p_pr
    };
    let (g100, g300) = (gap(100.0), gap(300.0));
    gate(
        "C5 preamble PRP >= legacy on both sweeps; gap(100 m) > gap(300 m)",
        ordered && g100 > g300,
        &format!("gap(100) {g100:.4}, gap(300) {g300:.4}"),
    );
}

#[test]
fn c6_preamble_is_negligible_for_lte_only_prr() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for density in [100.0, 200.0] {
        let with = pooled_prr(&run3(CoexistenceMode::OnlyLte, density), Tech::Lte);
        let without = pooled_prr(&run3(CoexistenceMode::OnlyLteNoPreamble, density), Tech::Lte);
        for (bin, p) in &with {
            if *bin >= 400 {
                continue;
            }
            if let Some(q) = without.get(bin) {
                worst = worst.max((p - q).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    gate(
        "C6 LTE-only PRR shift from the preamble < 0.02 per 10 m bin (100 & 200 v/km), < 10 min",
        worst < 0.02 && elapsed.as_secs_f64() < 600.0,
        &format!("worst per-bin delta {worst:.4}, elapsed {elapsed:?}"),
    );
}

#[test]
fn c7_aggregate_table_cells() {
    let tol = |x: f64, want: f64| (x / want - 1.0).abs() <= 0.15;

    let only11p = run3(CoexistenceMode::Only11p, 50.0);
    let msgs = mean_aggregate(&only11p, Tech::Dot11p, |a| a.msgs_per_s);
    let cbr = mean_aggregate(&only11p, Tech::Dot11p, |a| a.cbr);
    gate(
        "C7a only-11p @50: msgs/s ~= 4.87, CBR ~= 0.055 (±15%)",
        tol(msgs, 4.87) && tol(cbr, 0.055),
        &format!("msgs {msgs:.3}, cbr {cbr:.4}"),
    );

    let legacy = run3(CoexistenceMode::Legacy, 50.0);
    let cbr = mean_aggregate(&legacy, Tech::Dot11p, |a| a.cbr);
    gate(
        "C7b legacy @50+50: 802.11p CBR ~= 0.192 (±15%)",
        tol(cbr, 0.192),
        &format!("cbr {cbr:.4}"),
    );

    let pre150 = run3(CoexistenceMode::Preamble, 150.0);
    let msgs = mean_aggregate(&pre150, Tech::Dot11p, |a| a.msgs_per_s);
    gate(
        "C7c preamble @150+150: 802.11p msgs/s < 3.0",
        msgs < 3.0,
        &format!("msgs {msgs:.3}"),
    );

    for density in [50.0, 100.0, 150.0] {
        let noharq = run3(CoexistenceMode::PreambleNoHarq, density);
        let exact = noharq.iter().all(|r| {
            r.aggregates
                .iter()
                .any(|a| a.tech == Tech::Lte && a.ntx == 1.0)
        });
        gate(
            &format!("C7d no-HARQ @{density:.0}: LTE Ntx = 1 exactly"),
            exact,
            "a retransmission slipped through",
        );
    }

    let modcc = run3(CoexistenceMode::PreambleModCc, 150.0);
    let ntx = mean_aggregate(&modcc, Tech::Lte, |a| a.ntx);
    let msgs = mean_aggregate(&modcc, Tech::Dot11p, |a| a.msgs_per_s);
    gate(
        "C7e modified-CC @150+150: LTE Ntx ~= 1.02 (±0.1) and 802.11p msgs/s > 4.5",
        (ntx - 1.02).abs() <= 0.1 && msgs > 4.5,
        &format!("ntx {ntx:.3}, msgs {msgs:.3}"),
    );
}

#[test]
fn c8_congestion_control_formulas_exact() {
    let dcc = dcc_interval(0.1, 0.5) == 0.1
        && dcc_interval(0.1, 0.62) == 0.1
        && dcc_interval(0.1, 0.7) == 1.0;
    let std = cr_limit(0.2, CcVariant::Standard) == None
        && cr_limit(0.5, CcVariant::Standard) == Some(0.03)
        && cr_limit(0.7, CcVariant::Standard) == Some(0.006)
        && cr_limit(0.9, CcVariant::Standard) == Some(0.003);
    let halved = cr_limit(0.1, CcVariant::Modified) == None
        && cr_limit(0.25, CcVariant::Modified) == Some(0.015)
        && cr_limit(0.35, CcVariant::Modified) == Some(0.003)
        && cr_limit(0.45, CcVariant::Modified) == Some(0.0015);
    gate(
        "C8 DCC triple {0.5,0.62,0.7} -> {0.1,0.1,1.0} and CR brackets exact",
        dcc && std && halved,
        "a congestion-control formula drifted",
    );
}

#[test]
fn c9_periodic_traffic_has_the_largest_data_age() {
    let quantile = |mode| {
        let mut records: Vec<f64> = run3(mode, 50.0)
            .iter()
            .flat_map(|r| {
                r.da_records
                    .iter()
                    .filter(|(t, _)| *t == Tech::Dot11p)
                    .flat_map(|(_, recs)| recs.iter().copied())
            })
            .collect();
        records.sort_by(f64::total_cmp);
        da_ccdf_quantile(&records, 0.001).expect("da records").0
    };
    let periodic = quantile(CoexistenceMode::LegacyPeriodic);
    let preamble = quantile(CoexistenceMode::Preamble);
    gate(
        "C9 0.001-CCDF data age @50+50: legacy-periodic > preamble",
        periodic > preamble,
        &format!("periodic {periodic:.3} s, preamble {preamble:.3} s"),
    );
}

#[test]
fn c10_byte_identical_outputs() {
    let bin = env!("CARGO_BIN_EXE_coexsim");
    let base = std::env::temp_dir().join("coexsim_acceptance_c10");
    let _ = std::fs::remove_dir_all(&base);

    let sim_args = |out: &Path, workers: &str| {
        vec![
            "custom".into(),
            "--duration".into(),
            "4".into(),
            "--density".into(),
            "30".into(),
            "--mode".into(),
            "preamble".into(),
            "--seed".into(),
            "1".into(),
            "--seed".into(),
            "2".into(),
            "--workers".into(),
            workers.to_owned(),
            "--out".into(),
            out.display().to_string(),
        ]
    };
    let ana_args = |out: &Path| {
        vec![
            "fig4b".into(),
            "--trials".into(),
            "20000".into(),
            "--out".into(),
            out.display().to_string(),
        ]
    };
    let invoke = |args: Vec<String>| {
        let status = Command::new(bin).args(&args).status().expect("spawn coexsim");
        assert!(status.success(), "coexsim {args:?} failed");
    };

    let dirs: Vec<_> = ["a", "b", "w4", "ana1", "ana2"].iter().map(|d| base.join(d)).collect();
    invoke(sim_args(&dirs[0], "1"));
    invoke(sim_args(&dirs[1], "1"));
    invoke(sim_args(&dirs[2], "4"));
    invoke(ana_args(&dirs[3]));
    invoke(ana_args(&dirs[4]));

    let mut identical = true;
    let mut detail = String::new();
    for (da, db) in [(&dirs[0], &dirs[1]), (&dirs[0], &dirs[2]), (&dirs[3], &dirs[4])] {
        for entry in std::fs::read_dir(da).expect("read dir") {
            let name = entry.expect("entry").file_name();
            if !name.to_string_lossy().ends_with(".csv") {
                continue;
            }
            let a = std::fs::read(da.join(&name)).expect("read a");
            let b = std::fs::read(db.join(&name)).expect("read b");
            if a != b {
                identical = false;
                detail.push_str(&format!("{} differs between {} and {}; ", name.to_string_lossy(), da.display(), db.display()));
            }
        }
    }
    gate(
        "C10 CSV payloads byte-identical across invocations and worker counts",
        identical,
        &detail,
    );
    let _ = std::fs::remove_dir_all(&base);
}
