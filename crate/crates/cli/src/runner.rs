//! Experiment execution: parallel fan-out over (point, seed) jobs, ordered
//! collection, CSV/SVG emission and the `--check` gates.

use anyhow::{Context, Result};
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use coexsim_core::analytic::{
    prp_closed_form, prp_exact_numeric, prp_monte_carlo, FreeFlowParams, McCombining,
    QuadratureSpec,
};
use coexsim_core::sim::metrics::{da_ccdf_points, da_ccdf_quantile, MetricsReport, DA_CCDF_LEVEL};
use coexsim_core::sim::{engine, CoexistenceMode, Tech};

use crate::config::{AnalyticPlan, RunConfig, SimPoint, SweepVar};
use crate::output::{
    write_csv, AggregateRow, AnalyticRow, AuditRow, CbrRow, DaRow, PrrRow,
};
use crate::svg::{self, Chart, Series, PALETTE};

/// Everything a finished experiment leaves behind.
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    /// Failed `--check` gates (empty when not checking or all green).
    pub failures: Vec<String>,
}

struct AnalyticPoint {
    preamble_curve: bool,
    row: AnalyticRow,
    audit: AuditRow,
}

struct SimRun {
    point: SimPoint,
    seed: u64,
    report: MetricsReport,
}

pub fn run_experiment(
    cfg: &RunConfig,
    out_dir: &Path,
    workers: usize,
    check: bool,
) -> Result<RunOutcome> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let mut files = Vec::new();

    let metadata_path = out_dir.join("metadata.toml");
    std::fs::write(&metadata_path, cfg.metadata_toml()?)
        .with_context(|| format!("writing {}", metadata_path.display()))?;
    files.push(metadata_path);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building worker pool")?;

    let analytic = match &cfg.analytic {
        Some(plan) => run_analytic(cfg, plan, &pool),
        None => Vec::new(),
    };
    let sim_runs = run_sims(cfg, &pool)?;

    write_analytic_outputs(cfg, &analytic, out_dir, &mut files)?;
    write_sim_outputs(cfg, &sim_runs, out_dir, &mut files)?;

    let failures = if check {
        run_checks(cfg, &analytic, &sim_runs)
    } else {
        Vec::new()
    };
    Ok(RunOutcome { files, failures })
}

// ---------------------------------------------------------------------------
// Analytic sweeps
// ---------------------------------------------------------------------------

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-point Monte Carlo seed: decoupled from job scheduling so results do
/// not depend on the worker count.
fn point_seed(base: u64, curve: bool, index: usize) -> u64 {
    splitmix64(base ^ ((curve as u64) << 32) ^ (index as u64).wrapping_mul(0x9E37_79B9))
}

fn run_analytic(cfg: &RunConfig, plan: &AnalyticPlan, pool: &rayon::ThreadPool) -> Vec<AnalyticPoint> {
    let seed0 = cfg.seeds[0];
    let jobs: Vec<(bool, usize, f64)> = [false, true]
        .into_iter()
        .flat_map(|pre| plan.values.iter().enumerate().map(move |(i, &v)| (pre, i, v)))
        .collect();
    pool.install(|| {
        jobs.par_iter()
            .map(|&(pre, i, v)| analytic_point(cfg, plan, pre, i, v, seed0))
            .collect()
    })
}

fn analytic_point(
    cfg: &RunConfig,
    plan: &AnalyticPlan,
    preamble_curve: bool,
    index: usize,
    value: f64,
    seed0: u64,
) -> AnalyticPoint {
    let (du, lambda) = match plan.sweep {
        SweepVar::LinkDistanceM => (value, plan.fixed),
        SweepVar::LambdaPerMS => (plan.fixed, value),
    };
    let params = if preamble_curve {
        FreeFlowParams::preamble(lambda, du)
    } else {
        FreeFlowParams::legacy(lambda, du)
    };
    let closed = prp_closed_form(&params);
    let (exact_p, delta, tau, y) = match prp_exact_numeric(&params, &QuadratureSpec::default()) {
        Ok(e) => (e.p_pr, e.refinement_delta, e.tau_nodes, e.y_nodes),
        Err(err) => {
            eprintln!("warning: quadrature failed at sweep value {value}: {err}");
            (f64::NAN, f64::NAN, 0, 0)
        }
    };
    let mc = prp_monte_carlo(
        &params,
        plan.mc_trials,
        point_seed(seed0, preamble_curve, index),
        McCombining::DominantOverlap,
    );
    let curve = if preamble_curve { "preamble" } else { "legacy" };
    AnalyticPoint {
        preamble_curve,
        row: AnalyticRow {
            sweep_var: value,
            prp_closed: closed.p_pr,
            prp_exact: exact_p,
            prp_mc: mc.p_pr,
            mc_halfwidth: mc.half_width_95,
            p_busy: closed.p_busy,
            p_pr_busy: closed.p_pr_given_busy,
            p_sq_idle: closed.p_sq_idle,
            p_pr_unpr: closed.p_pr_unprotected,
            preset: cfg.preset.clone(),
            seed: seed0,
        },
        audit: AuditRow {
            sweep_var: value,
            curve,
            prp_closed: closed.p_pr,
            prp_exact: exact_p,
            abs_gap: (exact_p - closed.p_pr).abs(),
            refinement_delta: delta,
            tau_nodes: tau,
            y_nodes: y,
            preset: cfg.preset.clone(),
            seed: seed0,
        },
    }
}

fn write_analytic_outputs(
    cfg: &RunConfig,
    points: &[AnalyticPoint],
    out_dir: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    let Some(plan) = &cfg.analytic else { return Ok(()) };
    for (pre, name) in [(false, "analytic_legacy.csv"), (true, "analytic_preamble.csv")] {
        let rows: Vec<&AnalyticRow> = points
            .iter()
            .filter(|p| p.preamble_curve == pre)
            .map(|p| &p.row)
            .collect();
        let path = out_dir.join(name);
        write_csv(&path, &rows)?;
        files.push(path);
    }
    let audit: Vec<&AuditRow> = points.iter().map(|p| &p.audit).collect();
    let path = out_dir.join("quadrature_audit.csv");
    write_csv(&path, &audit)?;
    files.push(path);

    // One chart: closed/exact/MC per sensing threshold.
    let (x_label, log_x, file) = match plan.sweep {
        SweepVar::LinkDistanceM => ("link distance d_u (m)", false, "plot_prp_vs_distance.svg"),
        SweepVar::LambdaPerMS => ("density λ (1/(m·s))", true, "plot_prp_vs_lambda.svg"),
    };
    let mut chart = Chart::new("Free-flow packet reception probability", x_label, "PRP");
    chart.x_log = log_x;
    chart.y_range = Some((0.0, 1.0));
    for (pre, tag, color) in [(false, "legacy", PALETTE[0]), (true, "preamble", PALETTE[1])] {
        let pts = |f: &dyn Fn(&AnalyticRow) -> f64| -> Vec<(f64, f64)> {
            points
                .iter()
                .filter(|p| p.preamble_curve == pre)
                .map(|p| (p.row.sweep_var, f(&p.row)))
                .collect()
        };
        chart.series.push(Series::line(format!("{tag} closed"), color, pts(&|r| r.prp_closed)));
        chart.series.push(Series::dashed(format!("{tag} exact"), color, pts(&|r| r.prp_exact)));
        chart.series.push(Series::scatter(format!("{tag} MC"), color, pts(&|r| r.prp_mc)));
    }
    if let Some(svg) = chart.render() {
        let path = out_dir.join(file);
        std::fs::write(&path, svg)?;
        files.push(path);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Simulated points
// ---------------------------------------------------------------------------

fn run_sims(cfg: &RunConfig, pool: &rayon::ThreadPool) -> Result<Vec<SimRun>> {
    let jobs: Vec<(SimPoint, u64)> = cfg
        .sim_points
        .iter()
        .flat_map(|p| cfg.seeds.iter().map(move |&s| (*p, s)))
        .collect();
    let reports: Result<Vec<MetricsReport>, _> = pool.install(|| {
        jobs.par_iter()
            .map(|(point, seed)| engine::run(&point.sim_config(&cfg.sim), *seed))
            .collect()
    });
    let reports = reports.context("running simulation point")?;
    Ok(jobs
        .into_iter()
        .zip(reports)
        .map(|((point, seed), report)| SimRun { point, seed, report })
        .collect())
}

fn write_sim_outputs(
    cfg: &RunConfig,
    runs: &[SimRun],
    out_dir: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    if runs.is_empty() {
        return Ok(());
    }
    let mut prr = Vec::new();
    let mut da = Vec::new();
    let mut agg = Vec::new();
    let mut cbr = Vec::new();
    for run in runs {
        collect_rows(cfg, run, &mut prr, &mut da, &mut agg, &mut cbr);
    }
    let path = out_dir.join("prr.csv");
    write_csv(&path, &prr)?;
    files.push(path);
    let path = out_dir.join("da.csv");
    write_csv(&path, &da)?;
    files.push(path);
    let path = out_dir.join("aggregates.csv");
    write_csv(&path, &agg)?;
    files.push(path);
    let path = out_dir.join("cbr.csv");
    write_csv(&path, &cbr)?;
    files.push(path);

    render_sim_plots(cfg, runs, out_dir, files)?;
    Ok(())
}

fn collect_rows(
    cfg: &RunConfig,
    run: &SimRun,
    prr: &mut Vec<PrrRow>,
    da: &mut Vec<DaRow>,
    agg: &mut Vec<AggregateRow>,
    cbr: &mut Vec<CbrRow>,
) {
    let mode = run.point.mode.label();
    let density = run.point.label_density();
    for bin in &run.report.prr {
        if bin.n_samples == 0 {
            continue;
        }
        prr.push(PrrRow {
            bin_low_m: bin.bin_low_m,
            bin_high_m: bin.bin_high_m,
            tech: bin.tech.label(),
            mode,
            density,
            seed: run.seed,
            prr: bin.prr,
            n_samples: bin.n_samples,
            preset: cfg.preset.clone(),
        });
    }
    for (tech, records) in &run.report.da_records {
        for (da_s, ccdf) in da_ccdf_points(records, 400) {
            da.push(DaRow {
                da_s,
                ccdf,
                tech: tech.label(),
                mode,
                density,
                seed: run.seed,
                preset: cfg.preset.clone(),
            });
        }
    }
    for a in &run.report.aggregates {
        agg.push(AggregateRow {
            mode,
            density,
            tech: a.tech.label(),
            msgs_per_s: a.msgs_per_s,
            cbr: a.cbr,
            ntx: a.ntx,
            seed: run.seed,
            preset: cfg.preset.clone(),
        });
    }
    // The per-station series is decimated to one station-mean row per window.
    let mut windows: BTreeMap<(i64, u8), (f64, u64)> = BTreeMap::new();
    for s in &run.report.cbr_series {
        let key = ((s.window_end_s * 1000.0).round() as i64, s.tech as u8);
        let e = windows.entry(key).or_insert((0.0, 0));
        e.0 += s.cbr;
        e.1 += 1;
    }
    for ((ms, tech_idx), (sum, n)) in windows {
        let tech = if tech_idx == 0 { Tech::Dot11p } else { Tech::Lte };
        cbr.push(CbrRow {
            window_end_s: ms as f64 / 1000.0,
            tech: tech.label(),
            mode,
            density,
            seed: run.seed,
            cbr_mean: sum / n as f64,
            n_stations: n,
            preset: cfg.preset.clone(),
        });
    }
}

// ---------------------------------------------------------------------------
// Plot assembly
// ---------------------------------------------------------------------------

/// Pooled PRR per bin across seeds of one point: Σdecoded / Σcandidates.
fn pooled_prr(runs: &[SimRun], point_idx: usize, points: &[SimPoint], tech: Tech) -> Vec<(f64, f64)> {
    let point = &points[point_idx];
    let mut acc: Vec<(f64, f64, f64)> = Vec::new(); // (bin_mid, decoded, candidates)
    for run in runs.iter().filter(|r| same_point(&r.point, point)) {
        for bin in run.report.prr.iter().filter(|b| b.tech == tech && b.n_samples > 0) {
            let mid = (bin.bin_low_m + bin.bin_high_m) / 2.0;
            let decoded = bin.prr * bin.n_samples as f64;
            if let Some(e) = acc.iter_mut().find(|e| e.0 == mid) {
                e.1 += decoded;
                e.2 += bin.n_samples as f64;
            } else {
                acc.push((mid, decoded, bin.n_samples as f64));
            }
        }
    }
    acc.sort_by(|a, b| a.0.total_cmp(&b.0));
    acc.into_iter().map(|(mid, d, c)| (mid, d / c)).collect()
}

fn pooled_da_ccdf(runs: &[SimRun], point: &SimPoint, tech: Tech) -> Vec<(f64, f64)> {
    let mut records: Vec<f64> = Vec::new();
    for run in runs.iter().filter(|r| same_point(&r.point, point)) {
        for (t, recs) in &run.report.da_records {
            if *t == tech {
                records.extend_from_slice(recs);
            }
        }
    }
    records.sort_by(f64::total_cmp);
    da_ccdf_points(&records, 400)
}

fn same_point(a: &SimPoint, b: &SimPoint) -> bool {
    a.mode == b.mode
        && a.density_11p_per_km == b.density_11p_per_km
        && a.density_lte_per_km == b.density_lte_per_km
}

fn series_label(cfg: &RunConfig, point: &SimPoint) -> String {
    let multi_density: BTreeSet<u64> = cfg
        .sim_points
        .iter()
        .map(|p| p.label_density() as u64)
        .collect();
    if multi_density.len() > 1 {
        format!("{} {} v/km", point.mode.label(), point.label_density())
    } else {
        point.mode.label().to_owned()
    }
}

fn render_sim_plots(
    cfg: &RunConfig,
    runs: &[SimRun],
    out_dir: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    for tech in [Tech::Dot11p, Tech::Lte] {
        // PRR vs distance.
        let mut chart = Chart::new(
            format!("Packet reception ratio — {}", tech.label()),
            "distance (m)",
            "PRR",
        );
        chart.y_range = Some((0.0, 1.0));
        for (i, point) in cfg.sim_points.iter().enumerate() {
            let pts = pooled_prr(runs, i, &cfg.sim_points, tech);
            if pts.is_empty() {
                continue;
            }
            chart
                .series
                .push(Series::line(series_label(cfg, point), PALETTE[i % PALETTE.len()], pts));
        }
        if let Some(svg) = chart.render() {
            let path = out_dir.join(format!("plot_prr_{}.svg", tech.label()));
            std::fs::write(&path, svg)?;
            files.push(path);
        } else {
            eprintln!("note: no PRR series for {} — plot skipped", tech.label());
        }

        // Data-age CCDF, log-probability axis down to 1e-4.
        let mut chart = Chart::new(
            format!("Data age CCDF — {}", tech.label()),
            "data age (s)",
            "P(DA > x)",
        );
        chart.y_log = true;
        chart.y_range = Some((1e-4, 1.0));
        for (i, point) in cfg.sim_points.iter().enumerate() {
            let pts = pooled_da_ccdf(runs, point, tech);
            if pts.is_empty() {
                continue;
            }
            chart
                .series
                .push(Series::line(series_label(cfg, point), PALETTE[i % PALETTE.len()], pts));
        }
        if let Some(svg) = chart.render() {
            let path = out_dir.join(format!("plot_da_ccdf_{}.svg", tech.label()));
            std::fs::write(&path, svg)?;
            files.push(path);
        }
    }

    // Aggregate bars when the preset sweeps density.
    let densities: BTreeSet<u64> = cfg.sim_points.iter().map(|p| p.label_density() as u64).collect();
    if densities.len() > 1 {
        let modes: Vec<CoexistenceMode> = {
            let mut seen = Vec::new();
            for p in &cfg.sim_points {
                if !seen.contains(&p.mode) {
                    seen.push(p.mode);
                }
            }
            seen
        };
        let group_labels: Vec<String> = densities.iter().map(|d| format!("{d} v/km")).collect();
        for tech in [Tech::Dot11p, Tech::Lte] {
            for (metric, y_label) in [("msgs", "messages / s"), ("cbr", "CBR"), ("ntx", "tx copies / message")] {
                let series: Vec<(String, Vec<f64>)> = modes
                    .iter()
                    .filter_map(|mode| {
                        let values: Vec<f64> = densities
                            .iter()
                            .map(|&d| mean_aggregate(runs, *mode, d as f64, tech, metric))
                            .collect();
                        if values.iter().all(|v| v.is_nan()) {
                            None
                        } else {
                            Some((mode.label().to_owned(), values))
                        }
                    })
                    .collect();
                if let Some(svg) = svg::grouped_bars(
                    &format!("{y_label} — {}", tech.label()),
                    y_label,
                    &group_labels,
                    &series,
                ) {
                    let path = out_dir.join(format!("plot_{metric}_{}.svg", tech.label()));
                    std::fs::write(&path, svg)?;
                    files.push(path);
                }
            }
        }
    }
    Ok(())
}

fn mean_aggregate(runs: &[SimRun], mode: CoexistenceMode, density: f64, tech: Tech, metric: &str) -> f64 {
    let mut sum = 0.0;
    let mut n = 0u32;
    for run in runs {
        if run.point.mode != mode || run.point.label_density() != density {
            continue;
        }
        for a in &run.report.aggregates {
            if a.tech == tech {
                sum += match metric {
                    "msgs" => a.msgs_per_s,
                    "cbr" => a.cbr,
                    _ => a.ntx,
                };
                n += 1;
            }
        }
    }
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

// ---------------------------------------------------------------------------
// --check gates
// ---------------------------------------------------------------------------

fn run_checks(cfg: &RunConfig, analytic: &[AnalyticPoint], runs: &[SimRun]) -> Vec<String> {
    let mut failures = Vec::new();
    let mut gate = |name: String, pass: bool| {
        println!("CHECK {name}: {}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failures.push(name);
        }
    };

    if !analytic.is_empty() {
        let worst_mc = analytic
            .iter()
            .map(|p| (p.row.prp_closed - p.row.prp_mc).abs())
            .fold(0.0f64, f64::max);
        gate(
            format!("closed form vs Monte Carlo within 0.05 (worst {worst_mc:.4})"),
            worst_mc <= 0.05,
        );
        let converged = analytic
            .iter()
            .all(|p| p.audit.refinement_delta.is_finite() && p.audit.refinement_delta < 1e-3);
        gate("quadrature refinement converged (< 1e-3)".into(), converged);
    }

    if cfg.preset == "fig5" {
        let mut worst = 0.0f64;
        for density in [100.0, 200.0] {
            let with = pooled_prr_by(runs, CoexistenceMode::OnlyLte, density, Tech::Lte);
            let without = pooled_prr_by(runs, CoexistenceMode::OnlyLteNoPreamble, density, Tech::Lte);
            for (mid, p_with) in &with {
                if *mid > 400.0 {
                    continue;
                }
                if let Some((_, p_without)) = without.iter().find(|(m, _)| m == mid) {
                    worst = worst.max((p_with - p_without).abs());
                }
            }
        }
        gate(
            format!("preamble impact on LTE PRR < 0.02 per bin (worst {worst:.4})"),
            worst < 0.02,
        );
    }

    if cfg.preset == "fig6" {
        let q = |mode| {
            let mut records: Vec<f64> = Vec::new();
            for run in runs.iter().filter(|r| r.point.mode == mode) {
                for (t, recs) in &run.report.da_records {
                    if *t == Tech::Dot11p {
                        records.extend_from_slice(recs);
                    }
                }
            }
            records.sort_by(f64::total_cmp);
            da_ccdf_quantile(&records, DA_CCDF_LEVEL).map(|(v, _)| v)
        };
        let periodic = q(CoexistenceMode::LegacyPeriodic);
        let preamble = q(CoexistenceMode::Preamble);
        gate(
            format!("0.001-CCDF data age: legacy-periodic {periodic:?} > preamble {preamble:?}"),
            matches!((periodic, preamble), (Some(a), Some(b)) if a > b),
        );
    }

    for run in runs {
        if run.point.mode == CoexistenceMode::PreambleNoHarq {
            let ntx = run
                .report
                .aggregates
                .iter()
                .find(|a| a.tech == Tech::Lte)
                .map(|a| a.ntx);
            gate(
                format!(
                    "no-HARQ Ntx exactly 1 (density {}, seed {}, got {ntx:?})",
                    run.point.label_density(),
                    run.seed
                ),
                ntx == Some(1.0),
            );
        }
        for a in &run.report.aggregates {
            if !((0.0..=1.0).contains(&a.cbr) && a.msgs_per_s >= 0.0 && a.ntx >= 1.0) {
                gate(
                    format!(
                        "aggregate sanity ({} {} seed {})",
                        run.point.mode.label(),
                        a.tech.label(),
                        run.seed
                    ),
                    false,
                );
            }
        }
    }
    failures
}

fn pooled_prr_by(runs: &[SimRun], mode: CoexistenceMode, density: f64, tech: Tech) -> Vec<(f64, f64)> {
    let mut acc: Vec<(f64, f64, f64)> = Vec::new();
    for run in runs {
        if run.point.mode != mode || run.point.label_density() != density {
            continue;
        }
        for bin in run.report.prr.iter().filter(|b| b.tech == tech && b.n_samples > 0) {
            let mid = (bin.bin_low_m + bin.bin_high_m) / 2.0;
            let decoded = bin.prr * bin.n_samples as f64;
            if let Some(e) = acc.iter_mut().find(|e| e.0 == mid) {
                e.1 += decoded;
                e.2 += bin.n_samples as f64;
            } else {
                acc.push((mid, decoded, bin.n_samples as f64));
            }
        }
    }
    acc.sort_by(|a, b| a.0.total_cmp(&b.0));
    acc.into_iter().map(|(m, d, c)| (m, d / c)).collect()
}
