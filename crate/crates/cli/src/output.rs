//! CSV report tables.
//!
//! Every row carries the preset id and the seed that produced it. Column
//! sets and row order are fixed, so identical configurations produce
//! byte-identical files regardless of worker count.

use anyhow::{Context, Result};
use serde::Serialize;
use std::path::Path;

/// One point of an analytic sweep (one sensing-threshold curve).
#[derive(Debug, Clone, Serialize)]
pub struct AnalyticRow {
    /// Value of the swept variable: d_u in metres or λ in 1/(m·s).
    pub sweep_var: f64,
    pub prp_closed: f64,
    pub prp_exact: f64,
    pub prp_mc: f64,
    pub mc_halfwidth: f64,
    pub p_busy: f64,
    pub p_pr_busy: f64,
    pub p_sq_idle: f64,
    pub p_pr_unpr: f64,
    pub preset: String,
    pub seed: u64,
}

/// Numerical audit of the exact assembly against the closed form.
#[derive(Debug, Clone, Serialize)]
pub struct AuditRow {
    pub sweep_var: f64,
    pub curve: &'static str,
    pub prp_closed: f64,
    pub prp_exact: f64,
    pub abs_gap: f64,
    pub refinement_delta: f64,
    pub tau_nodes: usize,
    pub y_nodes: usize,
    pub preset: String,
    pub seed: u64,
}

/// One PRR distance bin of one run.
#[derive(Debug, Clone, Serialize)]
pub struct PrrRow {
    pub bin_low_m: f64,
    pub bin_high_m: f64,
    pub tech: &'static str,
    pub mode: &'static str,
    /// Per-technology density of the run, vehicles per km.
    pub density: f64,
    pub seed: u64,
    pub prr: f64,
    pub n_samples: u64,
    pub preset: String,
}

/// One decimated point of a data-age CCDF.
#[derive(Debug, Clone, Serialize)]
pub struct DaRow {
    pub da_s: f64,
    pub ccdf: f64,
    pub tech: &'static str,
    pub mode: &'static str,
    pub density: f64,
    pub seed: u64,
    pub preset: String,
}

/// Table-style aggregate of one run and technology.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub mode: &'static str,
    pub density: f64,
    pub tech: &'static str,
    pub msgs_per_s: f64,
    pub cbr: f64,
    pub ntx: f64,
    pub seed: u64,
    pub preset: String,
}

/// Station-mean CBR of one measurement window.
#[derive(Debug, Clone, Serialize)]
pub struct CbrRow {
    pub window_end_s: f64,
    pub tech: &'static str,
    pub mode: &'static str,
    pub density: f64,
    pub seed: u64,
    pub cbr_mean: f64,
    pub n_stations: u64,
    pub preset: String,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush().context("flushing csv")?;
    Ok(())
}
