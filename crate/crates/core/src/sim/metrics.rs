//! Metric collection: PRR distance bins, data-age records, CBR series and
//! Table-style aggregates.
//!
//! All counters are gated by the caller on the measurement window; this
//! module only accumulates and summarizes.

use serde::Serialize;
use std::collections::HashMap;

use super::Tech;

/// Width of one PRR distance bin, m.
pub const PRR_BIN_M: f64 = 10.0;

/// Largest distance tracked by the PRR bins, m.
pub const PRR_MAX_M: f64 = 500.0;

/// Distance limit for data-age records, m.
pub const DA_MAX_DISTANCE_M: f64 = 400.0;

/// CCDF level at which the data-age quantile is reported.
pub const DA_CCDF_LEVEL: f64 = 0.001;

const N_BINS: usize = (PRR_MAX_M / PRR_BIN_M) as usize;

// ---------------------------------------------------------------------------
// Report types
// ---------------------------------------------------------------------------

/// One PRR distance bin of one technology.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PrrBin {
    pub bin_low_m: f64,
    pub bin_high_m: f64,
    pub tech: Tech,
    /// Decoded / decodable candidates; NaN when the bin is empty.
    pub prr: f64,
    /// Number of decodable (tx, candidate) samples in the bin.
    pub n_samples: u64,
}

/// Data-age quantile at the 0.001 CCDF level.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DaQuantile {
    pub tech: Tech,
    /// Smallest data age whose CCDF is ≤ 0.001, s.
    pub da_s: f64,
    /// False when fewer than 1/level records back the estimate.
    pub reliable: bool,
}

/// Table-style aggregate of one technology.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Aggregate {
    pub tech: Tech,
    /// Generated messages per station per second.
    pub msgs_per_s: f64,
    /// Mean CBR over stations and windows.
    pub cbr: f64,
    /// Transmitted copies per transmitted message.
    pub ntx: f64,
}

/// One CBR measurement window of one station.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CbrSample {
    pub window_end_s: f64,
    pub station: u32,
    pub tech: Tech,
    pub cbr: f64,
}

/// Everything one simulation run reports.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub prr: Vec<PrrBin>,
    /// Sorted data-age records per technology, s.
    pub da_records: Vec<(Tech, Vec<f64>)>,
    pub da_quantiles: Vec<DaQuantile>,
    pub aggregates: Vec<Aggregate>,
    pub cbr_series: Vec<CbrSample>,
}

// ---------------------------------------------------------------------------
// Collector
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Clone, Copy)]
struct BinTally {
    decoded: u64,
    candidates: u64,
}

#[derive(Debug, Default, Clone, Copy)]
struct TechTally {
    msgs_generated: u64,
    msgs_transmitted: u64,
    copies_transmitted: u64,
    cbr_sum: f64,
    cbr_windows: u64,
}

/// Accumulates per-event observations during a run.
#[derive(Debug)]
pub struct MetricsCollector {
    prr: [Vec<BinTally>; 2],
    tally: [TechTally; 2],
    da: [Vec<f64>; 2],
    /// Generation tick of the last decoded message per directed pair.
    last_decoded_gen: HashMap<(u32, u32), u64>,
    cbr_series: Vec<CbrSample>,
    ticks_per_s: f64,
}

impl MetricsCollector {
    pub fn new(ticks_per_s: f64) -> Self {
        MetricsCollector {
            prr: [vec![BinTally::default(); N_BINS], vec![BinTally::default(); N_BINS]],
            tally: [TechTally::default(); 2],
            da: [Vec::new(), Vec::new()],
            last_decoded_gen: HashMap::new(),
            cbr_series: Vec::new(),
            ticks_per_s,
        }
    }

    pub fn count_generated(&mut self, tech: Tech) {
        self.tally[tech as usize].msgs_generated += 1;
    }

    pub fn count_transmitted_message(&mut self, tech: Tech) {
        self.tally[tech as usize].msgs_transmitted += 1;
    }

    pub fn count_transmitted_copy(&mut self, tech: Tech) {
        self.tally[tech as usize].copies_transmitted += 1;
    }

    pub fn record_cbr(&mut self, sample: CbrSample) {
        let t = &mut self.tally[sample.tech as usize];
        t.cbr_sum += sample.cbr;
        t.cbr_windows += 1;
        self.cbr_series.push(sample);
    }

    /// One finalized (message, candidate) outcome at `distance_m`.
    pub fn record_prr_sample(&mut self, tech: Tech, distance_m: f64, decoded: bool) {
        let bin = (distance_m / PRR_BIN_M) as usize;
        if let Some(tally) = self.prr[tech as usize].get_mut(bin) {
            tally.candidates += 1;
            tally.decoded += decoded as u64;
        }
    }

    /// A message decode by (tx → rx): updates the data-age chain. `in_range`
    /// gates whether the gap is recorded (the chain advances regardless).
    pub fn record_decode(
        &mut self,
        tech: Tech,
        tx: u32,
        rx: u32,
        gen_tick: u64,
        decode_tick: u64,
        in_range: bool,
        in_window: bool,
    ) {
        let prev = self.last_decoded_gen.insert((tx, rx), gen_tick);
        if let (Some(prev_gen), true, true) = (prev, in_range, in_window) {
            self.da[tech as usize].push((decode_tick - prev_gen) as f64 / self.ticks_per_s);
        }
    }

    /// Close the run: sort records and compute the summary tables.
    pub fn into_report(
        mut self,
        stations_per_tech: [usize; 2],
        duration_s: f64,
    ) -> MetricsReport {
        let mut prr = Vec::new();
        let mut da_records = Vec::new();
        let mut da_quantiles = Vec::new();
        let mut aggregates = Vec::new();
        for (t, tech) in [(0, Tech::Dot11p), (1, Tech::Lte)] {
            if stations_per_tech[t] == 0 {
                continue;
            }
            for (i, tally) in self.prr[t].iter().enumerate() {
                prr.push(PrrBin {
                    bin_low_m: i as f64 * PRR_BIN_M,
                    bin_high_m: (i + 1) as f64 * PRR_BIN_M,
                    tech,
                    prr: tally.decoded as f64 / tally.candidates as f64,
                    n_samples: tally.candidates,
                });
            }
            self.da[t].sort_by(|a, b| a.partial_cmp(b).expect("data ages are finite"));
            let records = std::mem::take(&mut self.da[t]);
            if let Some((da_s, reliable)) = da_ccdf_quantile(&records, DA_CCDF_LEVEL) {
                da_quantiles.push(DaQuantile { tech, da_s, reliable });
            }
            da_records.push((tech, records));
            let tally = self.tally[t];
            aggregates.push(Aggregate {
                tech,
                msgs_per_s: tally.msgs_generated as f64
                    / (stations_per_tech[t] as f64 * duration_s),
                cbr: tally.cbr_sum / tally.cbr_windows as f64,
                ntx: tally.copies_transmitted as f64 / tally.msgs_transmitted as f64,
            });
        }
        MetricsReport { prr, da_records, da_quantiles, aggregates, cbr_series: self.cbr_series }
    }
}

// ---------------------------------------------------------------------------
// Data-age CCDF
// ---------------------------------------------------------------------------

/// Smallest record whose empirical CCDF (strictly-greater fraction) is ≤
/// `level`, with a reliability flag requiring at least `1/level` records.
/// `records` must be sorted ascending. `None` when empty.
pub fn da_ccdf_quantile(records: &[f64], level: f64) -> Option<(f64, bool)> {
    let n = records.len();
    if n == 0 {
        return None;
    }
    let reliable = (n as f64) * level >= 1.0;
    for (i, &v) in records.iter().enumerate() {
        let ccdf = (n - i - 1) as f64 / n as f64;
        if ccdf <= level {
            return Some((v, reliable));
        }
    }
    unreachable!("the last record always has CCDF 0")
}

/// Empirical CCDF points (da, P(DA > da)) decimated to at most `max_points`
/// rows, keeping the extremes. `records` must be sorted ascending.
pub fn da_ccdf_points(records: &[f64], max_points: usize) -> Vec<(f64, f64)> {
    let n = records.len();
    if n == 0 {
        return Vec::new();
    }
    let step = n.div_ceil(max_points).max(1);
    let mut points: Vec<(f64, f64)> = (0..n)
        .step_by(step)
        .map(|i| (records[i], (n - i - 1) as f64 / n as f64))
        .collect();
    if points.last().map(|p| p.0) != Some(records[n - 1]) {
        points.push((records[n - 1], 0.0));
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_da_quantile_periodic_stream() {
        // 2000 perfectly periodic 0.2 s gaps: the 0.001 quantile sits on the
        // single step.
        let records = vec![0.2; 2000];
        let (v, reliable) = da_ccdf_quantile(&records, 0.001).unwrap();
        assert_eq!(v, 0.2);
        assert!(reliable);
    }

    #[test]
    fn test_da_quantile_flags_small_samples() {
        let records = vec![0.1, 0.2, 0.3];
        let (v, reliable) = da_ccdf_quantile(&records, 0.001).unwrap();
        assert_eq!(v, 0.3);
        assert!(!reliable);
    }
}
