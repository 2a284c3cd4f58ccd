//! Independent Monte Carlo oracle for the free-flow reception model.
//!
//! Each trial replays one 802.11p packet against the model's assumptions:
//! nearest-interferer positions drawn per TTI from the 1-D Poisson law, a
//! uniform generation instant, the CSMA defer rule against the protected
//! area, and hard threshold reception. Trials are partitioned into
//! fixed-size chunks, each driven by its own counter-derived ChaCha stream,
//! so the result is bit-identical for a given seed regardless of how many
//! worker threads execute the chunks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FreeFlowParams, LinearKernel};

/// Trials per RNG stream; the unit of parallel work.
const CHUNK_TRIALS: u64 = 65_536;

/// How the straddling trial combines the two TTIs' interference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum McCombining {
    /// The TTI holding the larger share of the packet decides alone — the
    /// quantity the closed form models.
    DominantOverlap,
    /// Overlap-weighted interference sum — the quantity the exact quadrature
    /// models.
    WeightedSum,
}

/// Success counts of one arrival case.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BranchTally {
    pub trials: u64,
    pub successes: u64,
}

impl BranchTally {
    /// Empirical success probability (NaN when the branch never occurred).
    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

/// Monte Carlo estimate with a 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub trials: u64,
    pub successes: u64,
    /// Empirical packet reception probability.
    pub p_pr: f64,
    /// 1.96·sqrt(p(1−p)/n).
    pub half_width_95: f64,
    /// Channel busy at generation (deferred, TTI-aligned start).
    pub defer: BranchTally,
    /// Idle start completing inside the current TTI.
    pub fit: BranchTally,
    /// Idle start straddling the TTI boundary.
    pub straddle: BranchTally,
}

/// Estimate the PRP by simulating `trials` independent packets.
///
/// Reproducible for a fixed `seed` independent of worker threads: chunk `c`
/// draws from stream `c` of a ChaCha generator keyed by `seed`, and the
/// integer tallies are summed.
pub fn prp_monte_carlo(
    params: &FreeFlowParams,
    trials: u64,
    seed: u64,
    combining: McCombining,
) -> McEstimate {
    let kernel = LinearKernel::new(params);

    // Without interferers every in-range packet succeeds; avoid a degenerate
    // exponential draw.
    if kernel.lambda_tti == 0.0 {
        let successes = if kernel.d_i.is_finite() { trials } else { 0 };
        return McEstimate {
            trials,
            successes,
            p_pr: successes as f64 / trials as f64,
            half_width_95: 0.0,
            defer: BranchTally::default(),
            fit: BranchTally { trials, successes },
            straddle: BranchTally::default(),
        };
    }

    let chunks = trials.div_ceil(CHUNK_TRIALS);
    let totals = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let n = CHUNK_TRIALS.min(trials - chunk * CHUNK_TRIALS);
            run_chunk(&kernel, combining, seed, chunk, n)
        })
        .reduce(ChunkTotals::default, ChunkTotals::merge);

    let successes = totals.defer.successes + totals.fit.successes + totals.straddle.successes;
    let p = successes as f64 / trials as f64;
    McEstimate {
        trials,
        successes,
        p_pr: p,
        half_width_95: 1.96 * (p * (1.0 - p) / trials as f64).sqrt(),
        defer: totals.defer,
        fit: totals.fit,
        straddle: totals.straddle,
    }
}

#[derive(Default, Clone, Copy)]
struct ChunkTotals {
    defer: BranchTally,
    fit: BranchTally,
    straddle: BranchTally,
}

impl ChunkTotals {
    fn merge(a: Self, b: Self) -> Self {
        let add = |x: BranchTally, y: BranchTally| BranchTally {
            trials: x.trials + y.trials,
            successes: x.successes + y.successes,
        };
        ChunkTotals {
            defer: add(a.defer, b.defer),
            fit: add(a.fit, b.fit),
            straddle: add(a.straddle, b.straddle),
        }
    }
}

fn run_chunk(
    kernel: &LinearKernel,
    combining: McCombining,
    seed: u64,
    chunk: u64,
    n: u64,
) -> ChunkTotals {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    let mut totals = ChunkTotals::default();
    for _ in 0..n {
        run_trial(kernel, combining, &mut rng, &mut totals);
    }
    totals
}

fn run_trial<R: Rng>(
    kernel: &LinearKernel,
    combining: McCombining,
    rng: &mut R,
    totals: &mut ChunkTotals,
) {
    let clears = |z: f64| z.abs() >= kernel.d_i;
    let x = draw_nearest(rng, kernel.lambda_tti);
    let start = rng.gen::<f64>() * kernel.t_tti_s;

    if x >= kernel.s_lo && x <= kernel.s_hi {
        // Busy: defer until a TTI whose nearest interferer is not sensed,
        // then transmit aligned to its start (full overlap with that TTI).
        let mut y = draw_nearest(rng, kernel.lambda_tti);
        while y >= kernel.s_lo && y <= kernel.s_hi {
            y = draw_nearest(rng, kernel.lambda_tti);
        }
        totals.defer.trials += 1;
        totals.defer.successes += clears(y) as u64;
    } else if start + kernel.t_pck_s <= kernel.t_tti_s {
        // Idle start, packet entirely inside the current TTI.
        totals.fit.trials += 1;
        totals.fit.successes += clears(x) as u64;
    } else {
        // Idle start straddling the boundary: fraction tau of the packet
        // falls into the next TTI with its own interferer.
        let tau = (start + kernel.t_pck_s - kernel.t_tti_s) / kernel.t_pck_s;
        let y = draw_nearest(rng, kernel.lambda_tti);
        let success = match combining {
            McCombining::DominantOverlap => {
                if tau < 0.5 {
                    clears(x)
                } else {
                    clears(y)
                }
            }
            McCombining::WeightedSum => {
                let interference = (1.0 - tau) * kernel.interference_mw(x)
                    + tau * kernel.interference_mw(y);
                kernel.p_r_mw >= kernel.gamma_lin * (kernel.p_n_mw + interference)
            }
        };
        totals.straddle.trials += 1;
        totals.straddle.successes += success as u64;
    }
}

/// Signed position of the nearest point of a 1-D PPP of density `lam`.
fn draw_nearest<R: Rng>(rng: &mut R, lam: f64) -> f64 {
    let u: f64 = rng.gen();
    let magnitude = -(1.0 - u).ln() / (2.0 * lam);
    if rng.gen::<f64>() < 0.5 {
        -magnitude
    } else {
        magnitude
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::FreeFlowParams;

    #[test]
    fn test_reproducible_across_calls() {
        let p = FreeFlowParams::legacy(1.0, 200.0);
        let a = prp_monte_carlo(&p, 100_000, 7, McCombining::DominantOverlap);
        let b = prp_monte_carlo(&p, 100_000, 7, McCombining::DominantOverlap);
        assert_eq!(a.successes, b.successes);
    }
}
