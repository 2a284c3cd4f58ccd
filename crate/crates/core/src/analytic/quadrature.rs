//! Numerical evaluation of the exact boundary-straddling reception term.
//!
//! The closed form approximates the TTI-straddling case by letting the TTI
//! with the larger overlap dominate. The exact term keeps the overlap
//! fraction τ: the packet succeeds iff
//! `P_R ≥ γ·(P_N + (1−τ)·I(x) + τ·I(y))`, with x the nearest interferer of
//! the current TTI (conditioned outside the protected area, or the packet
//! would not have started) and y the nearest interferer of the next TTI.
//!
//! The triple integral is reduced to two dimensions: for fixed (τ, y) the
//! admissible x-set is `{|x| ≥ x_min} ∖ S`, whose probability under the
//! two-sided nearest-point law has a closed form. The remaining (τ, y)
//! integral uses composite Simpson rules, with the y axis transformed to
//! probability space so the exponential tail needs no special handling.

use serde::{Deserialize, Serialize};

use super::{p_busy, p_pr_given_busy, AnalyticError, FreeFlowParams, LinearKernel};

/// Node counts and stopping rule for [`prp_exact_numeric`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    /// Simpson nodes along the overlap fraction τ (odd, ≥ 3).
    pub tau_nodes: usize,
    /// Simpson nodes along the next-TTI interferer position (odd, ≥ 3).
    pub y_nodes: usize,
    /// Probability mass of the nearest-point law left outside the truncated
    /// integration domain.
    pub tail_mass: f64,
    /// Convergence: successive node-doubling refinements must agree to this.
    pub tolerance: f64,
    /// Refinements attempted before reporting numerical failure.
    pub max_refinements: u32,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            tau_nodes: 65,
            y_nodes: 257,
            tail_mass: 1e-9,
            tolerance: 1e-3,
            max_refinements: 4,
        }
    }
}

/// Result of the exact numerical assembly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactPrp {
    /// Overall packet reception probability.
    pub p_pr: f64,
    /// Exact PRP of the straddling case (the term the closed form
    /// approximates).
    pub p_pr_given_straddle: f64,
    /// Change between the last two refinements.
    pub refinement_delta: f64,
    /// Node counts of the accepted evaluation.
    pub tau_nodes: usize,
    pub y_nodes: usize,
}

/// Evaluate the PRP with the straddling term integrated numerically.
///
/// Assembles the same case decomposition as the closed form, but replaces
/// the dominant-overlap approximation of the straddling term with the exact
/// overlap-weighted threshold integral. Refines by node doubling until two
/// successive evaluations agree within `spec.tolerance`.
pub fn prp_exact_numeric(
    params: &FreeFlowParams,
    spec: &QuadratureSpec,
) -> Result<ExactPrp, AnalyticError> {
    params.validate()?;
    let kernel = LinearKernel::new(params);

    // Degenerate limits where no integration is needed.
    if kernel.d_i.is_infinite() {
        return Ok(ExactPrp {
            p_pr: 0.0,
            p_pr_given_straddle: 0.0,
            refinement_delta: 0.0,
            tau_nodes: spec.tau_nodes,
            y_nodes: spec.y_nodes,
        });
    }
    if kernel.lambda_tti == 0.0 {
        return Ok(ExactPrp {
            p_pr: 1.0,
            p_pr_given_straddle: 1.0,
            refinement_delta: 0.0,
            tau_nodes: spec.tau_nodes,
            y_nodes: spec.y_nodes,
        });
    }

    let mut tau_nodes = spec.tau_nodes.max(3) | 1;
    let mut y_nodes = spec.y_nodes.max(3) | 1;
    let mut previous = assemble(params, &kernel, tau_nodes, y_nodes, spec.tail_mass);
    let mut delta = f64::INFINITY;
    for _ in 0..spec.max_refinements {
        let finer_tau = 2 * tau_nodes - 1;
        let finer_y = 2 * y_nodes - 1;
        let current = assemble(params, &kernel, finer_tau, finer_y, spec.tail_mass);
        delta = (current.0 - previous.0).abs();
        previous = current;
        tau_nodes = finer_tau;
        y_nodes = finer_y;
        if delta < spec.tolerance {
            return Ok(ExactPrp {
                p_pr: previous.0,
                p_pr_given_straddle: previous.1,
                refinement_delta: delta,
                tau_nodes,
                y_nodes,
            });
        }
    }
    Err(AnalyticError::NonConvergence { delta, tolerance: spec.tolerance })
}

/// One full evaluation: returns (p_pr, p_pr_given_straddle).
fn assemble(
    params: &FreeFlowParams,
    kernel: &LinearKernel,
    tau_nodes: usize,
    y_nodes: usize,
    tail_mass: f64,
) -> (f64, f64) {
    let lam = kernel.lambda_tti;
    let d_x_star = (kernel.s_hi - kernel.s_lo) / 2.0;
    let d_u = params.link_distance_m;
    let pb = p_busy(lam, d_x_star, d_u);
    let p_c = (kernel.t_tti_s - kernel.t_pck_s) / kernel.t_tti_s;
    let p_c_idle = (1.0 - pb) * p_c;
    let p_sq_idle = (1.0 - pb) * (1.0 - p_c);
    let p_prb = p_pr_given_busy(lam, d_x_star, d_u, kernel.d_i);
    let p_sq = straddle_integral(kernel, tau_nodes, y_nodes, tail_mass);
    let p_pr = (pb + p_c_idle) * p_prb + p_sq_idle * p_sq;
    (p_pr, p_sq)
}

/// Exact straddling success probability: Simpson over τ ∈ [0,1] (outer) and
/// the next-TTI interferer mass coordinate (inner).
fn straddle_integral(kernel: &LinearKernel, tau_nodes: usize, y_nodes: usize, tail: f64) -> f64 {
    let lam = kernel.lambda_tti;
    // Substitute w = 1 − e^{−2λ|y|}: |y|(w) spreads Simpson nodes in
    // probability space; the truncated tail carries < `tail` mass.
    let w_max = 1.0 - tail;
    let inner = |tau: f64| -> f64 {
        simpson(y_nodes, 0.0, w_max, |w| {
            let y = -(1.0 - w).ln() / (2.0 * lam);
            success_measure(kernel, tau, y)
        })
    };
    simpson(tau_nodes, 0.0, 1.0, inner)
}

/// P(current-TTI interferer admits success | it lies outside the protected
/// area) for a fixed overlap fraction τ and next-TTI interferer at |y|.
fn success_measure(kernel: &LinearKernel, tau: f64, y: f64) -> f64 {
    let p_outside = 1.0 - interval_mass(kernel.lambda_tti, kernel.s_lo, kernel.s_hi);
    if p_outside <= 0.0 {
        return 0.0;
    }
    // Power budget left for the current-TTI interferer.
    let budget_mw =
        kernel.p_r_mw / kernel.gamma_lin - kernel.p_n_mw - tau * kernel.interference_mw(y);
    if budget_mw < 0.0 {
        return 0.0;
    }
    let weight = 1.0 - tau;
    let x_min = if weight <= 0.0 || kernel.interference_mw(1.0) * weight <= budget_mw {
        // The current TTI barely overlaps (or any distance is tolerable).
        0.0
    } else {
        (kernel.k_i_mw * weight / budget_mw).powf(1.0 / kernel.beta)
    };
    (admissible_mass(kernel, x_min) / p_outside).clamp(0.0, 1.0)
}

/// P(|x| ≥ a and x outside the protected interval) under the two-sided
/// nearest-point law.
fn admissible_mass(kernel: &LinearKernel, a: f64) -> f64 {
    let lam = kernel.lambda_tti;
    let survive = (-2.0 * lam * a).exp();
    // Remove the protected interval's share of {|x| ≥ a}.
    let right = interval_mass(lam, kernel.s_lo.max(a), kernel.s_hi);
    let left = interval_mass(lam, kernel.s_lo, kernel.s_hi.min(-a));
    (survive - right - left).max(0.0)
}

/// Probability that the signed nearest-point position falls in [lo, hi].
fn interval_mass(lam: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    nearest_cdf(lam, hi) - nearest_cdf(lam, lo)
}

/// CDF of the signed nearest-point position of a 1-D PPP of density `lam`.
fn nearest_cdf(lam: f64, t: f64) -> f64 {
    if t <= 0.0 {
        0.5 * (2.0 * lam * t).exp()
    } else {
        1.0 - 0.5 * (-2.0 * lam * t).exp()
    }
}

/// Composite Simpson rule with `n` (odd) nodes on [a, b].
fn simpson(n: usize, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = n.max(3) | 1;
    let h = (b - a) / (n - 1) as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n - 1 {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * i as f64);
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_simpson_exact_on_cubic() {
        let v = simpson(5, 0.0, 2.0, |x| x * x * x);
        assert!((v - 4.0).abs() < 1e-12, "Simpson must integrate cubics exactly, got {v}");
    }

    #[test]
    fn test_nearest_cdf_total_mass() {
        let m = interval_mass(0.001, -1e7, 1e7);
        assert!((m - 1.0).abs() < 1e-9);
    }
}
