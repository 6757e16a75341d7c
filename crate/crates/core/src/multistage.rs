//! Cascades of CSVAC stages whose gains multiply to a target gain: total
//! power, optimal gain allocation and stage-count selection.
//!
//! Optimization runs in log-gain coordinates `x_λ = ln G_λ ≥ 0` with
//! `Σ x_λ = ln G`. Each stage's log power is a sum of exponentials of
//! linear forms in `x`, so total power is convex there.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::powerfit::{evaluate_power, PowerFit};
use crate::roots::find_root;

/// Largest stage count the stage-count search will consider.
pub const MAX_STAGES: usize = 64;
/// Relative improvement a larger cascade must achieve to be preferred.
pub const DEFAULT_IMPROVEMENT_TOLERANCE: f64 = 1e-9;
/// Projected stationarity residual (log-gradient units) accepted at the optimum.
pub const STATIONARITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultistageError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("gain optimization did not reach stationarity (residual {residual:e} after {updates} pair updates)")]
    NotStationary { residual: f64, updates: usize },
    #[error("no beneficial gain exists for gain coefficient {0}")]
    NoThreshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultistagePlan {
    pub k: usize,
    pub gains: Vec<f64>,
    pub a_in: f64,
    pub total_gain: f64,
    pub per_stage_power: Vec<f64>,
    pub total_power: f64,
    pub savings_vs_single: f64,
    pub fit_source: String,
}

fn check_inputs(a_in: f64, total_gain: f64, k: usize) -> Result<(), MultistageError> {
    if !a_in.is_finite() || a_in < 0.0 {
        return Err(MultistageError::InvalidInput(format!("a_in must be finite and ≥ 0, got {a_in}")));
    }
    if !total_gain.is_finite() || total_gain < 1.0 {
        return Err(MultistageError::InvalidInput(format!("total gain must be finite and ≥ 1, got {total_gain}")));
    }
    if k == 0 || k > MAX_STAGES {
        return Err(MultistageError::InvalidInput(format!("stage count must be in 1..={MAX_STAGES}, got {k}")));
    }
    Ok(())
}

/// Evaluates a cascade: stage λ sees amplitude `a_in·∏_{j<λ} G_j` and
/// applies gain `G_λ`.
pub fn total_power(fit: &PowerFit, a_in: f64, gains: &[f64]) -> Result<MultistagePlan, MultistageError> {
    if gains.is_empty() {
        return Err(MultistageError::InvalidInput("at least one stage gain is required".into()));
    }
    if let Some(g) = gains.iter().find(|g| !g.is_finite() || **g < 1.0) {
        return Err(MultistageError::InvalidInput(format!("stage gains must be ≥ 1, got {g}")));
    }
    let total_gain: f64 = gains.iter().product();
    check_inputs(a_in, total_gain, gains.len())?;
    Ok(plan_from_gains(fit, a_in, total_gain, gains.to_vec()))
}

fn plan_from_gains(fit: &PowerFit, a_in: f64, total_gain: f64, gains: Vec<f64>) -> MultistagePlan {
    let mut amp = a_in;
    let per_stage_power: Vec<f64> = gains
        .iter()
        .map(|&g| {
            let p = evaluate_power(fit, amp, g);
            amp *= g;
            p
        })
        .collect();
    let total: f64 = per_stage_power.iter().sum();
    MultistagePlan {
        k: gains.len(),
        gains,
        a_in,
        total_gain,
        per_stage_power,
        total_power: total,
        savings_vs_single: 1.0 - total / evaluate_power(fit, a_in, total_gain),
        fit_source: fit.source.clone(),
    }
}

/// Log-power of a cascade given log-gains, with its gradient in the
/// unconstrained log-gain coordinates.
struct LogPower<'a> {
    fit: &'a PowerFit,
    a_in: f64,
}

impl LogPower<'_> {
    fn exponents(&self, x: &[f64]) -> Vec<f64> {
        let mut s: f64 = 0.0;
        x.iter()
            .map(|&xl| {
                let e = self.fit.a + self.fit.b * self.a_in * s.exp() + self.fit.c * xl.exp();
                s += xl;
                e
            })
            .collect()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let e = self.exponents(x);
        let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = e.iter().map(|v| (v - m).exp()).collect();
        let norm: f64 = w.iter().sum();
        let k = x.len();
        // Amplitude term of stage λ, weighted: w_λ·b·A·exp(s_λ).
        let mut s = 0.0;
        let amp_terms: Vec<f64> = (0..k)
            .map(|l| {
                let t = w[l] * self.fit.b * self.a_in * f64::exp(s);
                s += x[l];
                t
            })
            .collect();
        let mut tail = 0.0;
        let mut g = vec![0.0; k];
        for j in (0..k).rev() {
            g[j] = (w[j] * self.fit.c * x[j].exp() + tail) / norm;
            tail += amp_terms[j];
        }
        g
    }

    /// Stages (raise, lower) forming the most violating feasible pair: moving
    /// log-gain from `lower` to `raise` decreases power at rate `violation`.
    fn worst_pair(&self, x: &[f64]) -> (usize, usize, f64) {
        let g = self.gradient(x);
        let raise = (0..x.len()).min_by(|&a, &b| g[a].total_cmp(&g[b])).unwrap_or(0);
        let lower = (0..x.len()).filter(|&j| x[j] > 0.0).max_by(|&a, &b| g[a].total_cmp(&g[b]));
        match lower {
            Some(l) if l != raise => (raise, l, g[l] - g[raise]),
            _ => (raise, raise, 0.0),
        }
    }

    /// Largest violation of the first-order conditions on the constraint set.
    fn projected_residual(&self, x: &[f64]) -> f64 {
        self.worst_pair(x).2
    }
}

/// Minimizes total power over stage gains with `∏ G_λ = total_gain` and
/// every `G_λ ≥ 1`.
pub fn optimize_gains(fit: &PowerFit, a_in: f64, total_gain: f64, k: usize) -> Result<MultistagePlan, MultistageError> {
    check_inputs(a_in, total_gain, k)?;
    let log_g = total_gain.ln();
    if k == 1 || log_g == 0.0 {
        return Ok(plan_from_gains(fit, a_in, total_gain, vec![total_gain.powf(1.0 / k as f64); k]));
    }
    let f = LogPower { fit, a_in };
    let mut x = vec![log_g / k as f64; k];
    const MAX_UPDATES: usize = 200_000;
    let mut updates = 0;
    while updates < MAX_UPDATES {
        let (i, j, violation) = f.worst_pair(&x);
        if violation <= 0.1 * STATIONARITY_TOLERANCE {
            break;
        }
        updates += 1;
        // Exact line search moving log-gain between stages i and j.
        let budget = x[i] + x[j];
        let slope = |t: f64| {
            let mut y = x.clone();
            y[i] = t;
            y[j] = budget - t;
            let g = f.gradient(&y);
            g[i] - g[j]
        };
        let t = if slope(budget) <= 0.0 {
            budget
        } else {
            match find_root(slope, x[i], budget, 0.0) {
                Ok(r) => r.x,
                Err(_) => break,
            }
        };
        if t == x[i] {
            break;
        }
        x[i] = t;
        x[j] = (budget - t).max(0.0);
    }
    let residual = f.projected_residual(&x);
    if residual > STATIONARITY_TOLERANCE {
        return Err(MultistageError::NotStationary { residual, updates });
    }
    // Restore the exact product constraint on the last stage.
    let mut gains: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let head: f64 = gains[..k - 1].iter().product();
    gains[k - 1] = (total_gain / head).max(1.0);
    Ok(plan_from_gains(fit, a_in, total_gain, gains))
}

/// Derivative of the two-stage log-power with respect to the first-stage
/// gain. Zero at an interior optimum; negative where raising `g1` helps.
pub fn two_stage_stationarity_residual(fit: &PowerFit, a_in: f64, total_gain: f64, g1: f64) -> f64 {
    let g2 = total_gain / g1;
    let e1 = fit.a + fit.b * a_in + fit.c * g1;
    let e2 = fit.a + fit.b * a_in * g1 + fit.c * g2;
    let m = e1.max(e2);
    let (w1, w2) = ((e1 - m).exp(), (e2 - m).exp());
    (w1 * fit.c + w2 * (fit.b * a_in - fit.c * total_gain / (g1 * g1))) / (w1 + w2)
}

fn threshold_by_bisection(h: impl Fn(f64) -> f64, c: f64) -> Result<f64, MultistageError> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(MultistageError::NoThreshold(c));
    }
    // h > 0 means the larger cascade is not yet beneficial.
    let mut hi = 2.0;
    while h(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(MultistageError::NoThreshold(c));
        }
    }
    if h(1.0) <= 0.0 {
        return Ok(1.0);
    }
    find_root(h, 1.0, hi, 0.0).map(|r| r.x).map_err(|_| MultistageError::NoThreshold(c))
}

/// Smallest total gain at which, for vanishing input amplitude, K equal
/// stages beat the (K−1)-stage cascade obtained by merging two of them.
/// The per-stage threshold g solves `g² − g = ln2/c`, so the result is `g^K`.
pub fn min_beneficial_gain(fit: &PowerFit, k: usize) -> Result<f64, MultistageError> {
    if k < 2 {
        return Err(MultistageError::InvalidInput(format!("stage count must be ≥ 2, got {k}")));
    }
    let c = fit.c;
    let kf = k as f64;
    threshold_by_bisection(
        |g: f64| {
            let per = g.powf(1.0 / kf);
            std::f64::consts::LN_2 + c * per - c * per * per
        },
        c,
    )
}

/// Smallest total gain at which, for vanishing input amplitude, the optimal
/// K-stage cascade beats the optimal (K−1)-stage cascade.
pub fn min_beneficial_gain_vs_optimal(fit: &PowerFit, k: usize) -> Result<f64, MultistageError> {
    if k < 2 {
        return Err(MultistageError::InvalidInput(format!("stage count must be ≥ 2, got {k}")));
    }
    let c = fit.c;
    let (kf, km) = (k as f64, (k - 1) as f64);
    threshold_by_bisection(|g: f64| kf.ln() + c * g.powf(1.0 / kf) - km.ln() - c * g.powf(1.0 / km), c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scheme1Options {
    pub improvement_tolerance: f64,
    pub max_stages: usize,
}

impl Default for Scheme1Options {
    fn default() -> Self {
        Self { improvement_tolerance: DEFAULT_IMPROVEMENT_TOLERANCE, max_stages: MAX_STAGES }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scheme1Outcome {
    pub plan: MultistagePlan,
    /// Optimal total power for K = 1, 2, … as evaluated by the search.
    pub history: Vec<f64>,
    /// True when the search stopped at the stage cap while still improving.
    pub capped: bool,
}

fn improves(candidate: f64, incumbent: f64, tol: f64) -> bool {
    candidate < incumbent * (1.0 - tol)
}

/// Stage-count selection: grow the cascade while the optimal K-stage power
/// strictly improves on the optimal (K−1)-stage power.
pub fn scheme1(fit: &PowerFit, a_in: f64, total_gain: f64) -> Result<MultistagePlan, MultistageError> {
    scheme1_with(fit, a_in, total_gain, &Scheme1Options::default()).map(|o| o.plan)
}

pub fn scheme1_with(
    fit: &PowerFit,
    a_in: f64,
    total_gain: f64,
    opts: &Scheme1Options,
) -> Result<Scheme1Outcome, MultistageError> {
    check_inputs(a_in, total_gain, 1)?;
    if !(opts.improvement_tolerance >= 0.0) || opts.max_stages == 0 || opts.max_stages > MAX_STAGES {
        return Err(MultistageError::InvalidInput("invalid stage search options".into()));
    }
    let mut best = optimize_gains(fit, a_in, total_gain, 1)?;
    let mut history = vec![best.total_power];
    let mut capped = false;
    for k in 2..=opts.max_stages + 1 {
        if k > opts.max_stages {
            capped = true;
            break;
        }
        let cand = optimize_gains(fit, a_in, total_gain, k)?;
        history.push(cand.total_power);
        if !improves(cand.total_power, best.total_power, opts.improvement_tolerance) {
            break;
        }
        best = cand;
    }
    debug_assert!(history[..best.k].windows(2).all(|w| w[1] <= w[0]));
    Ok(Scheme1Outcome { plan: best, history, capped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMapCell {
    pub a_in: f64,
    pub gain: f64,
    pub k_opt: usize,
    pub total_power: f64,
    pub savings_vs_single: f64,
}

/// Runs the stage-count search on every (amplitude, gain) cell, using fully
/// optimized stage gains. Rows are ordered amplitude-major.
pub fn optimal_stage_map(fit: &PowerFit, a_grid: &[f64], g_grid: &[f64]) -> Result<Vec<StageMapCell>, MultistageError> {
    optimal_stage_map_with(fit, a_grid, g_grid, &Scheme1Options::default())
}

pub fn optimal_stage_map_with(
    fit: &PowerFit,
    a_grid: &[f64],
    g_grid: &[f64],
    opts: &Scheme1Options,
) -> Result<Vec<StageMapCell>, MultistageError> {
    if a_grid.is_empty() || g_grid.is_empty() {
        return Err(MultistageError::InvalidInput("amplitude and gain grids must be non-empty".into()));
    }
    let cells: Vec<(f64, f64)> = a_grid.iter().flat_map(|&a| g_grid.iter().map(move |&g| (a, g))).collect();
    cells
        .par_iter()
        .map(|&(a_in, gain)| {
            let p = scheme1_with(fit, a_in, gain, opts)?.plan;
            Ok(StageMapCell {
                a_in,
                gain,
                k_opt: p.k,
                total_power: p.total_power,
                savings_vs_single: p.savings_vs_single,
            })
        })
        .collect()
}

/// Amplitudes whose row of the stage map rises and later falls as gain
/// increases. `cells` must be amplitude-major with gains ascending.
pub fn transition_amplitudes(cells: &[StageMapCell], n_gains: usize) -> Vec<f64> {
    cells
        .chunks(n_gains)
        .filter(|row| {
            let mut peak = 0;
            let mut rose = false;
            row.iter().any(|c| {
                if c.k_opt > peak {
                    rose = peak > 0;
                    peak = c.k_opt;
                    false
                } else {
                    rose && c.k_opt < peak
                }
            })
        })
        .map(|row| row[0].a_in)
        .collect()
}
