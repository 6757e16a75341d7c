//! Quasi-static sinusoid response of the CSVAC: gain, cycle-averaged power,
//! gain calibration and the (amplitude, gain) → power map.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_csvac, CircuitError, CsvacConfig};
use crate::roots::find_root;

/// Calibration search range for the escape rate, 1/βħ.
pub const GAMMA_MIN: f64 = 1e-8;
pub const GAMMA_MAX: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformOptions {
    /// Samples per period; a multiple of 4 places samples on both peaks.
    pub period_samples: usize,
    /// Phase offset of the input sinusoid, rad.
    pub phase: f64,
    /// Period of the input in βħ; only labels the time axis.
    pub period: f64,
}

impl Default for WaveformOptions {
    fn default() -> Self {
        Self { period_samples: 16, phase: 0.0, period: 6.0 * PI }
    }
}

impl WaveformOptions {
    pub fn samples(period_samples: usize) -> Self {
        Self { period_samples, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformSample {
    pub tau: f64,
    pub v_in: f64,
    pub v_out: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainMeasurement {
    pub input_amplitude: f64,
    pub output_amplitude: f64,
    pub gain: f64,
    pub average_power: f64,
    pub waveform: Vec<WaveformSample>,
}

/// Solves the steady state at each sample of one input period.
pub fn sample_waveform(
    cfg: &CsvacConfig,
    a_in: f64,
    opts: &WaveformOptions,
) -> Result<Vec<WaveformSample>, CircuitError> {
    if !(a_in >= 0.0) || !a_in.is_finite() {
        return Err(CircuitError::InvalidConfig(format!("input amplitude must be non-negative, got {a_in}")));
    }
    if opts.period_samples < 16 {
        return Err(CircuitError::InvalidConfig(format!(
            "period_samples must be at least 16, got {}",
            opts.period_samples
        )));
    }
    let n = opts.period_samples;
    (0..n)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / n as f64 + opts.phase;
            let v_in = a_in * theta.sin();
            let s =
                solve_csvac(cfg, v_in).map_err(|e| CircuitError::Waveform { phase: theta, message: e.to_string() })?;
            Ok(WaveformSample { tau: opts.period * k as f64 / n as f64, v_in, v_out: s.v_out, power: s.power.total })
        })
        .collect()
}

pub fn measure_gain(cfg: &CsvacConfig, a_in: f64, period_samples: usize) -> Result<GainMeasurement, CircuitError> {
    measure_gain_with(cfg, a_in, &WaveformOptions::samples(period_samples))
}

pub fn measure_gain_with(
    cfg: &CsvacConfig,
    a_in: f64,
    opts: &WaveformOptions,
) -> Result<GainMeasurement, CircuitError> {
    if !(a_in > 0.0) {
        return Err(CircuitError::InvalidConfig(format!("input amplitude must be positive, got {a_in}")));
    }
    let waveform = sample_waveform(cfg, a_in, opts)?;
    let (lo, hi) =
        waveform.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.v_out), hi.max(s.v_out)));
    let output_amplitude = 0.5 * (hi - lo);
    let average_power = waveform.iter().map(|s| s.power).sum::<f64>() / waveform.len() as f64;
    Ok(GainMeasurement {
        input_amplitude: a_in,
        output_amplitude,
        gain: output_amplitude / a_in,
        average_power,
        waveform,
    })
}

/// Mean instantaneous dissipation over one input period at escape rate
/// `gamma`.
pub fn average_power(cfg: &CsvacConfig, a_in: f64, gamma: f64, period_samples: usize) -> Result<f64, CircuitError> {
    let w = sample_waveform(&cfg.with_gamma(gamma), a_in, &WaveformOptions::samples(period_samples))?;
    Ok(w.iter().map(|s| s.power).sum::<f64>() / w.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub gamma: f64,
    pub gain: f64,
    pub average_power: f64,
    pub evaluations: usize,
}

/// Finds the escape rate at which the measured gain equals `target_gain`.
///
/// The gain grows monotonically with Γ, so Γ is bracketed by factor-of-ten
/// steps from the template value and then refined on ln Γ to a relative gain
/// error of 1e-7.
pub fn calibrate_gamma_for_gain(
    template: &CsvacConfig,
    a_in: f64,
    target_gain: f64,
    period_samples: usize,
) -> Result<Calibration, CircuitError> {
    if !(target_gain >= 1.0) || !target_gain.is_finite() {
        return Err(CircuitError::InvalidConfig(format!("target gain must be at least 1, got {target_gain}")));
    }
    template.validate()?;
    let opts = WaveformOptions::samples(period_samples);
    let mut evaluations = 0usize;
    let mut gain_at = |ln_gamma: f64| -> Result<f64, CircuitError> {
        evaluations += 1;
        Ok(measure_gain_with(&template.with_gamma(ln_gamma.exp()), a_in, &opts)?.gain)
    };

    let (ln_min, ln_max) = (GAMMA_MIN.ln(), GAMMA_MAX.ln());
    let step = 10f64.ln();
    let mut x = template.gamma.ln().clamp(ln_min, ln_max);
    let mut g = gain_at(x)?;
    let (lo, hi) = if g < target_gain {
        loop {
            let next = (x + step).min(ln_max);
            let gn = gain_at(next)?;
            if gn >= target_gain {
                break (x, next);
            }
            if next >= ln_max {
                return Err(CircuitError::Unreachable {
                    target: target_gain,
                    v_d: template.v_d,
                    max_gain: gn,
                    gamma_max: GAMMA_MAX,
                });
            }
            x = next;
        }
    } else {
        loop {
            let next = (x - step).max(ln_min);
            let gn = gain_at(next)?;
            if gn < target_gain {
                break (next, x);
            }
            if next <= ln_min {
                return Err(CircuitError::InvalidConfig(format!(
                    "gain {gn} already exceeds target {target_gain} at gamma = {GAMMA_MIN:e}"
                )));
            }
            x = next;
            g = gn;
        }
    };
    let _ = g;

    let mut failure = None;
    let root = find_root(
        |x| match gain_at(x) {
            Ok(g) => g - target_gain,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        lo,
        hi,
        1e-7 * target_gain,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let root = root.map_err(|source| CircuitError::Root { v_in: a_in, source })?;
    let gamma = root.x.exp();
    let m = measure_gain_with(&template.with_gamma(gamma), a_in, &opts)?;
    Ok(Calibration { gamma, gain: m.gain, average_power: m.average_power, evaluations: evaluations + 1 })
}

/// How the supply voltage is chosen for each (amplitude, gain) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupplySchedule {
    /// Same supply for every cell.
    Fixed { v_d: f64 },
    /// v_d = max(floor, factor · gain · a_in): enough headroom for the
    /// output swing at every cell.
    Headroom { factor: f64, floor: f64 },
}

impl Default for SupplySchedule {
    fn default() -> Self {
        Self::Headroom { factor: 3.0, floor: 15.0 }
    }
}

impl SupplySchedule {
    pub fn v_d(&self, a_in: f64, gain: f64) -> f64 {
        match *self {
            Self::Fixed { v_d } => v_d,
            Self::Headroom { factor, floor } => floor.max(factor * gain * a_in),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerMapCell {
    pub a_in: f64,
    pub target_gain: f64,
    pub v_d: f64,
    pub gamma: Option<f64>,
    pub gain: Option<f64>,
    pub avg_power: Option<f64>,
    /// Why the cell has no value (e.g. the target gain is out of reach).
    pub note: Option<String>,
}

/// Calibrates Γ and records the cycle-averaged power for every
/// (amplitude, gain) pair. Cells run in parallel; the result order is
/// amplitude-major and independent of scheduling.
pub fn power_map(
    template: &CsvacConfig,
    a_in_grid: &[f64],
    gain_grid: &[f64],
    schedule: SupplySchedule,
    period_samples: usize,
) -> Vec<PowerMapCell> {
    let cells: Vec<(f64, f64)> = a_in_grid.iter().flat_map(|&a| gain_grid.iter().map(move |&g| (a, g))).collect();
    cells
        .par_iter()
        .map(|&(a_in, target_gain)| {
            let v_d = schedule.v_d(a_in, target_gain);
            let cfg = template.with_supply(v_d);
            match calibrate_gamma_for_gain(&cfg, a_in, target_gain, period_samples) {
                Ok(c) => PowerMapCell {
                    a_in,
                    target_gain,
                    v_d,
                    gamma: Some(c.gamma),
                    gain: Some(c.gain),
                    avg_power: Some(c.average_power),
                    note: None,
                },
                Err(e) => PowerMapCell {
                    a_in,
                    target_gain,
                    v_d,
                    gamma: None,
                    gain: None,
                    avg_power: None,
                    note: Some(e.to_string()),
                },
            }
        })
        .collect()
}
