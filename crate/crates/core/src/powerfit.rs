//! Exponential power law `P = exp(a + b·A_in + c·G)` and its least-squares
//! fit on the log scale.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::UnitSystem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("at least 3 samples are required, got {0}")]
    TooFewSamples(usize),
    #[error("sample {index} has non-positive or non-finite power {power}")]
    NonPositivePower { index: usize, power: f64 },
    #[error("sample {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("design matrix is rank deficient (amplitudes and gains are collinear)")]
    RankDeficient,
    #[error("unknown fit `{0}` (expected paper-sim, paper-entity or a JSON file)")]
    UnknownFit(String),
}

/// Unit of the input amplitude a fit was made in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AmplitudeUnit {
    #[serde(rename = "V_T")]
    ThermalVoltage,
    #[serde(rename = "volt")]
    Volt,
}

impl fmt::Display for AmplitudeUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ThermalVoltage => "V_T",
            Self::Volt => "volt",
        })
    }
}

impl std::str::FromStr for AmplitudeUnit {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "V_T" | "v_t" | "vt" | "VT" => Ok(Self::ThermalVoltage),
            "volt" | "V" | "v" | "volts" => Ok(Self::Volt),
            other => Err(format!("unknown amplitude unit `{other}` (expected V_T or volt)")),
        }
    }
}

impl AmplitudeUnit {
    /// Converts an amplitude given in `from` into this unit.
    pub fn convert(self, value: f64, from: AmplitudeUnit, units: &UnitSystem) -> f64 {
        match (from, self) {
            (a, b) if a == b => value,
            (AmplitudeUnit::Volt, AmplitudeUnit::ThermalVoltage) => units.volts_to_thermal(value),
            _ => units.thermal_to_volts(value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub a: f64,
    /// Per unit of input amplitude.
    pub b: f64,
    /// Per unit of gain.
    pub c: f64,
    pub amplitude_unit: AmplitudeUnit,
    /// Root-mean-square residual of ln P.
    pub rmse: f64,
    /// Coefficient of determination on the ln P scale.
    pub r_square: f64,
    /// Number of fitted samples; unknown for published coefficient sets.
    pub n_points: Option<usize>,
    pub source: String,
}

impl PowerFit {
    /// Coefficients fitted to simulated CSVAC power (amplitudes in V_T).
    pub fn simulated_csvac() -> Self {
        Self {
            a: -18.7,
            b: 0.8156,
            c: 8.569,
            amplitude_unit: AmplitudeUnit::ThermalVoltage,
            rmse: 0.06571,
            r_square: 0.9993,
            n_points: None,
            source: "paper-sim".into(),
        }
    }

    /// Coefficients fitted to bench measurements of a discrete-component
    /// CSVAC (amplitudes in volts).
    pub fn discrete_csvac() -> Self {
        Self {
            a: -50.5,
            b: 1.415,
            c: 33.49,
            amplitude_unit: AmplitudeUnit::Volt,
            rmse: 0.008732,
            r_square: 0.9983,
            n_points: None,
            source: "paper-entity".into(),
        }
    }

    pub fn builtin(name: &str) -> Result<Self, FitError> {
        match name {
            "paper-sim" => Ok(Self::simulated_csvac()),
            "paper-entity" => Ok(Self::discrete_csvac()),
            other => Err(FitError::UnknownFit(other.to_string())),
        }
    }

    pub fn evaluate(&self, a_in: f64, g: f64) -> f64 {
        evaluate_power(self, a_in, g)
    }
}

/// `exp(a + b·a_in + c·g)`, with `a_in` in the fit's amplitude unit.
pub fn evaluate_power(fit: &PowerFit, a_in: f64, g: f64) -> f64 {
    (fit.a + fit.b * a_in + fit.c * g).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub a_in: f64,
    pub gain: f64,
    pub power: f64,
}

/// Ordinary least squares of ln P on (1, A_in, G).
pub fn fit_power_model(samples: &[PowerSample], unit: AmplitudeUnit, source: &str) -> Result<PowerFit, FitError> {
    let n = samples.len();
    if n < 3 {
        return Err(FitError::TooFewSamples(n));
    }
    for (index, s) in samples.iter().enumerate() {
        if !s.a_in.is_finite() || !s.gain.is_finite() {
            return Err(FitError::NonFinite { index });
        }
        if !(s.power > 0.0) || !s.power.is_finite() {
            return Err(FitError::NonPositivePower { index, power: s.power });
        }
    }
    let x = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => samples[i].a_in,
        _ => samples[i].gain,
    });
    let y = DVector::from_iterator(n, samples.iter().map(|s| s.power.ln()));
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(FitError::RankDeficient);
    }
    let beta = svd.solve(&y, 0.0).map_err(|_| FitError::RankDeficient)?;
    let resid = &y - &x * &beta;
    let ssr = resid.norm_squared();
    let mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r_square = if sst > 0.0 { (1.0 - ssr / sst).clamp(0.0, 1.0) } else { 1.0 };
    Ok(PowerFit {
        a: beta[0],
        b: beta[1],
        c: beta[2],
        amplitude_unit: unit,
        rmse: (ssr / n as f64).sqrt(),
        r_square,
        n_points: Some(n),
        source: source.to_string(),
    })
}
