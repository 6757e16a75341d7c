//! Steady-state solvers for the single-transistor amplifier and the
//! complementary symmetric amplifier (CSVAC), gain measurement, gain
//! calibration and power dissipation.
//!
//! Currents are electron fluxes in q/βħ (one electron counts +1). A name of
//! the form `X->Y` is the net number of electrons per unit time moving from
//! `X` to `Y`. Potentials are electron chemical potentials in kT, so an
//! electrode at voltage `V` sits at `μ = −V`.

mod amplifier;
mod csvac;
mod gain;

pub use amplifier::{rd_from_gamma, solve_amplifier, AmplifierConfig, RD_TIMES_GAMMA};
pub use csvac::{
    build_csvac_generator, csvac_network, csvac_rates, csvac_state_at, inter_transistor_rates, solve_csvac,
    solve_csvac_with, CsvacConfig, CsvacRates, ExchangeRates, State, LOAD_CHANNEL,
};
pub use gain::{
    average_power, calibrate_gamma_for_gain, measure_gain, measure_gain_with, power_map, sample_waveform, Calibration,
    GainMeasurement, PowerMapCell, SupplySchedule, WaveformOptions, WaveformSample, GAMMA_MAX, GAMMA_MIN,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::DeviceError;
use crate::roots::RootError;
use crate::units::fermi;

/// Tolerance on the node current balance, q/βħ.
pub const BALANCE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("output voltage root finding failed at v_in = {v_in}: {source}")]
    Root {
        v_in: f64,
        #[source]
        source: RootError,
    },
    #[error("balance residual {residual:e} exceeds tolerance at v_in = {v_in}")]
    Residual { v_in: f64, residual: f64 },
    #[error("waveform sample at phase {phase:.6} rad failed: {message}")]
    Waveform { phase: f64, message: String },
    #[error("target gain {target} unreachable at v_d = {v_d} (max gain {max_gain:.6} at gamma = {gamma_max:e})")]
    Unreachable { target: f64, v_d: f64, max_gain: f64, gamma_max: f64 },
}

/// Electron flux through an Ohmic element from the electrode at `mu_supply`
/// into the node at `mu_node`. Zero without a potential difference and odd
/// under exchange of the two potentials.
pub fn resistor_current(mu_node: f64, mu_supply: f64, gamma_r: f64) -> f64 {
    0.5 * gamma_r * (fermi(mu_node - mu_supply) - 0.5)
}

/// Steady-state flows through one transistor level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransistorFlow {
    pub name: String,
    pub occupancy: f64,
    /// Net electron flux from the drain electrode into the level.
    pub drain_inflow: f64,
    /// Net electron flux from the level into the source node.
    pub source_outflow: f64,
    pub drain_potential: f64,
    pub source_potential: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PowerBreakdown {
    pub pmos: f64,
    pub nmos: f64,
    pub total: f64,
}

/// Solved steady state of a circuit at one input voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitState {
    pub v_in: f64,
    pub v_out: f64,
    pub transistors: Vec<TransistorFlow>,
    /// Named electron fluxes, see the module documentation.
    pub currents: BTreeMap<String, f64>,
    pub power: PowerBreakdown,
    /// Value of the balance equation at `v_out`.
    pub residual: f64,
    /// Output voltage predicted by Ohm's law with the fitted resistance
    /// (single-transistor amplifier only).
    pub ohmic_v_out: Option<f64>,
    /// Set when the exchange rates had to be evaluated at the clamped
    /// Bose-Einstein argument.
    pub exchange_clamped: bool,
}

impl CircuitState {
    pub fn current(&self, name: &str) -> Option<f64> {
        self.currents.get(name).copied()
    }

    pub fn occupancy(&self, name: &str) -> Option<f64> {
        self.transistors.iter().find(|t| t.name == name).map(|t| t.occupancy)
    }
}

/// Power dissipated in the transistors: each level contributes the electron
/// flux it carries from its drain times the drop in chemical potential from
/// drain to source. This equals the entropy production rate (times kT) of
/// the level network and is non-negative at steady state.
pub fn power_dissipation(state: &CircuitState) -> PowerBreakdown {
    let mut p = PowerBreakdown::default();
    for t in &state.transistors {
        let w = t.drain_inflow * (t.drain_potential - t.source_potential);
        match t.name.as_str() {
            "P" => p.pmos += w,
            _ => p.nmos += w,
        }
    }
    p.total = p.pmos + p.nmos;
    p
}

pub(crate) fn require_positive(name: &str, v: f64) -> Result<(), CircuitError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CircuitError::InvalidConfig(format!("{name} must be positive and finite, got {v}")))
    }
}
