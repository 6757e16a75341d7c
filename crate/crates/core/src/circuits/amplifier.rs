//! Common-source amplifier: one NMOS level with a grounded source and a
//! drain resistor to the supply.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    power_dissipation, require_positive, resistor_current, CircuitError, CircuitState, TransistorFlow,
    BALANCE_TOLERANCE,
};
use crate::device::{level_energy, TransistorLevel};
use crate::roots::find_root;
use crate::units::{fermi, Energy};

/// Product of the drain resistance and the resistor coupling rate.
pub const RD_TIMES_GAMMA: f64 = 8.432;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplifierConfig {
    pub v_dd: f64,
    pub gamma: f64,
    pub gamma_r: f64,
    pub nmos_reference_energy: Energy,
}

impl Default for AmplifierConfig {
    /// V_DD = 15 V_T, Γ_r = 0.01/βħ. Γ = 0.002/βħ keeps the transistor the
    /// current-limiting element, which is what makes the output swing grow as
    /// the drain resistance grows.
    fn default() -> Self {
        Self { v_dd: 15.0, gamma: 0.002, gamma_r: 0.01, nmos_reference_energy: Energy::ZERO }
    }
}

impl AmplifierConfig {
    pub fn validate(&self) -> Result<(), CircuitError> {
        require_positive("v_dd", self.v_dd)?;
        require_positive("gamma", self.gamma)?;
        require_positive("gamma_r", self.gamma_r)
    }

    fn level(&self) -> Result<TransistorLevel, CircuitError> {
        Ok(TransistorLevel::nmos(self.nmos_reference_energy.kt(), self.gamma)?)
    }
}

/// Drain resistance implied by a resistor coupling rate.
pub fn rd_from_gamma(gamma_r: f64) -> f64 {
    RD_TIMES_GAMMA / gamma_r
}

struct Flows {
    resistor: f64,
    drain: f64,
    occupancy: f64,
}

fn flows(cfg: &AmplifierConfig, level: &TransistorLevel, v_in: f64, v_out: f64) -> Flows {
    let eps = level_energy(level, v_in).kt();
    let mu_d = -v_out;
    let mu_dd = -cfg.v_dd;
    // Equal couplings to drain and source: ⟨n⟩ = (f_d + f_s)/2.
    let f_d = fermi(eps - mu_d);
    let f_s = fermi(eps);
    Flows {
        resistor: resistor_current(mu_d, mu_dd, cfg.gamma_r),
        drain: 0.5 * cfg.gamma * (f_d - f_s),
        occupancy: 0.5 * (f_d + f_s),
    }
}

/// Solves for the drain voltage at which the resistor delivers exactly the
/// current the transistor draws.
pub fn solve_amplifier(cfg: &AmplifierConfig, v_in: f64) -> Result<CircuitState, CircuitError> {
    cfg.validate()?;
    let level = cfg.level()?;
    let balance = |v: f64| {
        let f = flows(cfg, &level, v_in, v);
        f.resistor - f.drain
    };
    let root = find_root(balance, 0.0, cfg.v_dd, 1e-3 * BALANCE_TOLERANCE)
        .map_err(|source| CircuitError::Root { v_in, source })?;
    if root.residual.abs() > BALANCE_TOLERANCE {
        return Err(CircuitError::Residual { v_in, residual: root.residual });
    }
    let v_out = root.x;
    let f = flows(cfg, &level, v_in, v_out);
    let mut currents = BTreeMap::new();
    currents.insert("DD->Rd".to_string(), f.resistor);
    currents.insert("d->N".to_string(), f.drain);
    currents.insert("N->s".to_string(), f.drain);
    let mut state = CircuitState {
        v_in,
        v_out,
        transistors: vec![TransistorFlow {
            name: "N".into(),
            occupancy: f.occupancy,
            drain_inflow: f.drain,
            source_outflow: f.drain,
            drain_potential: -v_out,
            source_potential: 0.0,
        }],
        currents,
        power: Default::default(),
        residual: root.residual,
        // Electrons leave the drain node through the resistor, so the
        // conventional current from the supply is −J_{DD→Rd}.
        ohmic_v_out: Some(cfg.v_dd + f.resistor * rd_from_gamma(cfg.gamma_r)),
        exchange_clamped: false,
    };
    state.power = power_dissipation(&state);
    Ok(state)
}
