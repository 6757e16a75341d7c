//! Single-level transistor model: gate-controlled level energies, electrode
//! tunneling rates, the two-state master equation and electrode currents.

mod master;
mod sweep;

pub use master::{
    level_marginals, steady_state, ChannelTag, MasterEquation, RateMatrix, SteadyState, Transition, GENERATOR_TOLERANCE,
};
pub use sweep::{
    linspace, sweep_output_characteristic, sweep_transfer_characteristic, OutputCurve, SweepPoint,
    TransferCharacteristic, CUTOFF_FRACTION,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{fermi, fermi_dirac, Energy, ThermoError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error("invalid rate {0}")]
    InvalidRate(f64),
    #[error("state index {index} out of range for {n_states} states")]
    InvalidState { index: usize, n_states: usize },
    #[error("matrix is {0}x{1}, expected square")]
    NotSquare(usize, usize),
    #[error("column sums do not vanish (relative residual {0:e})")]
    NotAGenerator(f64),
    #[error("stationary state is not unique (smallest singular value {smallest:e})")]
    RankDeficient { smallest: f64 },
    #[error("linear solve failed: {0}")]
    Solver(String),
    #[error("at least one reservoir is required")]
    NoReservoir,
    #[error("empty sweep grid")]
    EmptyGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TransistorKind {
    Nmos,
    Pmos,
}

impl std::str::FromStr for TransistorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nmos" | "n" => Ok(Self::Nmos),
            "pmos" | "p" => Ok(Self::Pmos),
            other => Err(format!("unknown transistor kind `{other}` (expected NMOS or PMOS)")),
        }
    }
}

impl std::fmt::Display for TransistorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Nmos => "NMOS",
            Self::Pmos => "PMOS",
        })
    }
}

/// A transistor reduced to one electronic level whose energy is shifted by
/// the gate voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransistorLevel {
    pub kind: TransistorKind,
    /// Level energy at zero gate voltage.
    pub reference_energy: Energy,
    /// Coupling rate to each electrode, in 1/βħ.
    pub escape_rate: f64,
}

impl TransistorLevel {
    pub fn new(kind: TransistorKind, reference_energy: Energy, escape_rate: f64) -> Result<Self, DeviceError> {
        if !(escape_rate > 0.0) || !escape_rate.is_finite() {
            return Err(DeviceError::InvalidRate(escape_rate));
        }
        Ok(Self { kind, reference_energy, escape_rate })
    }

    pub fn nmos(reference_energy: f64, escape_rate: f64) -> Result<Self, DeviceError> {
        Self::new(TransistorKind::Nmos, Energy::new(reference_energy)?, escape_rate)
    }

    pub fn pmos(reference_energy: f64, escape_rate: f64) -> Result<Self, DeviceError> {
        Self::new(TransistorKind::Pmos, Energy::new(reference_energy)?, escape_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reservoir {
    pub label: String,
    pub chemical_potential: Energy,
}

impl Reservoir {
    pub fn new(label: impl Into<String>, chemical_potential: f64) -> Result<Self, DeviceError> {
        Ok(Self { label: label.into(), chemical_potential: Energy::new(chemical_potential)? })
    }

    /// An electrode biased at `v` (in V_T) holds electrons at μ = −v.
    pub fn at_voltage(label: impl Into<String>, v: f64) -> Result<Self, DeviceError> {
        Self::new(label, -v)
    }
}

/// Level energy at gate voltage `v_in` (V_T): NMOS levels move down, PMOS
/// levels move up.
pub fn level_energy(t: &TransistorLevel, v_in: f64) -> Energy {
    let e0 = t.reference_energy.kt();
    Energy::from_kt(match t.kind {
        TransistorKind::Nmos => e0 - v_in,
        TransistorKind::Pmos => e0 + v_in,
    })
}

/// Tunneling rates between a level and one electrode: `k_in` fills the level
/// from the electrode, `k_out` empties it into the electrode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectrodeRates {
    pub k_in: f64,
    pub k_out: f64,
}

pub fn electrode_rates(level_energy: Energy, r: &Reservoir, gamma: f64) -> Result<ElectrodeRates, DeviceError> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(DeviceError::InvalidRate(gamma));
    }
    let f = fermi_dirac(level_energy, r.chemical_potential)?;
    // 1 − f(x) = f(−x); the complement form keeps the small side accurate.
    let d = level_energy.kt() - r.chemical_potential.kt();
    Ok(ElectrodeRates { k_in: gamma * f, k_out: gamma * fermi(-d) })
}

/// Two-state generator of a level coupled to `reservoirs`, at gate voltage
/// `v_in`. State 0 is empty, state 1 occupied.
pub fn build_two_state_generator(
    level: &TransistorLevel,
    v_in: f64,
    reservoirs: &[Reservoir],
) -> Result<RateMatrix, DeviceError> {
    two_state_network(level, v_in, reservoirs)?.generator()
}

/// Like [`build_two_state_generator`] but keeps one labeled jump per
/// electrode so that samplers can count currents. Channel label is the
/// reservoir label; filling the level counts +1.
pub fn two_state_network(
    level: &TransistorLevel,
    v_in: f64,
    reservoirs: &[Reservoir],
) -> Result<MasterEquation, DeviceError> {
    if reservoirs.is_empty() {
        return Err(DeviceError::NoReservoir);
    }
    let eps = level_energy(level, v_in);
    let mut transitions = Vec::with_capacity(2 * reservoirs.len());
    for r in reservoirs {
        let k = electrode_rates(eps, r, level.escape_rate)?;
        transitions.push(Transition::counted(0, 1, k.k_in, &r.label, 1));
        transitions.push(Transition::counted(1, 0, k.k_out, &r.label, -1));
    }
    Ok(MasterEquation { n_states: 2, n_levels: 1, transitions })
}

/// Net electron flux from reservoir `r` into the level, given its mean
/// occupancy, at gate voltage `v_in`. Units of q/βħ with q counted as +1 per
/// electron.
pub fn electrode_current(
    level: &TransistorLevel,
    v_in: f64,
    r: &Reservoir,
    mean_occupancy: f64,
) -> Result<f64, DeviceError> {
    let k = electrode_rates(level_energy(level, v_in), r, level.escape_rate)?;
    Ok(k.k_in * (1.0 - mean_occupancy) - k.k_out * mean_occupancy)
}

/// Closed-form two-state occupancy `Σk_in / (Σk_in + Σk_out)`.
pub fn closed_form_occupancy(level: &TransistorLevel, v_in: f64, reservoirs: &[Reservoir]) -> Result<f64, DeviceError> {
    let eps = level_energy(level, v_in);
    let (mut kin, mut kout) = (0.0, 0.0);
    for r in reservoirs {
        let k = electrode_rates(eps, r, level.escape_rate)?;
        kin += k.k_in;
        kout += k.k_out;
    }
    Ok(kin / (kin + kout))
}

/// Drain current of a level between drain and source electrodes: net electron
/// flux from the drain into the level at steady state.
pub(crate) fn drain_current(
    level: &TransistorLevel,
    v_in: f64,
    drain: &Reservoir,
    source: &Reservoir,
) -> Result<f64, DeviceError> {
    let eps = level_energy(level, v_in);
    let d = electrode_rates(eps, drain, level.escape_rate)?;
    let s = electrode_rates(eps, source, level.escape_rate)?;
    // Eliminating the occupancy gives a form that vanishes exactly without bias.
    Ok((d.k_in * s.k_out - d.k_out * s.k_in) / (d.k_in + d.k_out + s.k_in + s.k_out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::check_local_detailed_balance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn level_energy_sign_rule() {
        let n = TransistorLevel::nmos(0.0, 0.2).unwrap();
        let p = TransistorLevel::pmos(0.0, 0.2).unwrap();
        assert_eq!(level_energy(&n, 0.0).kt(), 0.0);
        assert_eq!(level_energy(&n, 5.0).kt(), -5.0);
        assert_eq!(level_energy(&p, 5.0).kt(), 5.0);
        assert!(TransistorLevel::nmos(0.0, 0.0).is_err());
    }

    #[test]
    fn electrode_rate_examples() {
        let r = Reservoir::new("d", 0.0).unwrap();
        let k = electrode_rates(Energy::ZERO, &r, 0.2).unwrap();
        assert_eq!((k.k_in, k.k_out), (0.1, 0.1));
        let k = electrode_rates(Energy::from_kt(1.0), &r, 1.0).unwrap();
        let f = 1.0 / (1f64.exp() + 1.0);
        assert!(close(k.k_in, f, 1e-15) && close(k.k_out, 1.0 - f, 1e-15));
        assert!(close(k.k_in + k.k_out, 1.0, 1e-15));
    }

    #[test]
    fn resonant_generator() {
        let level = TransistorLevel::nmos(0.0, 1.0).unwrap();
        let r = Reservoir::new("d", 0.0).unwrap();
        let m = build_two_state_generator(&level, 0.0, &[r]).unwrap();
        let e = m.entries();
        assert_eq!((e[(0, 0)], e[(0, 1)], e[(1, 0)], e[(1, 1)]), (-0.5, 0.5, 0.5, -0.5));
    }

    #[test]
    fn equal_reservoirs_add_rates() {
        let one = TransistorLevel::nmos(0.7, 2.0).unwrap();
        let half = TransistorLevel::nmos(0.7, 1.0).unwrap();
        let a = Reservoir::new("a", -0.3).unwrap();
        let b = Reservoir::new("b", -0.3).unwrap();
        let m1 = build_two_state_generator(&one, 0.2, std::slice::from_ref(&a)).unwrap();
        let m2 = build_two_state_generator(&half, 0.2, &[a, b]).unwrap();
        assert!((m1.entries() - m2.entries()).amax() < 1e-15);
    }

    #[test]
    fn biased_nmos_generator_by_hand() {
        let level = TransistorLevel::nmos(0.0, 0.2).unwrap();
        let d = Reservoir::new("d", -15.0).unwrap();
        let s = Reservoir::new("s", 0.0).unwrap();
        let m = build_two_state_generator(&level, 0.0, &[d, s]).unwrap();
        // ε = 0: f_d = 1/(e^15 + 1), f_s = 1/2.
        let fd = 1.0 / (15f64.exp() + 1.0);
        let fill = 0.2 * (fd + 0.5);
        let empty = 0.2 * ((1.0 - fd) + 0.5);
        assert!(close(m.rate(0, 1), fill, 1e-16));
        assert!(close(m.rate(1, 0), empty, 1e-16));
        assert!(m.column_sum_residual() < 1e-15);
    }

    #[test]
    fn steady_state_matches_closed_forms() {
        let level = TransistorLevel::nmos(1.5, 0.3).unwrap();
        let d = Reservoir::new("d", 2.0).unwrap();
        let m = build_two_state_generator(&level, 0.4, std::slice::from_ref(&d)).unwrap();
        let n = steady_state(&m).unwrap().mean_occupancy_per_level[0];
        let f = fermi_dirac(level_energy(&level, 0.4), d.chemical_potential).unwrap();
        assert!(close(n, f, 1e-13));
        assert!(electrode_current(&level, 0.4, &d, n).unwrap().abs() < 1e-12);

        let s = Reservoir::new("s", -3.0).unwrap();
        let m = build_two_state_generator(&level, 0.4, &[d.clone(), s.clone()]).unwrap();
        let n = steady_state(&m).unwrap().mean_occupancy_per_level[0];
        let oracle = closed_form_occupancy(&level, 0.4, &[d.clone(), s.clone()]).unwrap();
        assert!(close(n, oracle, 1e-12));
        let jd = electrode_current(&level, 0.4, &d, n).unwrap();
        let js = electrode_current(&level, 0.4, &s, n).unwrap();
        assert!((jd + js).abs() < 1e-10);
        assert!(jd.abs() > 1e-3);
    }

    #[test]
    fn symmetric_generator_half_occupied() {
        let m = RateMatrix::from_transitions(2, &[Transition::new(0, 1, 0.7), Transition::new(1, 0, 0.7)]).unwrap();
        let ss = steady_state(&m).unwrap();
        assert!(close(ss.mean_occupancy_per_level[0], 0.5, 1e-15));
    }

    #[test]
    fn random_generators_match_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let kind = if rng.random_bool(0.5) { TransistorKind::Nmos } else { TransistorKind::Pmos };
            let level = TransistorLevel::new(
                kind,
                Energy::from_kt(rng.random_range(-10.0..10.0)),
                10f64.powf(rng.random_range(-3.0..1.0)),
            )
            .unwrap();
            let v_in = rng.random_range(-10.0..10.0);
            let res = [
                Reservoir::new("d", rng.random_range(-20.0..20.0)).unwrap(),
                Reservoir::new("s", rng.random_range(-20.0..20.0)).unwrap(),
            ];
            let m = build_two_state_generator(&level, v_in, &res).unwrap();
            assert!(m.column_sum_residual() < GENERATOR_TOLERANCE);
            let n = steady_state(&m).unwrap().mean_occupancy_per_level[0];
            let oracle = closed_form_occupancy(&level, v_in, &res).unwrap();
            assert!(close(n, oracle, 1e-12), "{n} vs {oracle}");
        }
    }

    proptest::proptest! {
        #[test]
        fn electrode_rates_obey_detailed_balance(eps in -30.0f64..30.0, mu in -30.0f64..30.0, g in 1e-4f64..10.0) {
            let r = Reservoir::new("x", mu).unwrap();
            let k = electrode_rates(Energy::from_kt(eps), &r, g).unwrap();
            // Filling takes an electron at μ up to ε.
            let res = check_local_detailed_balance(k.k_in, k.k_out, Energy::from_kt(mu), Energy::from_kt(eps)).unwrap();
            proptest::prop_assert!(res < 1e-12);
            proptest::prop_assert!((k.k_in + k.k_out - g).abs() <= 1e-15 * g.max(1.0) * 4.0);
        }

        #[test]
        fn equilibrium_carries_no_current(eps0 in -10.0f64..10.0, v_in in -10.0f64..10.0, mu in -10.0f64..10.0) {
            let level = TransistorLevel::nmos(eps0, 0.2).unwrap();
            let a = Reservoir::new("a", mu).unwrap();
            let b = Reservoir::new("b", mu).unwrap();
            let m = build_two_state_generator(&level, v_in, &[a.clone(), b.clone()]).unwrap();
            let n = steady_state(&m).unwrap().mean_occupancy_per_level[0];
            let f = fermi_dirac(level_energy(&level, v_in), a.chemical_potential).unwrap();
            proptest::prop_assert!((n - f).abs() < 1e-12);
            proptest::prop_assert!(electrode_current(&level, v_in, &a, n).unwrap().abs() < 1e-12);
            proptest::prop_assert!(electrode_current(&level, v_in, &b, n).unwrap().abs() < 1e-12);
        }
    }
}
