//! Physical constants, the simulation unit system and the occupation laws
//! shared by every model in the crate.
//!
//! All quantities inside the library are expressed in thermal units:
//!
//! | quantity  | unit        |
//! |-----------|-------------|
//! | energy    | kT          |
//! | voltage   | V_T = kT/q  |
//! | time      | βħ          |
//! | rate      | 1/βħ        |
//! | current   | q/βħ        |
//! | power     | kT/βħ       |
//!
//! With these conventions an electrostatic energy `qV` has the same numeric
//! value as the voltage `V`, so level shifts and chemical potentials can be
//! written directly in terms of voltages. SI conversion happens only at I/O
//! boundaries through [`UnitSystem`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BOLTZMANN_J_PER_K: f64 = 1.380_649e-23;
pub const REDUCED_PLANCK_J_S: f64 = 1.054_571_817e-34;
/// Elementary charge as rounded in the model description (1.6e-19 C).
pub const ELECTRON_CHARGE_C: f64 = 1.6e-19;
pub const ROOM_TEMPERATURE_K: f64 = 300.0;

/// Smallest argument accepted by [`bose_einstein`], in kT.
pub const BOSE_X_MIN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThermoError {
    #[error("non-finite {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },
    #[error("rate must be strictly positive, got {0}")]
    NonPositiveRate(f64),
}

/// Thermal unit conventions at a fixed temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    pub temperature_kelvin: f64,
    pub thermal_energy_joule: f64,
    pub thermal_voltage_volt: f64,
    pub unit_time_second: f64,
    pub electron_charge_coulomb: f64,
}

impl UnitSystem {
    /// The 300 K system used throughout: V_T ≈ 25.9 mV, βħ ≈ 25 fs.
    pub fn room_temperature() -> Self {
        let kt = BOLTZMANN_J_PER_K * ROOM_TEMPERATURE_K;
        let thermal_voltage = kt / ELECTRON_CHARGE_C;
        // kT is re-derived from V_T so that V_T * q == kT holds bit-for-bit.
        let thermal_energy = thermal_voltage * ELECTRON_CHARGE_C;
        Self {
            temperature_kelvin: ROOM_TEMPERATURE_K,
            thermal_energy_joule: thermal_energy,
            thermal_voltage_volt: thermal_voltage,
            unit_time_second: REDUCED_PLANCK_J_S / thermal_energy,
            electron_charge_coulomb: ELECTRON_CHARGE_C,
        }
    }

    pub fn volts_to_thermal(&self, volts: f64) -> f64 {
        volts / self.thermal_voltage_volt
    }

    pub fn thermal_to_volts(&self, v: f64) -> f64 {
        v * self.thermal_voltage_volt
    }

    pub fn time_to_seconds(&self, t: f64) -> f64 {
        t * self.unit_time_second
    }

    pub fn rate_to_hertz(&self, rate: f64) -> f64 {
        rate / self.unit_time_second
    }

    pub fn current_to_ampere(&self, current: f64) -> f64 {
        current * self.electron_charge_coulomb / self.unit_time_second
    }

    pub fn power_to_watt(&self, power: f64) -> f64 {
        power * self.thermal_energy_joule / self.unit_time_second
    }
}

impl Default for UnitSystem {
    fn default() -> Self {
        Self::room_temperature()
    }
}

/// An energy in units of kT. Always finite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Energy(f64);

impl Energy {
    pub const ZERO: Energy = Energy(0.0);

    pub fn new(kt: f64) -> Result<Self, ThermoError> {
        if kt.is_finite() {
            Ok(Self(kt))
        } else {
            Err(ThermoError::NonFinite { what: "energy", value: kt })
        }
    }

    /// Panics on a non-finite value; use [`Energy::new`] for untrusted input.
    pub fn from_kt(kt: f64) -> Self {
        Self::new(kt).expect("energy must be finite")
    }

    pub fn kt(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Energy {
    type Error = ThermoError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Energy::new(v)
    }
}

impl From<Energy> for f64 {
    fn from(e: Energy) -> f64 {
        e.0
    }
}

/// Logistic form of the Fermi-Dirac occupation, `1/(e^x + 1)`.
///
/// Branches on the sign of `x` so that neither exponential overflows.
#[inline]
pub(crate) fn fermi(x: f64) -> f64 {
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Fermi-Dirac occupation of a state at `x` in a reservoir at potential `mu`.
pub fn fermi_dirac(x: Energy, mu: Energy) -> Result<f64, ThermoError> {
    let d = x.kt() - mu.kt();
    if !d.is_finite() {
        return Err(ThermoError::NonFinite { what: "energy difference", value: d });
    }
    Ok(fermi(d))
}

/// Result of a Bose-Einstein evaluation. `clamped` is raised when the
/// argument was at or below [`BOSE_X_MIN`] and was replaced by it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoseOccupancy {
    pub value: f64,
    pub argument: f64,
    pub clamped: bool,
}

#[inline]
pub(crate) fn bose(x: f64) -> (f64, bool) {
    let clamped = x <= BOSE_X_MIN;
    let x = if clamped { BOSE_X_MIN } else { x };
    (1.0 / x.exp_m1(), clamped)
}

/// Bose-Einstein occupation `1/(e^x - 1)` for `x` in kT.
pub fn bose_einstein(x: Energy) -> BoseOccupancy {
    let (value, clamped) = bose(x.kt());
    BoseOccupancy { value, argument: if clamped { BOSE_X_MIN } else { x.kt() }, clamped }
}

/// Relative violation of local detailed balance for a pair of opposing rates.
///
/// `k_forward` moves the system from the configuration with energy `e_from`
/// to the one with energy `e_to`; `k_backward` is the reverse jump. The
/// returned value is `|k_f / k_b · e^{(e_to − e_from)} − 1|`, evaluated in log
/// space so that rates in the deep thermal tail keep full precision.
pub fn check_local_detailed_balance(
    k_forward: f64,
    k_backward: f64,
    e_from: Energy,
    e_to: Energy,
) -> Result<f64, ThermoError> {
    for k in [k_forward, k_backward] {
        if !(k > 0.0) || !k.is_finite() {
            return Err(ThermoError::NonPositiveRate(k));
        }
    }
    let log_ratio = k_forward.ln() - k_backward.ln() + (e_to.kt() - e_from.kt());
    Ok(log_ratio.exp_m1().abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fermi_dirac_reference_points() {
        let mu = Energy::from_kt(3.0);
        assert_eq!(fermi_dirac(mu, mu).unwrap(), 0.5);
        let v = fermi_dirac(Energy::from_kt(4.0), mu).unwrap();
        assert!((v - 0.268_941_421_369_995).abs() < 1e-12);
        assert!(fermi_dirac(Energy::from_kt(43.0), mu).unwrap() < 1e-17);
    }

    #[test]
    fn fermi_dirac_is_stable_far_out() {
        assert_eq!(fermi(800.0), 0.0);
        assert_eq!(fermi(-800.0), 1.0);
        assert!(fermi(700.0) > 0.0);
    }

    #[test]
    fn non_finite_energy_rejected() {
        assert!(Energy::new(f64::NAN).is_err());
        assert!(Energy::new(f64::INFINITY).is_err());
        let big = Energy::from_kt(f64::MAX);
        let neg = Energy::from_kt(-f64::MAX);
        assert!(fermi_dirac(big, neg).is_err());
    }

    #[test]
    fn bose_einstein_reference_points() {
        let one = bose_einstein(Energy::from_kt(2f64.ln()));
        assert!((one.value - 1.0).abs() < 1e-14);
        assert!(!one.clamped);
        assert!(bose_einstein(Energy::from_kt(40.0)).value < 1e-17);
        let tiny = bose_einstein(Energy::from_kt(1e-8));
        assert!(tiny.clamped);
        assert_eq!(tiny.argument, BOSE_X_MIN);
        assert!((tiny.value - 1.0 / BOSE_X_MIN.exp_m1()).abs() < 1e-6);
    }

    #[test]
    fn bose_einstein_strictly_decreasing_on_log_grid() {
        let grid: Vec<f64> = (0..=80).map(|i| 1e-5 * 10f64.powf(i as f64 * 0.07)).collect();
        for w in grid.windows(2) {
            let hi = bose_einstein(Energy::from_kt(w[0])).value;
            let lo = bose_einstein(Energy::from_kt(w[1])).value;
            assert!(hi > lo, "not decreasing between {} and {}", w[0], w[1]);
        }
    }

    #[test]
    fn detailed_balance_examples() {
        let e = Energy::from_kt(1.3);
        assert_eq!(check_local_detailed_balance(0.4, 0.4, e, e).unwrap(), 0.0);
        let r = check_local_detailed_balance(2.0, 1.0, Energy::ZERO, Energy::from_kt(-(2f64.ln()))).unwrap();
        assert!(r < 1e-15);
        assert!(check_local_detailed_balance(0.0, 1.0, e, e).is_err());
        assert!(check_local_detailed_balance(1.0, -1.0, e, e).is_err());
    }

    #[test]
    fn unit_system_is_consistent() {
        let u = UnitSystem::room_temperature();
        assert_eq!(u.thermal_voltage_volt * u.electron_charge_coulomb, u.thermal_energy_joule);
        assert!((u.thermal_voltage_volt - 0.026).abs() < 0.001);
        assert!((u.unit_time_second - 25e-15).abs() < 1.5e-15);
        for v in [
            u.temperature_kelvin,
            u.thermal_energy_joule,
            u.thermal_voltage_volt,
            u.unit_time_second,
            u.electron_charge_coulomb,
        ] {
            assert!(v > 0.0);
        }
        assert!((u.thermal_to_volts(u.volts_to_thermal(5.0)) - 5.0).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn particle_hole_symmetry(eps in -700.0f64..700.0, mu in -50.0f64..50.0) {
            let a = fermi_dirac(Energy::from_kt(eps), Energy::from_kt(mu)).unwrap();
            let b = fermi_dirac(Energy::from_kt(2.0 * mu - eps), Energy::from_kt(mu)).unwrap();
            proptest::prop_assert!((a + b - 1.0).abs() < 1e-12);
        }

        #[test]
        fn fermi_dirac_monotone(x in -30.0f64..30.0, dx in 1e-3f64..5.0) {
            let a = fermi_dirac(Energy::from_kt(x), Energy::ZERO).unwrap();
            let b = fermi_dirac(Energy::from_kt(x + dx), Energy::ZERO).unwrap();
            proptest::prop_assert!(b <= a);
            proptest::prop_assert!(a > 0.0 && a < 1.0);
        }
    }
}
