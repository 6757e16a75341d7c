//! Complementary symmetric amplifier: a PMOS and an NMOS level sharing the
//! output node `s`, with drains at ∓V_d and a load from `s` to ground.
//!
//! The two levels form a joint four-state chain indexed by `n_P + 2·n_N`:
//! 0 = (0,0), 1 = (1,0), 2 = (0,1), 3 = (1,1). Besides tunneling to their
//! electrodes, the levels exchange an electron directly, (1,0) ↔ (0,1), with
//! Bose-Einstein rates. There is no interaction energy between the levels.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{
    power_dissipation, require_positive, resistor_current, CircuitError, CircuitState, TransistorFlow,
    BALANCE_TOLERANCE,
};
use crate::device::{
    level_energy, level_marginals, steady_state, MasterEquation, RateMatrix, TransistorLevel, Transition,
};
use crate::roots::find_root;
use crate::units::{bose, fermi, Energy};

/// Counting channel of the load in [`csvac_network`]; +1 per electron that
/// leaves the output node towards ground.
pub const LOAD_CHANNEL: &str = "s->g";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsvacConfig {
    /// Supplies sit at ±v_d.
    pub v_d: f64,
    pub gamma: f64,
    pub gamma_l: f64,
    pub nmos_reference_energy: Energy,
    pub pmos_reference_energy: Energy,
}

impl Default for CsvacConfig {
    fn default() -> Self {
        Self::symmetric(15.0, 0.2, 0.01)
    }
}

impl CsvacConfig {
    /// Symmetric biasing: ε_N⁰ = V_d and ε_P⁰ = 0.
    pub fn symmetric(v_d: f64, gamma: f64, gamma_l: f64) -> Self {
        Self {
            v_d,
            gamma,
            gamma_l,
            nmos_reference_energy: Energy::new(v_d).unwrap_or(Energy::ZERO),
            pmos_reference_energy: Energy::ZERO,
        }
    }

    /// Same circuit at another supply voltage, keeping the symmetric bias.
    pub fn with_supply(&self, v_d: f64) -> Self {
        let shift = self.nmos_reference_energy.kt() - self.v_d;
        Self { v_d, nmos_reference_energy: Energy::new(v_d + shift).unwrap_or(Energy::ZERO), ..*self }
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self { gamma, ..*self }
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        require_positive("v_d", self.v_d)?;
        require_positive("gamma", self.gamma)?;
        require_positive("gamma_l", self.gamma_l)
    }

    pub fn pmos(&self) -> Result<TransistorLevel, CircuitError> {
        Ok(TransistorLevel::pmos(self.pmos_reference_energy.kt(), self.gamma)?)
    }

    pub fn nmos(&self) -> Result<TransistorLevel, CircuitError> {
        Ok(TransistorLevel::nmos(self.nmos_reference_energy.kt(), self.gamma)?)
    }
}

/// Joint occupancy of the two levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct State {
    pub p: bool,
    pub n: bool,
}

impl State {
    pub const ALL: [State; 4] = [
        State { p: false, n: false },
        State { p: true, n: false },
        State { p: false, n: true },
        State { p: true, n: true },
    ];

    pub fn index(self) -> usize {
        self.p as usize + 2 * self.n as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self { p: i & 1 == 1, n: i & 2 == 2 }
    }
}

/// Direct transfer rates between the levels. `k_pn` moves the electron from
/// N to P, `k_np` from P to N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExchangeRates {
    pub k_pn: f64,
    pub k_np: f64,
    pub clamped: bool,
}

/// Exchange rates with Bose-Einstein occupation of the energy gap: the jump
/// down in energy is stimulated emission (1 + o), the jump up is absorption
/// (o).
pub fn inter_transistor_rates(eps_p: Energy, eps_n: Energy, gamma: f64) -> Result<ExchangeRates, CircuitError> {
    require_positive("gamma", gamma)?;
    let x = eps_p.kt() - eps_n.kt();
    Ok(if x > 0.0 {
        let (o, clamped) = bose(x);
        ExchangeRates { k_pn: gamma * o, k_np: gamma * (1.0 + o), clamped }
    } else {
        let (o, clamped) = bose(-x);
        ExchangeRates { k_pn: gamma * (1.0 + o), k_np: gamma * o, clamped }
    })
}

/// All transition rates of the circuit at a given input and output voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvacRates {
    pub eps_p: f64,
    pub eps_n: f64,
    pub mu_dp: f64,
    pub mu_dn: f64,
    pub mu_s: f64,
    pub mu_g: f64,
    /// (fill, empty) of P from/to its drain and from/to the source.
    pub p_drain: (f64, f64),
    pub p_source: (f64, f64),
    pub n_drain: (f64, f64),
    pub n_source: (f64, f64),
    pub exchange: ExchangeRates,
    /// Electron transfers through the load, s→g and g→s.
    pub load: (f64, f64),
}

fn fill_empty(gamma: f64, eps: f64, mu: f64) -> (f64, f64) {
    (gamma * fermi(eps - mu), gamma * fermi(mu - eps))
}

pub fn csvac_rates(cfg: &CsvacConfig, v_in: f64, v_out: f64, exchange: bool) -> Result<CsvacRates, CircuitError> {
    cfg.validate()?;
    let eps_p = level_energy(&cfg.pmos()?, v_in).kt();
    let eps_n = level_energy(&cfg.nmos()?, v_in).kt();
    let (mu_dp, mu_dn, mu_s, mu_g) = (-cfg.v_d, cfg.v_d, -v_out, 0.0);
    let exchange = if exchange {
        inter_transistor_rates(Energy::from_kt(eps_p), Energy::from_kt(eps_n), cfg.gamma)?
    } else {
        ExchangeRates { k_pn: 0.0, k_np: 0.0, clamped: false }
    };
    // Split the resistor flux into opposing Poisson streams whose difference
    // is the resistor current and whose ratio obeys detailed balance.
    let load = (0.25 * cfg.gamma_l * fermi(mu_g - mu_s), 0.25 * cfg.gamma_l * fermi(mu_s - mu_g));
    Ok(CsvacRates {
        eps_p,
        eps_n,
        mu_dp,
        mu_dn,
        mu_s,
        mu_g,
        p_drain: fill_empty(cfg.gamma, eps_p, mu_dp),
        p_source: fill_empty(cfg.gamma, eps_p, mu_s),
        n_drain: fill_empty(cfg.gamma, eps_n, mu_dn),
        n_source: fill_empty(cfg.gamma, eps_n, mu_s),
        exchange,
        load,
    })
}

impl CsvacRates {
    fn transitions(&self) -> Vec<Transition> {
        let mut t = Vec::with_capacity(28);
        for s in State::ALL {
            let i = s.index();
            let flip_p = State { p: !s.p, ..s }.index();
            let flip_n = State { n: !s.n, ..s }.index();
            for (label, (fill, empty)) in [("dP->P", self.p_drain), ("s->P", self.p_source)] {
                t.push(if s.p {
                    Transition::counted(i, flip_p, empty, label, -1)
                } else {
                    Transition::counted(i, flip_p, fill, label, 1)
                });
            }
            for (label, (fill, empty)) in [("dN->N", self.n_drain), ("s->N", self.n_source)] {
                t.push(if s.n {
                    Transition::counted(i, flip_n, empty, label, -1)
                } else {
                    Transition::counted(i, flip_n, fill, label, 1)
                });
            }
            t.push(Transition::counted(i, i, self.load.0, LOAD_CHANNEL, 1));
            t.push(Transition::counted(i, i, self.load.1, LOAD_CHANNEL, -1));
        }
        let (p_only, n_only) = (State { p: true, n: false }.index(), State { p: false, n: true }.index());
        if self.exchange.k_np > 0.0 || self.exchange.k_pn > 0.0 {
            t.push(Transition::counted(p_only, n_only, self.exchange.k_np, "P->N", 1));
            t.push(Transition::counted(n_only, p_only, self.exchange.k_pn, "P->N", -1));
        }
        t
    }

    fn generator(&self) -> Result<RateMatrix, CircuitError> {
        let mut r = DMatrix::zeros(4, 4);
        let mut add = |from: usize, to: usize, k: f64| {
            r[(to, from)] += k;
            r[(from, from)] -= k;
        };
        for s in State::ALL {
            let i = s.index();
            let flip_p = State { p: !s.p, ..s }.index();
            let flip_n = State { n: !s.n, ..s }.index();
            if s.p {
                add(i, flip_p, self.p_drain.1 + self.p_source.1);
            } else {
                add(i, flip_p, self.p_drain.0 + self.p_source.0);
            }
            if s.n {
                add(i, flip_n, self.n_drain.1 + self.n_source.1);
            } else {
                add(i, flip_n, self.n_drain.0 + self.n_source.0);
            }
        }
        add(1, 2, self.exchange.k_np);
        add(2, 1, self.exchange.k_pn);
        Ok(RateMatrix::new(r)?)
    }
}

/// Labeled master equation of the circuit at fixed input and output
/// voltages. Channels: `dP->P`, `s->P`, `dN->N`, `s->N` (+1 when the level
/// fills from that electrode), `P->N` for the exchange, and [`LOAD_CHANNEL`]
/// as state-preserving events.
pub fn csvac_network(cfg: &CsvacConfig, v_in: f64, v_out: f64, exchange: bool) -> Result<MasterEquation, CircuitError> {
    let rates = csvac_rates(cfg, v_in, v_out, exchange)?;
    Ok(MasterEquation { n_states: 4, n_levels: 2, transitions: rates.transitions() })
}

/// Four-state generator including the exchange channel.
pub fn build_csvac_generator(cfg: &CsvacConfig, v_in: f64, v_out: f64) -> Result<RateMatrix, CircuitError> {
    csvac_rates(cfg, v_in, v_out, true)?.generator()
}

struct Evaluation {
    rates: CsvacRates,
    probabilities: Vec<f64>,
    n_p: f64,
    n_n: f64,
}

impl Evaluation {
    fn new(cfg: &CsvacConfig, v_in: f64, v_out: f64, exchange: bool) -> Result<Self, CircuitError> {
        let rates = csvac_rates(cfg, v_in, v_out, exchange)?;
        let p = steady_state(&rates.generator()?)?.occupation_probabilities;
        let m = level_marginals(&p, 2);
        Ok(Self { rates, n_p: m[0], n_n: m[1], probabilities: p })
    }

    fn inflow((fill, empty): (f64, f64), n: f64) -> f64 {
        fill * (1.0 - n) - empty * n
    }

    /// Net electron flux from the levels into the output node.
    fn node_inflow(&self) -> f64 {
        -Self::inflow(self.rates.p_source, self.n_p) - Self::inflow(self.rates.n_source, self.n_n)
    }

    fn load(&self, cfg: &CsvacConfig) -> f64 {
        resistor_current(self.rates.mu_g, self.rates.mu_s, cfg.gamma_l)
    }

    fn balance(&self, cfg: &CsvacConfig) -> f64 {
        self.load(cfg) - self.node_inflow()
    }
}

/// Circuit state with the output node held at `v_out`. The `residual` field
/// reports how far this is from the self-consistent output voltage.
pub fn csvac_state_at(cfg: &CsvacConfig, v_in: f64, v_out: f64, exchange: bool) -> Result<CircuitState, CircuitError> {
    let e = Evaluation::new(cfg, v_in, v_out, exchange)?;
    let r = &e.rates;
    let j_dp = Evaluation::inflow(r.p_drain, e.n_p);
    let j_dn = Evaluation::inflow(r.n_drain, e.n_n);
    let j_ps = -Evaluation::inflow(r.p_source, e.n_p);
    let j_ns = -Evaluation::inflow(r.n_source, e.n_n);
    let j_ex = r.exchange.k_np * e.probabilities[1] - r.exchange.k_pn * e.probabilities[2];
    let mut currents = BTreeMap::new();
    currents.insert("dP->P".to_string(), j_dp);
    currents.insert("dN->N".to_string(), j_dn);
    currents.insert("P->s".to_string(), j_ps);
    currents.insert("N->s".to_string(), j_ns);
    currents.insert("P->N".to_string(), j_ex);
    currents.insert("CSVAC->RL".to_string(), e.load(cfg));
    let mut state = CircuitState {
        v_in,
        v_out,
        transistors: vec![
            TransistorFlow {
                name: "P".into(),
                occupancy: e.n_p,
                drain_inflow: j_dp,
                source_outflow: j_ps,
                drain_potential: r.mu_dp,
                source_potential: r.mu_s,
            },
            TransistorFlow {
                name: "N".into(),
                occupancy: e.n_n,
                drain_inflow: j_dn,
                source_outflow: j_ns,
                drain_potential: r.mu_dn,
                source_potential: r.mu_s,
            },
        ],
        currents,
        power: Default::default(),
        residual: e.balance(cfg),
        ohmic_v_out: None,
        exchange_clamped: r.exchange.clamped,
    };
    state.power = power_dissipation(&state);
    Ok(state)
}

/// Self-consistent output voltage: the load carries exactly the electron
/// flux the two levels deliver to the output node.
pub fn solve_csvac(cfg: &CsvacConfig, v_in: f64) -> Result<CircuitState, CircuitError> {
    solve_csvac_with(cfg, v_in, true)
}

pub fn solve_csvac_with(cfg: &CsvacConfig, v_in: f64, exchange: bool) -> Result<CircuitState, CircuitError> {
    cfg.validate()?;
    let mut failure = None;
    let balance = |v: f64| match Evaluation::new(cfg, v_in, v, exchange) {
        Ok(e) => e.balance(cfg),
        Err(err) => {
            failure.get_or_insert(err);
            f64::NAN
        }
    };
    let root = find_root(balance, -cfg.v_d, cfg.v_d, 1e-3 * BALANCE_TOLERANCE);
    if let Some(err) = failure {
        return Err(err);
    }
    let root = root.map_err(|source| CircuitError::Root { v_in, source })?;
    if root.residual.abs() > BALANCE_TOLERANCE {
        return Err(CircuitError::Residual { v_in, residual: root.residual });
    }
    csvac_state_at(cfg, v_in, root.x, exchange)
}
