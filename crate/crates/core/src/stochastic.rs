//! Exact stochastic simulation of the occupancy chains and a stochastic
//! relaxation of the CSVAC output voltage driven by sampled currents.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuits::{csvac_network, csvac_rates, resistor_current, CircuitError, CsvacConfig, CsvacRates};
use crate::device::{MasterEquation, RateMatrix, Transition};

/// Generator used for every stochastic result; stored alongside outputs.
pub const RNG_ALGORITHM: &str = "rand_chacha::ChaCha8Rng seeded via SeedableRng::seed_from_u64";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StochasticError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("initial state {0} out of range")]
    InvalidState(usize),
    #[error("a positive time limit or event limit is required")]
    NoLimit,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimulationLimits {
    pub total_time: Option<f64>,
    pub max_events: Option<u64>,
    /// Keep the full event list (memory grows with the event count).
    pub record_events: bool,
}

impl SimulationLimits {
    pub fn time(total_time: f64) -> Self {
        Self { total_time: Some(total_time), max_events: None, record_events: true }
    }

    pub fn events(max_events: u64) -> Self {
        Self { total_time: None, max_events: Some(max_events), record_events: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    pub rng_algorithm: String,
    pub initial_state: usize,
    pub final_state: usize,
    /// Empty unless events were recorded.
    pub events: Vec<Event>,
    pub n_events: u64,
    pub total_time: f64,
    /// Net signed event count per labeled channel.
    pub channel_counts: BTreeMap<String, i64>,
    /// Time spent in each state.
    pub dwell_time: Vec<f64>,
    /// The chain reached a state with no way out before the limit.
    pub absorbed: bool,
}

impl Trajectory {
    /// Fraction of time spent in each state.
    pub fn state_distribution(&self) -> Vec<f64> {
        self.dwell_time.iter().map(|t| t / self.total_time).collect()
    }

    /// Fraction of time bit-encoded level `level` was occupied.
    pub fn level_occupancy(&self, level: usize) -> f64 {
        self.dwell_time.iter().enumerate().filter(|(s, _)| s >> level & 1 == 1).map(|(_, t)| t).sum::<f64>()
            / self.total_time
    }
}

struct Sampler<'a> {
    transitions: &'a [Transition],
    /// Per state: outgoing transition indices and their total rate.
    outgoing: Vec<(Vec<usize>, f64)>,
    labels: Vec<Option<(usize, i64)>>,
    label_names: Vec<String>,
}

impl<'a> Sampler<'a> {
    fn new(net: &'a MasterEquation) -> Self {
        let mut outgoing = vec![(Vec::new(), 0.0); net.n_states];
        let mut label_names: Vec<String> = Vec::new();
        let mut labels = Vec::with_capacity(net.transitions.len());
        for (i, t) in net.transitions.iter().enumerate() {
            if t.rate > 0.0 {
                outgoing[t.from].0.push(i);
                outgoing[t.from].1 += t.rate;
            }
            labels.push(t.channel.as_ref().map(|c| {
                let idx = match label_names.iter().position(|l| *l == c.label) {
                    Some(p) => p,
                    None => {
                        label_names.push(c.label.clone());
                        label_names.len() - 1
                    }
                };
                (idx, c.sign as i64)
            }));
        }
        Self { transitions: &net.transitions, outgoing, labels, label_names }
    }

    fn run<R: Rng>(&self, initial_state: usize, limits: &SimulationLimits, rng: &mut R, seed: u64) -> Trajectory {
        let n = self.outgoing.len();
        let mut counts = vec![0i64; self.label_names.len()];
        let mut dwell = vec![0.0; n];
        let mut events = Vec::new();
        let mut t = 0.0;
        let mut state = initial_state;
        let mut n_events = 0u64;
        let mut absorbed = false;
        let t_end = limits.total_time.unwrap_or(f64::INFINITY);
        let max_events = limits.max_events.unwrap_or(u64::MAX);
        while n_events < max_events {
            let (ref out, total) = self.outgoing[state];
            if total <= 0.0 {
                absorbed = true;
                if t_end.is_finite() {
                    dwell[state] += t_end - t;
                    t = t_end;
                }
                break;
            }
            // 1 − U lies in (0, 1], so the logarithm is finite.
            let dt = -(1.0 - rng.random::<f64>()).ln() / total;
            if t + dt >= t_end {
                dwell[state] += t_end - t;
                t = t_end;
                break;
            }
            let mut target = rng.random::<f64>() * total;
            let mut chosen = *out.last().unwrap();
            for &i in out {
                target -= self.transitions[i].rate;
                if target < 0.0 {
                    chosen = i;
                    break;
                }
            }
            dwell[state] += dt;
            t += dt;
            let tr = &self.transitions[chosen];
            if let Some((l, sign)) = self.labels[chosen] {
                counts[l] += sign;
            }
            if limits.record_events {
                events.push(Event { time: t, from: tr.from, to: tr.to });
            }
            state = tr.to;
            n_events += 1;
        }
        Trajectory {
            seed,
            rng_algorithm: RNG_ALGORITHM.to_string(),
            initial_state,
            final_state: state,
            events,
            n_events,
            total_time: t,
            channel_counts: self.label_names.iter().cloned().zip(counts).collect(),
            dwell_time: dwell,
            absorbed,
        }
    }
}

fn check_start(net: &MasterEquation, initial_state: usize, limits: &SimulationLimits) -> Result<(), StochasticError> {
    if initial_state >= net.n_states {
        return Err(StochasticError::InvalidState(initial_state));
    }
    let time_ok = limits.total_time.is_some_and(|t| t > 0.0 && t.is_finite());
    let events_ok = limits.max_events.is_some_and(|n| n > 0);
    if !time_ok && !events_ok {
        return Err(StochasticError::NoLimit);
    }
    Ok(())
}

/// Samples a labeled master equation. Deterministic for a given seed.
pub fn simulate(
    net: &MasterEquation,
    initial_state: usize,
    limits: SimulationLimits,
    seed: u64,
) -> Result<Trajectory, StochasticError> {
    check_start(net, initial_state, &limits)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Sampler::new(net).run(initial_state, &limits, &mut rng, seed))
}

/// Samples the chain defined by a generator for `total_time`, recording
/// every event. Each jump `i -> j` is its own counting channel `"i->j"`.
pub fn gillespie_simulate(
    generator: &RateMatrix,
    initial_state: usize,
    total_time: f64,
    seed: u64,
) -> Result<Trajectory, StochasticError> {
    let n = generator.dimension();
    let mut transitions = Vec::new();
    for from in 0..n {
        for to in 0..n {
            let k = generator.rate(from, to);
            if from != to && k > 0.0 {
                transitions.push(Transition::counted(from, to, k, &format!("{from}->{to}"), 1));
            }
        }
    }
    let net = MasterEquation { n_states: n, n_levels: n.trailing_zeros() as usize, transitions };
    simulate(&net, initial_state, SimulationLimits::time(total_time), seed)
}

/// Net electron flux through a counting channel, per unit time.
pub fn empirical_current(traj: &Trajectory, channel: &str) -> f64 {
    if traj.total_time <= 0.0 {
        return 0.0;
    }
    traj.channel_counts.get(channel).copied().unwrap_or(0) as f64 / traj.total_time
}

/// Net electron flux from both levels into the output node minus the load
/// current, estimated from the time the batch spent in each state. This is
/// the conditional expectation of the event-count estimator given the
/// visited states and has much smaller variance.
fn flux_into_output(r: &CsvacRates, gamma_l: f64, traj: &Trajectory) -> f64 {
    let n_p = traj.level_occupancy(0);
    let n_n = traj.level_occupancy(1);
    let from_p = r.p_source.1 * n_p - r.p_source.0 * (1.0 - n_p);
    let from_n = r.n_source.1 * n_n - r.n_source.0 * (1.0 - n_n);
    from_p + from_n - resistor_current(r.mu_g, r.mu_s, gamma_l)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxationOptions {
    /// Current scale of `step_size`, in units of q·Γ_L.
    pub current_unit: f64,
    /// Initial step, V_T per unit net current.
    pub step_size: f64,
    /// Gillespie events per current estimate.
    pub batch_events: u64,
    /// Step sizes decay as step_size / sqrt(1 + t / decay_scale).
    pub decay_scale: f64,
    /// Smoothed |ΔV| threshold for convergence, V_T.
    pub tolerance: f64,
    /// Weight of the newest update in the smoothed |ΔV|.
    pub smoothing: f64,
    pub min_iterations: usize,
    pub max_iterations: usize,
    /// Iterations run after convergence; their mean is the final estimate.
    pub averaging_window: usize,
}

impl Default for RelaxationOptions {
    fn default() -> Self {
        Self {
            current_unit: 1.0,
            step_size: 0.5,
            batch_events: 2000,
            decay_scale: 50.0,
            tolerance: 0.05,
            smoothing: 0.1,
            min_iterations: 40,
            max_iterations: 3000,
            averaging_window: 150,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationRun {
    pub seed: u64,
    pub rng_algorithm: String,
    pub v_in: f64,
    pub initial_v_out: f64,
    pub iterates: Vec<f64>,
    pub converged: bool,
    pub final_v_out: f64,
}

/// Relaxes the output voltage with default options apart from the step size
/// and batch length.
pub fn stochastic_vout_relaxation(
    cfg: &CsvacConfig,
    v_in: f64,
    seed: u64,
    step_size: f64,
    batch_events: u64,
) -> Result<RelaxationRun, StochasticError> {
    let opts = RelaxationOptions { step_size, batch_events, ..RelaxationOptions::default() };
    stochastic_vout_relaxation_with(cfg, v_in, seed, None, &opts)
}

/// Robbins-Monro relaxation of the output voltage. Starting from a value
/// drawn uniformly on [−V_d, V_d] (or `initial_v_out`), each iteration
/// samples a batch of events at the current voltage, estimates the net
/// electron flux into the output node and moves the voltage against it:
/// surplus electrons raise the node's chemical potential and so lower its
/// voltage. The final estimate averages the last iterates.
pub fn stochastic_vout_relaxation_with(
    cfg: &CsvacConfig,
    v_in: f64,
    seed: u64,
    initial_v_out: Option<f64>,
    opts: &RelaxationOptions,
) -> Result<RelaxationRun, StochasticError> {
    cfg.validate()?;
    if !(opts.step_size > 0.0) || opts.batch_events == 0 || opts.max_iterations == 0 || opts.averaging_window == 0 {
        return Err(StochasticError::InvalidParameter(
            "step_size, batch_events, max_iterations and averaging_window must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v_max = cfg.v_d;
    let initial = match initial_v_out {
        Some(v) => v.clamp(-v_max, v_max),
        None => rng.random_range(-v_max..=v_max),
    };
    let mut v = initial;
    let mut state = 0usize;
    let mut iterates = vec![v];
    let limits = SimulationLimits::events(opts.batch_events);
    let mut smoothed: Option<f64> = None;
    let mut converged_at = None;
    let mut it = 0;
    while it < opts.max_iterations {
        let rates = csvac_rates(cfg, v_in, v, true)?;
        let net = csvac_network(cfg, v_in, v, true)?;
        let traj = Sampler::new(&net).run(state, &limits, &mut rng, seed);
        state = traj.final_state;
        let into_node = flux_into_output(&rates, cfg.gamma_l, &traj);
        let eta = opts.step_size / (1.0 + it as f64 / opts.decay_scale).sqrt();
        let next = (v - eta * into_node / (opts.current_unit * cfg.gamma_l)).clamp(-v_max, v_max);
        let step = (next - v).abs();
        v = next;
        iterates.push(v);
        it += 1;
        match converged_at {
            // Averaging phase after convergence.
            Some(c) if it >= c + opts.averaging_window => break,
            Some(_) => {}
            None => {
                let s = match smoothed {
                    Some(s) => (1.0 - opts.smoothing) * s + opts.smoothing * step,
                    None => step,
                };
                smoothed = Some(s);
                if it >= opts.min_iterations && s < opts.tolerance {
                    converged_at = Some(it);
                }
            }
        }
    }
    let converged = converged_at.is_some();
    let w = opts.averaging_window.min(iterates.len());
    let final_v_out = iterates[iterates.len() - w..].iter().sum::<f64>() / w as f64;
    Ok(RelaxationRun {
        seed,
        rng_algorithm: RNG_ALGORITHM.to_string(),
        v_in,
        initial_v_out: initial,
        iterates,
        converged,
        final_v_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{
        build_two_state_generator, electrode_current, steady_state, two_state_network, Reservoir, TransistorLevel,
    };

    fn biased() -> (TransistorLevel, Vec<Reservoir>) {
        let level = TransistorLevel::nmos(0.0, 0.2).unwrap();
        let res = vec![Reservoir::at_voltage("d", 15.0).unwrap(), Reservoir::at_voltage("s", 0.0).unwrap()];
        (level, res)
    }

    #[test]
    fn seed_determinism() {
        let (level, res) = biased();
        let m = build_two_state_generator(&level, 0.0, &res).unwrap();
        let a = gillespie_simulate(&m, 0, 500.0, 9).unwrap();
        let b = gillespie_simulate(&m, 0, 500.0, 9).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = gillespie_simulate(&m, 0, 500.0, 10).unwrap();
        assert_ne!(a.events, c.events);
        for w in a.events.windows(2) {
            assert!(w[1].time > w[0].time);
        }
    }

    #[test]
    fn absorbing_state_ends_early() {
        let m = RateMatrix::from_transitions(2, &[Transition::new(0, 1, 1.0)]).unwrap();
        let t = gillespie_simulate(&m, 0, 1e6, 1).unwrap();
        assert!(t.absorbed);
        assert_eq!(t.n_events, 1);
        assert_eq!(t.final_state, 1);
    }

    #[test]
    fn occupancy_matches_steady_state() {
        let (level, res) = biased();
        let net = two_state_network(&level, 0.0, &res).unwrap();
        let n = steady_state(&net.generator().unwrap()).unwrap().mean_occupancy_per_level[0];
        let t = simulate(&net, 0, SimulationLimits::events(1_000_000), 4).unwrap();
        assert!((t.level_occupancy(0) - n).abs() < 0.01 * n);
    }

    #[test]
    fn empirical_current_matches_analytic() {
        let (level, res) = biased();
        let net = two_state_network(&level, 0.0, &res).unwrap();
        let n = steady_state(&net.generator().unwrap()).unwrap().mean_occupancy_per_level[0];
        let j = electrode_current(&level, 0.0, &res[0], n).unwrap();
        let t = simulate(&net, 0, SimulationLimits::events(1_000_000), 5).unwrap();
        let jd = empirical_current(&t, "d");
        let js = empirical_current(&t, "s");
        assert!(((jd - j) / j).abs() < 0.02, "{jd} vs {j}");
        // Net inflow can only differ by the final occupancy, one electron.
        assert!((jd + js).abs() * t.total_time <= 1.0 + 1e-9);
    }

    #[test]
    fn relaxation_starting_at_root_stays() {
        let cfg = CsvacConfig::default();
        let root = crate::circuits::solve_csvac(&cfg, 0.0).unwrap().v_out;
        let run = stochastic_vout_relaxation_with(&cfg, 0.0, 1, Some(root), &RelaxationOptions::default()).unwrap();
        assert!(run.converged);
        let o = RelaxationOptions::default();
        assert!(run.iterates.len() > o.min_iterations + o.averaging_window);
        assert!(run.iterates.len() < o.max_iterations);
        assert!((run.final_v_out - root).abs() < 0.1);
    }
}
