//! Generic continuous-time master equations over a small set of occupancy
//! states, and their stationary solution.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::DeviceError;

/// Tolerance on column sums used when validating a generator.
pub const GENERATOR_TOLERANCE: f64 = 1e-12;

/// Identifies a counting channel: an event on this channel moves `sign`
/// electrons through the named connection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelTag {
    pub label: String,
    pub sign: i8,
}

/// A single jump `from -> to` with a fixed rate. `from == to` is allowed and
/// represents a counting-only event (e.g. a resistor transfer that does not
/// change any level occupancy); such self-loops do not enter the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub rate: f64,
    pub channel: Option<ChannelTag>,
}

impl Transition {
    pub fn new(from: usize, to: usize, rate: f64) -> Self {
        Self { from, to, rate, channel: None }
    }

    pub fn counted(from: usize, to: usize, rate: f64, label: &str, sign: i8) -> Self {
        Self { from, to, rate, channel: Some(ChannelTag { label: label.to_string(), sign }) }
    }
}

/// Generator of a master equation `dp/dt = R p`.
///
/// Convention: `R[(to, from)]` is the rate of the jump `from -> to`, and each
/// diagonal entry is minus the total exit rate of its state, so columns sum
/// to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    entries: DMatrix<f64>,
}

impl RateMatrix {
    /// Wraps a matrix after checking the generator property.
    pub fn new(entries: DMatrix<f64>) -> Result<Self, DeviceError> {
        let m = Self { entries };
        m.validate()?;
        Ok(m)
    }

    pub fn from_transitions(n_states: usize, transitions: &[Transition]) -> Result<Self, DeviceError> {
        let mut r = DMatrix::zeros(n_states, n_states);
        for t in transitions {
            if t.from >= n_states || t.to >= n_states {
                return Err(DeviceError::InvalidState { index: t.from.max(t.to), n_states });
            }
            if !(t.rate >= 0.0) || !t.rate.is_finite() {
                return Err(DeviceError::InvalidRate(t.rate));
            }
            if t.from != t.to {
                r[(t.to, t.from)] += t.rate;
                r[(t.from, t.from)] -= t.rate;
            }
        }
        Self::new(r)
    }

    pub fn dimension(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Rate of the jump `from -> to`.
    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.entries[(to, from)]
    }

    pub fn exit_rate(&self, state: usize) -> f64 {
        -self.entries[(state, state)]
    }

    /// Largest column sum relative to the largest entry.
    pub fn column_sum_residual(&self) -> f64 {
        let scale = self.entries.amax().max(f64::MIN_POSITIVE);
        self.entries.column_iter().map(|c| c.sum().abs() / scale).fold(0.0, f64::max)
    }

    fn validate(&self) -> Result<(), DeviceError> {
        let n = self.entries.nrows();
        if n == 0 || self.entries.ncols() != n {
            return Err(DeviceError::NotSquare(n, self.entries.ncols()));
        }
        for j in 0..n {
            for i in 0..n {
                let v = self.entries[(i, j)];
                if !v.is_finite() || (i != j && v < 0.0) {
                    return Err(DeviceError::InvalidRate(v));
                }
            }
        }
        let res = self.column_sum_residual();
        if res > GENERATOR_TOLERANCE {
            return Err(DeviceError::NotAGenerator(res));
        }
        Ok(())
    }
}

/// A master equation together with its labeled jumps, kept so that
/// stochastic samplers can count events per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterEquation {
    pub n_states: usize,
    /// Number of single-occupancy levels encoded in the state index: level
    /// `k` is occupied iff bit `k` of the index is set.
    pub n_levels: usize,
    pub transitions: Vec<Transition>,
}

impl MasterEquation {
    pub fn generator(&self) -> Result<RateMatrix, DeviceError> {
        RateMatrix::from_transitions(self.n_states, &self.transitions)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub occupation_probabilities: Vec<f64>,
    pub mean_occupancy_per_level: Vec<f64>,
}

impl SteadyState {
    /// Probability that level `k` is occupied, for bit-encoded states.
    pub fn level_occupancy(&self, level: usize) -> f64 {
        self.mean_occupancy_per_level[level]
    }
}

/// Marginal occupancy of each bit-encoded level.
pub fn level_marginals(p: &[f64], n_levels: usize) -> Vec<f64> {
    (0..n_levels).map(|k| p.iter().enumerate().filter(|(s, _)| s >> k & 1 == 1).map(|(_, v)| v).sum()).collect()
}

/// Stationary distribution of a generator.
///
/// Solves `R p = 0` with the normalization row `1ᵀ p = 1` appended, in the
/// least-squares sense via SVD. A second (near-)null direction means the
/// stationary state is not unique and is reported as an error.
pub fn steady_state(m: &RateMatrix) -> Result<SteadyState, DeviceError> {
    let n = m.dimension();
    let n_levels = n.trailing_zeros() as usize;
    let p = stationary_vector(m)?;
    let mean_occupancy_per_level = if n.is_power_of_two() { level_marginals(&p, n_levels) } else { Vec::new() };
    Ok(SteadyState { occupation_probabilities: p, mean_occupancy_per_level })
}

fn stationary_vector(m: &RateMatrix) -> Result<Vec<f64>, DeviceError> {
    let n = m.dimension();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let scale = m.entries.amax();
    if scale == 0.0 {
        return Err(DeviceError::RankDeficient { smallest: 0.0 });
    }
    let mut a = DMatrix::zeros(n + 1, n);
    a.view_mut((0, 0), (n, n)).copy_from(&(&m.entries / scale));
    a.row_mut(n).fill(1.0);
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;

    // A unique stationary state leaves the augmented system with full
    // column rank; a second null direction shows up as a vanishing singular
    // value.
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin < 1e-13 * smax {
        return Err(DeviceError::RankDeficient { smallest: smin });
    }
    let x = svd.solve(&rhs, 0.0).map_err(|e| DeviceError::Solver(e.to_string()))?;
    let mut p: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = p.iter().sum();
    for v in &mut p {
        *v /= total;
    }
    Ok(p)
}
