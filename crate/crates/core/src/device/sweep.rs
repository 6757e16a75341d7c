//! Transfer and output characteristic sweeps of a single transistor with the
//! source grounded.

use serde::{Deserialize, Serialize};

use super::{drain_current, DeviceError, Reservoir, TransistorKind, TransistorLevel};

/// Fraction of the saturation current below which a transistor counts as cut
/// off.
pub const CUTOFF_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub v_in: f64,
    pub v_ds: f64,
    /// Electron flux from the level into the drain, q/βħ.
    pub i_d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCharacteristic {
    pub kind: TransistorKind,
    pub points: Vec<SweepPoint>,
    /// Largest |i_d| in the sweep.
    pub saturation_current: f64,
    /// Last swept gate voltage at which the transistor is still cut off,
    /// scanning in the direction of increasing conduction. `None` if the
    /// transistor is never cut off or never turns on within the grid.
    pub pinch_off: Option<f64>,
    /// Gate voltage where |i_d| crosses the cut-off threshold, linearly
    /// interpolated between the bracketing grid points.
    pub threshold_crossing: Option<f64>,
}

fn drain_electrodes(v_ds: f64) -> Result<(Reservoir, Reservoir), DeviceError> {
    Ok((Reservoir::at_voltage("d", v_ds)?, Reservoir::at_voltage("s", 0.0)?))
}

/// Drain current versus gate voltage at fixed drain bias `v_d`.
pub fn sweep_transfer_characteristic(
    level: &TransistorLevel,
    v_d: f64,
    v_in_grid: &[f64],
) -> Result<TransferCharacteristic, DeviceError> {
    if v_in_grid.is_empty() {
        return Err(DeviceError::EmptyGrid);
    }
    let (d, s) = drain_electrodes(v_d)?;
    let points = v_in_grid
        .iter()
        .map(|&v_in| {
            let j = drain_current(level, v_in, &d, &s)?;
            Ok(SweepPoint { v_in, v_ds: v_d, i_d: -j })
        })
        .collect::<Result<Vec<_>, DeviceError>>()?;
    let saturation_current = points.iter().map(|p| p.i_d.abs()).fold(0.0, f64::max);

    // NMOS conducts more as the gate rises, PMOS as it falls.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].v_in.partial_cmp(&points[b].v_in).unwrap());
    if level.kind == TransistorKind::Pmos {
        order.reverse();
    }
    let threshold = CUTOFF_FRACTION * saturation_current;
    let mut pinch_off = None;
    let mut threshold_crossing = None;
    for w in order.windows(2) {
        let (lo, hi) = (&points[w[0]], &points[w[1]]);
        if lo.i_d.abs() <= threshold && hi.i_d.abs() > threshold {
            pinch_off = Some(lo.v_in);
            let t = (threshold - lo.i_d.abs()) / (hi.i_d.abs() - lo.i_d.abs());
            threshold_crossing = Some(lo.v_in + t * (hi.v_in - lo.v_in));
            break;
        }
    }
    Ok(TransferCharacteristic { kind: level.kind, points, saturation_current, pinch_off, threshold_crossing })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputCurve {
    pub v_in: f64,
    pub points: Vec<SweepPoint>,
    /// i_d at the largest |v_ds| of the sweep.
    pub saturation_current: f64,
}

/// One drain-current versus drain-bias curve per gate voltage.
pub fn sweep_output_characteristic(
    level: &TransistorLevel,
    v_in_values: &[f64],
    v_ds_grid: &[f64],
) -> Result<Vec<OutputCurve>, DeviceError> {
    if v_in_values.is_empty() || v_ds_grid.is_empty() {
        return Err(DeviceError::EmptyGrid);
    }
    let i_far =
        v_ds_grid.iter().enumerate().max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap()).map(|(i, _)| i).unwrap();
    v_in_values
        .iter()
        .map(|&v_in| {
            let points = v_ds_grid
                .iter()
                .map(|&v_ds| {
                    let (d, s) = drain_electrodes(v_ds)?;
                    Ok(SweepPoint { v_in, v_ds, i_d: -drain_current(level, v_in, &d, &s)? })
                })
                .collect::<Result<Vec<_>, DeviceError>>()?;
            let saturation_current = points[i_far].i_d;
            Ok(OutputCurve { v_in, points, saturation_current })
        })
        .collect()
}

/// Evenly spaced grid including both ends.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}
