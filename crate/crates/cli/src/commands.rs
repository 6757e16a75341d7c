//! Subcommand implementations. Each turns resolved parameters into a table
//! and a JSON document; the caller writes whichever format was requested.

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use mesoamp::circuits::{
    csvac_network, power_map, solve_amplifier, solve_csvac, solve_csvac_with, AmplifierConfig, CircuitState,
    CsvacConfig, SupplySchedule,
};
use mesoamp::device::{sweep_output_characteristic, sweep_transfer_characteristic, TransistorKind, TransistorLevel};
use mesoamp::multistage::{optimal_stage_map_with, optimize_gains, scheme1_with, Scheme1Options};
use mesoamp::powerfit::{fit_power_model, AmplitudeUnit, PowerFit, PowerSample};
use mesoamp::stochastic::{
    empirical_current, simulate, stochastic_vout_relaxation_with, RelaxationOptions, SimulationLimits,
};
use mesoamp::units::{Energy, UnitSystem};

use crate::params::{usage, Params};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

pub struct Table {
    /// Column names with units, written as the single comment line.
    pub comment: String,
    pub headers: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

pub struct Artifact {
    pub table: Option<Table>,
    pub json: Value,
    /// One-line human summary printed to stdout.
    pub summary: String,
}

pub struct Command {
    pub name: &'static str,
    pub about: &'static str,
    pub defaults: &'static [(&'static str, &'static str)],
    pub default_format: Format,
    pub needs_seed: bool,
    pub run: fn(&Params, Option<u64>) -> Result<Artifact>,
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn csvac_config(p: &Params) -> Result<CsvacConfig> {
    let v_d = p.voltage("v_d")?;
    let mut cfg = CsvacConfig::symmetric(v_d, p.f64("gamma")?, p.f64("gamma_l")?);
    cfg.pmos_reference_energy = Energy::new(p.f64("eps_p0")?).map_err(|e| usage(e.to_string()))?;
    if let Some(e) = p.opt_f64("eps_n0")? {
        cfg.nmos_reference_energy = Energy::new(e).map_err(|e| usage(e.to_string()))?;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn load_fit(p: &Params) -> Result<PowerFit> {
    let name = p.raw("fit");
    match PowerFit::builtin(name) {
        Ok(f) => Ok(f),
        Err(_) => {
            let text = std::fs::read_to_string(name).map_err(|e| usage(format!("cannot read fit `{name}`: {e}")))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("fit file `{name}` is not a fit document: {e}")))
        }
    }
}

/// Amplitude given under `key`, expressed in the fit's amplitude unit.
fn fit_amplitude(p: &Params, key: &str, fit: &PowerFit) -> Result<Vec<f64>> {
    let unit: AmplitudeUnit = p.parse("unit", "V_T or volt")?;
    let u = UnitSystem::room_temperature();
    Ok(p.grid(key)?.into_iter().map(|a| fit.amplitude_unit.convert(a, unit, &u)).collect())
}

fn single(values: Vec<f64>, key: &str) -> Result<f64> {
    match values.as_slice() {
        [v] => Ok(*v),
        _ => Err(usage(format!("`{key}` must be a single value"))),
    }
}

pub const COMMANDS: &[Command] = &[
    Command {
        name: "characteristics",
        about: "Transfer or output characteristics of one transistor level",
        defaults: &[
            ("kind", "NMOS"),
            ("eps0", "0"),
            ("gamma", "0.2"),
            ("v_d", "15"),
            ("v_in", "-15:15:61"),
            ("mode", "transfer"),
            ("v_ds", "0:15:31"),
        ],
        default_format: Format::Csv,
        needs_seed: false,
        run: characteristics,
    },
    Command {
        name: "amplifier",
        about: "Single-transistor amplifier: sinusoidal response or DC sweep",
        defaults: &[
            ("v_dd", "15"),
            ("gamma", "0.002"),
            ("gamma_r", "0.01"),
            ("eps0", "0"),
            ("mode", "waveform"),
            ("amplitude", "0.1"),
            ("omega", "0.5"),
            ("periods", "2"),
            ("samples", "128"),
            ("v_in", "-5:5:41"),
        ],
        default_format: Format::Csv,
        needs_seed: false,
        run: amplifier,
    },
    Command {
        name: "csvac-sweep",
        about: "CSVAC input-output curve with currents and power",
        defaults: &[
            ("v_d", "15"),
            ("gamma", "0.2"),
            ("gamma_l", "0.01"),
            ("eps_p0", "0"),
            ("eps_n0", ""),
            ("exchange", "true"),
            ("v_in", "-7.5:7.5:61"),
        ],
        default_format: Format::Csv,
        needs_seed: false,
        run: csvac_sweep,
    },
    Command {
        name: "power-map",
        about: "Calibrated-gain power grid over input amplitude and gain",
        defaults: &[
            ("v_d", "15"),
            ("gamma", "0.2"),
            ("gamma_l", "0.01"),
            ("eps_p0", "0"),
            ("eps_n0", ""),
            ("exchange", "true"),
            ("a_in", "2:14:7"),
            ("gain", "1:2:5"),
            ("supply", "headroom"),
            ("supply_factor", "3"),
            ("supply_floor", "15"),
            ("period_samples", "64"),
        ],
        default_format: Format::Csv,
        needs_seed: false,
        run: power_map_cmd,
    },
    Command {
        name: "gillespie",
        about: "Event-by-event CSVAC trajectory at fixed voltages",
        defaults: &[
            ("v_d", "15"),
            ("gamma", "0.2"),
            ("gamma_l", "0.01"),
            ("eps_p0", "0"),
            ("eps_n0", ""),
            ("exchange", "true"),
            ("v_in", "0"),
            ("v_out", ""),
            ("total_time", "1000"),
            ("initial_state", "0"),
        ],
        default_format: Format::Csv,
        needs_seed: true,
        run: gillespie,
    },
    Command {
        name: "relax",
        about: "Stochastic relaxation of the CSVAC output voltage",
        defaults: &[
            ("v_d", "15"),
            ("gamma", "0.2"),
            ("gamma_l", "0.01"),
            ("eps_p0", "0"),
            ("eps_n0", ""),
            ("exchange", "true"),
            ("v_in", "0"),
            ("runs", "10"),
            ("initial_v_out", ""),
            ("step_size", "0.5"),
            ("batch_events", "2000"),
            ("decay_scale", "50"),
            ("tolerance", "0.05"),
            ("min_iterations", "40"),
            ("max_iterations", "3000"),
            ("averaging_window", "150"),
        ],
        default_format: Format::Csv,
        needs_seed: true,
        run: relax,
    },
    Command {
        name: "fit",
        about: "Least-squares fit of ln P = a + b·A_in + c·G",
        defaults: &[("input", ""), ("unit", "V_T"), ("builtin", "")],
        default_format: Format::Json,
        needs_seed: false,
        run: fit,
    },
    Command {
        name: "optimize",
        about: "Optimal stage gains for a fixed stage count",
        defaults: &[("fit", "paper-sim"), ("a_in", "2"), ("unit", "V_T"), ("gain", "2"), ("k", "2")],
        default_format: Format::Json,
        needs_seed: false,
        run: optimize,
    },
    Command {
        name: "scheme1",
        about: "Stage-count search with optimal gains",
        defaults: &[
            ("fit", "paper-sim"),
            ("a_in", "2"),
            ("unit", "V_T"),
            ("gain", "2"),
            ("tolerance", "1e-9"),
            ("max_stages", "64"),
        ],
        default_format: Format::Json,
        needs_seed: false,
        run: scheme1_cmd,
    },
    Command {
        name: "stage-map",
        about: "Optimal stage count over an amplitude × gain grid",
        defaults: &[
            ("fit", "paper-sim"),
            ("a_in", "0.5:15:20"),
            ("unit", "V_T"),
            ("gain", "1:5:20"),
            ("tolerance", "1e-9"),
            ("max_stages", "64"),
        ],
        default_format: Format::Csv,
        needs_seed: false,
        run: stage_map,
    },
];

pub fn find(name: &str) -> Option<&'static Command> {
    COMMANDS.iter().find(|c| c.name == name)
}

fn characteristics(p: &Params, _: Option<u64>) -> Result<Artifact> {
    let kind: TransistorKind = p.parse("kind", "NMOS or PMOS")?;
    let level =
        TransistorLevel::new(kind, Energy::new(p.f64("eps0")?).map_err(|e| usage(e.to_string()))?, p.f64("gamma")?)
            .map_err(|e| usage(e.to_string()))?;
    let v_in = p.grid("v_in")?;
    match p.choice("mode", &["transfer", "output"])? {
        "transfer" => {
            let v_d = p.voltage("v_d")?;
            let t = sweep_transfer_characteristic(&level, v_d, &v_in).context("transfer sweep failed")?;
            let comment = format!(
                "v_in [V_T], v_ds [V_T], i_d [q/βħ]; kind={kind} pinch_off={} threshold_crossing={} saturation_current={}",
                opt(t.pinch_off),
                opt(t.threshold_crossing),
                t.saturation_current
            );
            let rows = t.points.iter().map(|s| vec![num(s.v_in), num(s.v_ds), num(s.i_d)]).collect();
            let summary = format!("{kind} pinch-off {} V_T", opt(t.pinch_off));
            Ok(Artifact {
                table: Some(Table { comment, headers: vec!["v_in", "v_ds", "i_d"], rows }),
                json: serde_json::to_value(&t)?,
                summary,
            })
        }
        _ => {
            let curves = sweep_output_characteristic(&level, &v_in, &p.grid("v_ds")?).context("output sweep failed")?;
            let rows = curves
                .iter()
                .flat_map(|c| c.points.iter().map(|s| vec![num(s.v_in), num(s.v_ds), num(s.i_d)]))
                .collect();
            Ok(Artifact {
                table: Some(Table {
                    comment: format!("v_in [V_T], v_ds [V_T], i_d [q/βħ]; kind={kind}"),
                    headers: vec!["v_in", "v_ds", "i_d"],
                    rows,
                }),
                json: serde_json::to_value(&curves)?,
                summary: format!("{} output curves", curves.len()),
            })
        }
    }
}

fn amplifier(p: &Params, _: Option<u64>) -> Result<Artifact> {
    let cfg = AmplifierConfig {
        v_dd: p.voltage("v_dd")?,
        gamma: p.f64("gamma")?,
        gamma_r: p.f64("gamma_r")?,
        nmos_reference_energy: Energy::new(p.f64("eps0")?).map_err(|e| usage(e.to_string()))?,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let points: Vec<(f64, f64)> = match p.choice("mode", &["waveform", "sweep"])? {
        "waveform" => {
            let (amp, omega) = (p.voltage("amplitude")?, p.f64("omega")?);
            let (periods, samples) = (p.f64("periods")?, p.usize("samples")?);
            if omega <= 0.0 || periods <= 0.0 || samples == 0 {
                return Err(usage("omega, periods and samples must be positive"));
            }
            let n = (periods * samples as f64).round() as usize;
            let dt = 2.0 * std::f64::consts::PI / omega / samples as f64;
            (0..n).map(|i| i as f64 * dt).map(|tau| (tau, amp * (omega * tau).sin())).collect()
        }
        _ => p.grid("v_in")?.into_iter().map(|v| (f64::NAN, v)).collect(),
    };
    let states: Vec<CircuitState> = points
        .iter()
        .map(|&(_, v)| solve_amplifier(&cfg, v))
        .collect::<Result<_, _>>()
        .context("amplifier solve failed")?;
    let rows = points
        .iter()
        .zip(&states)
        .map(|(&(tau, _), s)| {
            vec![
                if tau.is_nan() { String::new() } else { num(tau) },
                num(s.v_in),
                num(s.v_out),
                num(s.current("DD->Rd").unwrap_or(f64::NAN)),
                num(s.power.total),
            ]
        })
        .collect();
    Ok(Artifact {
        table: Some(Table {
            comment: "tau [βħ], v_in_vt [V_T], v_out_vt [V_T], j_dd_rd [q/βħ], power [kT/βħ]".into(),
            headers: vec!["tau", "v_in_vt", "v_out_vt", "j_dd_rd", "power"],
            rows,
        }),
        json: json!({ "config": cfg, "states": states }),
        summary: format!("{} amplifier states", states.len()),
    })
}

fn csvac_sweep(p: &Params, _: Option<u64>) -> Result<Artifact> {
    let cfg = csvac_config(p)?;
    let exchange = p.bool("exchange")?;
    let states: Vec<CircuitState> = p
        .grid("v_in")?
        .into_iter()
        .map(|v| solve_csvac_with(&cfg, v, exchange))
        .collect::<Result<_, _>>()
        .context("CSVAC solve failed")?;
    let c = |s: &CircuitState, k: &str| num(s.current(k).unwrap_or(f64::NAN));
    let rows = states
        .iter()
        .map(|s| {
            vec![
                num(s.v_in),
                num(s.v_out),
                num(s.occupancy("P").unwrap_or(f64::NAN)),
                num(s.occupancy("N").unwrap_or(f64::NAN)),
                c(s, "P->s"),
                c(s, "N->s"),
                c(s, "CSVAC->RL"),
                num(s.power.pmos),
                num(s.power.nmos),
                num(s.power.total),
                num(s.residual),
            ]
        })
        .collect();
    Ok(Artifact {
        table: Some(Table {
            comment: "v_in_vt [V_T], v_out_vt [V_T], occupancy_p, occupancy_n, j_p_s [q/βħ], j_n_s [q/βħ], j_load [q/βħ], power_pmos [kT/βħ], power_nmos [kT/βħ], power_total [kT/βħ], residual [q/βħ]".into(),
            headers: vec![
                "v_in_vt", "v_out_vt", "occupancy_p", "occupancy_n", "j_p_s", "j_n_s", "j_load", "power_pmos", "power_nmos",
                "power_total", "residual",
            ],
            rows,
        }),
        json: json!({ "config": cfg, "exchange": exchange, "states": states }),
        summary: format!("{} CSVAC states", states.len()),
    })
}

fn power_map_cmd(p: &Params, _: Option<u64>) -> Result<Artifact> {
    let template = csvac_config(p)?;
    let schedule = match p.choice("supply", &["headroom", "fixed"])? {
        "fixed" => SupplySchedule::Fixed { v_d: template.v_d },
        _ => SupplySchedule::Headroom { factor: p.f64("supply_factor")?, floor: p.voltage("supply_floor")? },
    };
    let n = p.usize("period_samples")?;
    if n < 16 {
        return Err(usage("period_samples must be at least 16"));
    }
    let a_grid = p.grid("a_in")?;
    let g_grid = p.grid("gain")?;
    let cells = power_map(&template, &a_grid, &g_grid, schedule, n);
    let reached = cells.iter().filter(|c| c.avg_power.is_some()).count();
    let rows = cells
        .iter()
        .map(|c| {
            vec![
                num(c.a_in),
                num(c.target_gain),
                opt(c.gain),
                opt(c.gamma),
                num(c.v_d),
                opt(c.avg_power),
                c.note.clone().unwrap_or_default(),
            ]
        })
        .collect();
    Ok(Artifact {
        table: Some(Table {
            comment:
                "a_in_vt [V_T], target_gain, gain, gamma [1/βħ], v_d_vt [V_T], avg_power_kt_per_unit_time [kT/βħ], note"
                    .into(),
            headers: vec!["a_in_vt", "target_gain", "gain", "gamma", "v_d_vt", "avg_power_kt_per_unit_time", "note"],
            rows,
        }),
        json: json!({ "template": template, "schedule": schedule, "period_samples": n, "cells": cells }),
        summary: format!("{reached}/{} cells calibrated", cells.len()),
    })
}

fn gillespie(p: &Params, seed: Option<u64>) -> Result<Artifact> {
    let seed = seed.ok_or_else(|| usage("gillespie needs --seed"))?;
    let cfg = csvac_config(p)?;
    let exchange = p.bool("exchange")?;
    let v_in = p.voltage("v_in")?;
    let v_out = match p.opt_voltage("v_out")? {
        Some(v) => v,
        None => solve_csvac_with(&cfg, v_in, exchange).context("CSVAC solve failed")?.v_out,
    };
    let total_time = p.f64("total_time")?;
    if total_time <= 0.0 {
        return Err(usage("total_time must be positive"));
    }
    let initial = p.usize("initial_state")?;
    if initial > 3 {
        return Err(usage("initial_state must be 0..=3"));
    }
    let net = csvac_network(&cfg, v_in, v_out, exchange).context("building the CSVAC chain failed")?;
    let traj = simulate(&net, initial, SimulationLimits::time(total_time), seed).context("sampling failed")?;
    let currents: std::collections::BTreeMap<&str, f64> =
        ["dP->P", "s->P", "dN->N", "s->N", "P->N"].iter().map(|c| (*c, empirical_current(&traj, c))).collect();
    let mut rows = vec![vec![num(0.0), initial.to_string()]];
    rows.extend(traj.events.iter().map(|e| vec![num(e.time), e.to.to_string()]));
    Ok(Artifact {
        table: Some(Table {
            comment: format!(
                "time [βħ], state (n_P + 2·n_N); v_in={v_in} V_T v_out={v_out} V_T seed={seed} rng={}",
                traj.rng_algorithm
            ),
            headers: vec!["time", "state"],
            rows,
        }),
        json: json!({ "config": cfg, "v_in": v_in, "v_out": v_out, "empirical_currents": currents, "trajectory": traj }),
        summary: format!("{} events over {total_time} βħ", traj.n_events),
    })
}

fn relax(p: &Params, seed: Option<u64>) -> Result<Artifact> {
    let seed = seed.ok_or_else(|| usage("relax needs --seed"))?;
    let cfg = csvac_config(p)?;
    if !p.bool("exchange")? {
        return Err(usage("relax always includes the exchange channel; set exchange = true"));
    }
    let v_in = p.voltage("v_in")?;
    let opts = RelaxationOptions {
        step_size: p.f64("step_size")?,
        batch_events: p.u64("batch_events")?,
        decay_scale: p.f64("decay_scale")?,
        tolerance: p.f64("tolerance")?,
        min_iterations: p.usize("min_iterations")?,
        max_iterations: p.usize("max_iterations")?,
        averaging_window: p.usize("averaging_window")?,
        ..RelaxationOptions::default()
    };
    let runs = p.u64("runs")?;
    let initial = p.opt_voltage("initial_v_out")?;
    let root = solve_csvac(&cfg, v_in).context("CSVAC solve failed")?.v_out;
    let mut results = Vec::new();
    for s in seed..seed + runs {
        results.push(stochastic_vout_relaxation_with(&cfg, v_in, s, initial, &opts).map_err(|e| match e {
            mesoamp::stochastic::StochasticError::InvalidParameter(m) => usage(m),
            other => anyhow::Error::new(other).context("relaxation failed"),
        })?);
    }
    let converged = results.iter().filter(|r| r.converged).count();
    let rows = results
        .iter()
        .flat_map(|r| r.iterates.iter().enumerate().map(move |(i, v)| vec![i.to_string(), num(*v), r.seed.to_string()]))
        .collect();
    Ok(Artifact {
        table: Some(Table {
            comment: format!("iteration, v_out_vt [V_T], seed; v_in={v_in} V_T deterministic_v_out={root} V_T"),
            headers: vec!["iteration", "v_out_vt", "seed"],
            rows,
        }),
        json: json!({ "config": cfg, "options": opts, "v_in": v_in, "deterministic_v_out": root, "runs": results }),
        summary: format!("{converged}/{runs} runs converged; deterministic V_out {root:.4} V_T"),
    })
}

fn fit_table(f: &PowerFit) -> Table {
    Table {
        comment: "a [ln(kT/βħ)], b [1/amplitude_unit], c [1/gain], amplitude_unit, rmse [ln units], r_square, n_points, source".into(),
        headers: vec!["a", "b", "c", "amplitude_unit", "rmse", "r_square", "n_points", "source"],
        rows: vec![vec![
            num(f.a),
            num(f.b),
            num(f.c),
            f.amplitude_unit.to_string(),
            num(f.rmse),
            num(f.r_square),
            f.n_points.map(|n| n.to_string()).unwrap_or_default(),
            f.source.clone(),
        ]],
    }
}

#[derive(serde::Deserialize)]
struct SampleRow {
    #[serde(alias = "a_in_vt")]
    a_in: f64,
    gain: Option<f64>,
    #[serde(alias = "avg_power_kt_per_unit_time")]
    power: Option<f64>,
}

fn fit(p: &Params, _: Option<u64>) -> Result<Artifact> {
    let f = match (p.is_set("builtin"), p.is_set("input")) {
        (true, false) => PowerFit::builtin(p.raw("builtin")).map_err(|e| usage(e.to_string()))?,
        (false, true) => {
            let unit: AmplitudeUnit = p.parse("unit", "V_T or volt")?;
            let path = p.raw("input");
            let mut rdr = csv::ReaderBuilder::new()
                .comment(Some(b'#'))
                .trim(csv::Trim::All)
                .flexible(true)
                .from_path(path)
                .map_err(|e| usage(format!("cannot read samples `{path}`: {e}")))?;
            let mut samples = Vec::new();
            for row in rdr.deserialize::<SampleRow>() {
                let r = row.map_err(|e| usage(format!("bad sample row in `{path}`: {e}")))?;
                // Cells without a gain or power (unreachable targets) are skipped.
                if let (Some(gain), Some(power)) = (r.gain, r.power) {
                    samples.push(PowerSample { a_in: r.a_in, gain, power });
                }
            }
            fit_power_model(&samples, unit, path).context("fit failed")?
        }
        _ => return Err(usage("fit needs exactly one of `input` (CSV with a_in, gain, power) or `builtin`")),
    };
    Ok(Artifact {
        table: Some(fit_table(&f)),
        summary: format!("a = {}, b = {}, c = {}, R² = {}", f.a, f.b, f.c, f.r_square),
        json: serde_json::to_value(&f)?,
    })
}

fn plan_table(plan: &mesoamp::multistage::MultistagePlan) -> Table {
    let mut amp = plan.a_in;
    let rows = plan
        .gains
        .iter()
        .zip(&plan.per_stage_power)
        .enumerate()
        .map(|(i, (g, pw))| {
            let row = vec![(i + 1).to_string(), num(*g), num(amp), num(*pw)];
            amp *= g;
            row
        })
        .collect();
    Table {
        comment: format!(
            "stage, gain, input_amplitude [fit unit], power [fit power unit]; k={} total_power={} savings_vs_single={} fit={}",
            plan.k, plan.total_power, plan.savings_vs_single, plan.fit_source
        ),
        headers: vec!["stage", "gain", "input_amplitude", "power"],
        rows,
    }
}

fn optimize(p: &Params, _: Option<u64>) -> Result<Artifact> {
    let f = load_fit(p)?;
    let a_in = single(fit_amplitude(p, "a_in", &f)?, "a_in")?;
    let plan = optimize_gains(&f, a_in, p.f64("gain")?, p.usize("k")?).map_err(|e| match e {
        mesoamp::multistage::MultistageError::InvalidInput(m) => usage(m),
        other => anyhow::Error::new(other).context("gain optimization failed"),
    })?;
    Ok(Artifact {
        table: Some(plan_table(&plan)),
        summary: format!("K = {}, gains {:?}, savings {:.4}%", plan.k, plan.gains, 100.0 * plan.savings_vs_single),
        json: serde_json::to_value(&plan)?,
    })
}

fn scheme_options(p: &Params) -> Result<Scheme1Options> {
    Ok(Scheme1Options { improvement_tolerance: p.f64("tolerance")?, max_stages: p.usize("max_stages")? })
}

fn multistage_err(e: mesoamp::multistage::MultistageError) -> anyhow::Error {
    match e {
        mesoamp::multistage::MultistageError::InvalidInput(m) => usage(m),
        other => anyhow::Error::new(other).context("stage-count search failed"),
    }
}

fn scheme1_cmd(p: &Params, _: Option<u64>) -> Result<Artifact> {
    let f = load_fit(p)?;
    let a_in = single(fit_amplitude(p, "a_in", &f)?, "a_in")?;
    let o = scheme1_with(&f, a_in, p.f64("gain")?, &scheme_options(p)?).map_err(multistage_err)?;
    Ok(Artifact {
        table: Some(plan_table(&o.plan)),
        summary: format!("K_opt = {}, savings {:.4}%", o.plan.k, 100.0 * o.plan.savings_vs_single),
        json: serde_json::to_value(&o.plan)?,
    })
}

fn stage_map(p: &Params, _: Option<u64>) -> Result<Artifact> {
    let f = load_fit(p)?;
    let a_grid = fit_amplitude(p, "a_in", &f)?;
    let cells = optimal_stage_map_with(&f, &a_grid, &p.grid("gain")?, &scheme_options(p)?).map_err(multistage_err)?;
    let rows = cells
        .iter()
        .map(|c| vec![num(c.a_in), num(c.gain), c.k_opt.to_string(), num(c.total_power), num(c.savings_vs_single)])
        .collect();
    Ok(Artifact {
        table: Some(Table {
            comment: format!(
                "a_in [{}], gain, k_opt, total_power [fit power unit], savings_vs_single; fit={}",
                f.amplitude_unit, f.source
            ),
            headers: vec!["a_in", "gain", "k_opt", "total_power", "savings_vs_single"],
            rows,
        }),
        summary: format!("{} cells, max K_opt {}", cells.len(), cells.iter().map(|c| c.k_opt).max().unwrap_or(0)),
        json: json!({ "fit": f, "cells": cells }),
    })
}
