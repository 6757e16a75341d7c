//! `mesoamp`: characteristic sweeps, circuit solves, stochastic validation,
//! power-law fitting and multistage optimization from flat key-value
//! configurations.

mod commands;
mod output;
mod params;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::Format;
use params::{read_config_file, split_assignment, usage, Params, UsageError};

#[derive(Parser)]
#[command(name = "mesoamp", version, about = "Mesoscopic transistor amplifier simulator and multistage optimizer")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Config file with one `key = value` per line (`#` comments).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a parameter, e.g. `--set v_d=15`. Applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// RNG seed (required by `gillespie` and `relax`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output file. Defaults to `<command>.<format>` in $MESOAMP_OUT_DIR or the
    /// working directory. The manifest goes next to it.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long, short, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Transfer or output characteristics of one transistor level.
    Characteristics(RunArgs),
    /// Single-transistor amplifier: sinusoidal response or DC sweep.
    Amplifier(RunArgs),
    /// CSVAC input-output curve with currents and power.
    CsvacSweep(RunArgs),
    /// Calibrated-gain power grid over input amplitude and gain.
    PowerMap(RunArgs),
    /// Event-by-event CSVAC trajectory at fixed voltages.
    Gillespie(RunArgs),
    /// Stochastic relaxation of the CSVAC output voltage.
    Relax(RunArgs),
    /// Least-squares fit of ln P = a + b·A_in + c·G, or a built-in fit.
    Fit(RunArgs),
    /// Optimal stage gains for a fixed stage count.
    Optimize(RunArgs),
    /// Stage-count search with optimal gains.
    Scheme1(RunArgs),
    /// Optimal stage count over an amplitude × gain grid.
    StageMap(RunArgs),
    /// Re-run a command from its manifest.
    Replay {
        manifest: PathBuf,
        /// Write here instead of the path recorded in the manifest.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// List the parameters and defaults of a command.
    Keys { command: String },
}

fn command_and_args(cmd: Cmd) -> Result<(&'static str, RunArgs), Cmd> {
    let (name, a) = match cmd {
        Cmd::Characteristics(a) => ("characteristics", a),
        Cmd::Amplifier(a) => ("amplifier", a),
        Cmd::CsvacSweep(a) => ("csvac-sweep", a),
        Cmd::PowerMap(a) => ("power-map", a),
        Cmd::Gillespie(a) => ("gillespie", a),
        Cmd::Relax(a) => ("relax", a),
        Cmd::Fit(a) => ("fit", a),
        Cmd::Optimize(a) => ("optimize", a),
        Cmd::Scheme1(a) => ("scheme1", a),
        Cmd::StageMap(a) => ("stage-map", a),
        other => return Err(other),
    };
    Ok((name, a))
}

/// Seed and format may also come from the config file.
fn run_from_args(name: &'static str, args: RunArgs) -> Result<()> {
    let command = commands::find(name).expect("every subcommand is registered");
    let mut assignments = match &args.config {
        Some(p) => read_config_file(p)?,
        None => Vec::new(),
    };
    for s in &args.set {
        assignments.push(split_assignment(s).ok_or_else(|| usage(format!("--set expects KEY=VALUE, got `{s}`")))?);
    }
    let mut seed = args.seed;
    let mut format = args.format;
    let mut rest = Vec::new();
    for (k, v) in assignments {
        match k.as_str() {
            "seed" if args.seed.is_none() => {
                seed = Some(v.parse().map_err(|_| usage(format!("seed `{v}` is not a non-negative integer")))?)
            }
            "format" if args.format.is_none() => {
                format = Some(
                    <Format as clap::ValueEnum>::from_str(&v, true)
                        .map_err(|_| usage(format!("format `{v}` is not csv or json")))?,
                )
            }
            "seed" | "format" => {}
            _ => rest.push((k, v)),
        }
    }
    let params = Params::resolve(command.name, command.defaults, rest)?;
    let format = format.unwrap_or(command.default_format);
    let out = args.out.unwrap_or_else(|| output::default_path(command.name, format));
    execute(command, &params, seed, format, &out)
}

fn execute(
    command: &commands::Command,
    params: &Params,
    seed: Option<u64>,
    format: Format,
    out: &std::path::Path,
) -> Result<()> {
    if command.needs_seed && seed.is_none() {
        return Err(usage(format!("`{}` is randomized and needs an explicit --seed", command.name)));
    }
    let start = Instant::now();
    let artifact = (command.run)(params, seed)?;
    output::write_artifact(&artifact, format, out)?;
    let manifest = output::Manifest::new(command.name, params, seed, format, out, start.elapsed().as_secs_f64());
    let mpath = output::write_manifest(&manifest, out)?;
    println!("{}", artifact.summary);
    println!("wrote {} and {}", out.display(), mpath.display());
    Ok(())
}

fn replay(manifest: &std::path::Path, out: Option<PathBuf>) -> Result<()> {
    let m = output::read_manifest(manifest)?;
    let command =
        commands::find(&m.command).ok_or_else(|| usage(format!("manifest names unknown command `{}`", m.command)))?;
    let params = Params::resolve(command.name, command.defaults, m.params.clone())?;
    let out = out.unwrap_or_else(|| PathBuf::from(&m.output));
    execute(command, &params, m.seed, m.format, &out)
}

fn run(cli: Cli) -> Result<()> {
    match command_and_args(cli.command) {
        Ok((name, args)) => run_from_args(name, args),
        Err(Cmd::Replay { manifest, out }) => replay(&manifest, out),
        Err(Cmd::Keys { command }) => {
            let c = commands::find(&command).ok_or_else(|| usage(format!("unknown command `{command}`")))?;
            println!("# {}: {}", c.name, c.about);
            for (k, v) in c.defaults {
                println!("{k} = {v}");
            }
            Ok(())
        }
        Err(_) => unreachable!("all run subcommands handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("usage error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
