//! `discwalk`: gait design, walking simulation and stability analysis from a
//! TOML experiment file.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Context, Failure};
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "discwalk", version, about = "Biped with an inertial disc: design, simulate, analyse")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design the nominal gait and write `gait.toml`.
    Design(Common),
    /// Walk the robot; writes trace, impact table, summary and plots.
    Simulate(SimArgs),
    /// Linearized return-map report for the configured gains (plus any sweep grid).
    Stability(Common),
    /// Stability over the `[sweep]` gain grid, in parallel.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Previously designed gait; designed from the config when omitted.
    #[arg(long)]
    gait: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    common: Common,
    /// Number of steps (overrides `sim.steps`).
    #[arg(long)]
    steps: Option<usize>,
    /// Plant parameter error, e.g. `hip_mass=1.1`; repeatable.
    #[arg(long = "perturb", value_name = "KEY=FACTOR", value_parser = parse_perturb)]
    perturb: Vec<(String, f64)>,
}

fn parse_perturb(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected KEY=FACTOR")?;
    let f: f64 = v.trim().parse().map_err(|e| format!("bad factor `{v}`: {e}"))?;
    Ok((k.trim().to_string(), f))
}

fn context(c: &Common) -> Result<Context, Failure> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p).map_err(Failure::config)?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    Ok(Context { cfg, gait: c.gait.clone() })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Command::Design(c) => commands::design(&context(&c)?),
        Command::Simulate(a) => {
            let mut ctx = context(&a.common)?;
            if let Some(n) = a.steps {
                ctx.cfg.sim.steps = n;
            }
            ctx.cfg.sim.param_error.0.extend(a.perturb);
            commands::simulate(&ctx)
        }
        Command::Stability(c) => commands::stability(&context(&c)?),
        Command::Sweep(c) => commands::sweep(&context(&c)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perturb_flag_parses() {
        assert_eq!(parse_perturb("hip_mass=1.1").unwrap(), ("hip_mass".into(), 1.1));
        assert!(parse_perturb("hip_mass").is_err());
        assert!(parse_perturb("hip_mass=x").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
