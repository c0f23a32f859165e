use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use traffic_core::sim::{export_metrics, run_simulation, Mode, ScenarioConfig, SimError};

#[derive(Parser)]
#[command(name = "traffic-sim", version, about = "Mixed-traffic network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and export its metrics.
    Run {
        #[command(flatten)]
        common: Common,
        /// Control configuration.
        #[arg(long)]
        mode: Option<Mode>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run all four modes with a shared seed and print a summary table.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Write each mode's metrics into a subdirectory of this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario TOML file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated duration, s.
    #[arg(long)]
    duration: Option<f64>,
    /// CAV share of spawned vehicles.
    #[arg(long, value_parser = parse_fraction)]
    penetration: Option<f64>,
    /// Rate of every OD pair, veh/h.
    #[arg(long, value_parser = parse_rate)]
    demand: Option<f64>,
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(format!("{x} is not in [0, 1]"))
    }
}

fn parse_rate(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if x >= 0.0 {
        Ok(x)
    } else {
        Err(format!("{x} is negative"))
    }
}

impl Common {
    fn scenario(&self) -> Result<ScenarioConfig, SimError> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::from_toml(&std::fs::read_to_string(path)?)?,
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.sim.seed = seed;
        }
        if let Some(d) = self.duration {
            cfg.sim.duration_s = d;
        }
        if let Some(p) = self.penetration {
            cfg.cav.penetration = p;
        }
        if let Some(r) = self.demand {
            cfg.demand.rate_veh_h = r;
            for pair in &mut cfg.demand.pairs {
                pair.rate_veh_h = r;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<(), SimError> {
    match cli.command {
        Command::Run { common, mode, out } => {
            let mut cfg = common.scenario()?;
            if let Some(mode) = mode {
                cfg.sim.mode = mode;
            }
            let log = run_simulation(&cfg)?;
            export_metrics(&log, &out)?;
            let s = log.summary();
            println!(
                "{}: TTT {:.1} veh-h, mean OD time {:.2} min, peak accumulation {:.1}, {} spawned, {} arrived",
                cfg.sim.mode,
                s.ttt / 3600.0,
                s.mean_od_min,
                s.peak_accumulation,
                s.spawned,
                s.arrived
            );
            println!("wrote {}", out.display());
        }
        Command::Compare { common, out } => {
            let base = common.scenario()?;
            println!("{:<12} {:>12} {:>16} {:>18}", "mode", "TTT (veh-h)", "mean OD (min)", "peak accumulation");
            for mode in Mode::ALL {
                let cfg = base.clone().with_mode(mode);
                let log = run_simulation(&cfg)?;
                if let Some(dir) = &out {
                    export_metrics(&log, &dir.join(mode.name()))?;
                }
                let s = log.summary();
                println!("{:<12} {:>12.1} {:>16.2} {:>18.1}", mode, s.ttt / 3600.0, s.mean_od_min, s.peak_accumulation);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let _ = e.print();
            eprintln!("\n{}", Cli::command().render_usage());
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(SimError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
