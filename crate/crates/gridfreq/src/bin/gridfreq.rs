//! Thin CLI over the gridfreq library.
//!
//! Exit codes: 0 success, 2 config error, 3 runtime/numeric failure,
//! 4 market infeasibility.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gridfreq::metrics::{FrequencyTrace, MetricsReport};
use gridfreq::scenario::{preset, ScenarioSpec, PRESET_NAMES};
use gridfreq::sim::{compare_scenarios, run_scenario};
use gridfreq::{reserve_calc, Error};

#[derive(Parser)]
#[command(
    name = "gridfreq",
    about = "Desk-scale grid frequency-control simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario (a preset name or a TOML config path).
    Run {
        /// Preset name (s1-conv-agc, s2-conv-agc-pfc, s3-conv-pfc, s4-ibr)
        /// or path to a scenario TOML file.
        config: String,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the duration (s).
        #[arg(long)]
        duration: Option<f64>,
        /// Output directory for trace/histogram/report/config files.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Run several scenarios and print a comparison table.
    Compare {
        /// Preset names and/or TOML paths (at least two).
        configs: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        duration: Option<f64>,
        /// Output directory; also receives comparison.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate fleet response at a frequency deviation (droop formula).
    ReserveCalc {
        #[arg(long)]
        fleet_mw: f64,
        #[arg(long)]
        droop_pct: f64,
        #[arg(long)]
        delta_f_mhz: f64,
        #[arg(long, default_value_t = 0.0)]
        deadband_mhz: f64,
        #[arg(long, default_value_t = 50.0)]
        f0: f64,
    },
    /// Compute frequency-quality metrics for an external trace CSV
    /// (two columns: t_s, delta_f_mhz; uniform sampling).
    Analyze {
        csv: PathBuf,
        /// Nominal frequency for the time-error integral.
        #[arg(long, default_value_t = 50.0)]
        f0: f64,
    },
}

fn load_spec(name_or_path: &str) -> Result<ScenarioSpec, Error> {
    if let Some(spec) = preset(name_or_path) {
        return Ok(spec);
    }
    let path = PathBuf::from(name_or_path);
    if !path.exists() {
        return Err(Error::Config(format!(
            "'{name_or_path}' is neither a preset ({}) nor an existing file",
            PRESET_NAMES.join(", ")
        )));
    }
    let text = std::fs::read_to_string(&path)?;
    ScenarioSpec::from_toml(&text)
}

fn apply_overrides(spec: &mut ScenarioSpec, seed: Option<u64>, duration: Option<f64>) {
    if let Some(s) = seed {
        spec.seed = s;
    }
    if let Some(d) = duration {
        spec.duration_s = d;
    }
}

fn real_main() -> Result<(), Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, duration, out } => {
            let mut spec = load_spec(&config)?;
            apply_overrides(&mut spec, seed, duration);
            let run = run_scenario(&spec, Some(&out))?;
            println!(
                "{} (seed {}) finished in {:.2} s",
                run.name, run.seed, run.runtime_s
            );
            print!("{}", run.metrics);
            for e in &run.events {
                println!("  {e}");
            }
            if let Some(p) = &run.trace_path {
                println!("trace:  {}", p.display());
            }
            if let Some(p) = &run.echo_path {
                println!("config: {}", p.display());
            }
        }
        Command::Compare { configs, seed, duration, out } => {
            let mut specs = Vec::with_capacity(configs.len());
            for c in &configs {
                let mut spec = load_spec(c)?;
                apply_overrides(&mut spec, seed, duration);
                specs.push(spec);
            }
            let cmp = compare_scenarios(&specs, out.as_deref())?;
            print!("{}", cmp.render_text());
            if let Some(dir) = &out {
                println!("written: {}", dir.join("comparison.csv").display());
            }
        }
        Command::ReserveCalc { fleet_mw, droop_pct, delta_f_mhz, deadband_mhz, f0 } => {
            let mw = reserve_calc(fleet_mw, droop_pct, delta_f_mhz, deadband_mhz, f0)?;
            println!("{mw:.1} MW");
        }
        Command::Analyze { csv, f0 } => {
            let trace = FrequencyTrace::from_csv(&csv)?;
            let report = MetricsReport::from_trace(&trace, f0, &[])?;
            print!("{report}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
