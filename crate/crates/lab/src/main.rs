use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use neass_lab::config::{self, Config};
use neass_lab::output::{self, RunReport, VERSION};
use neass_lab::{experiments, LabError};

#[derive(Parser)]
#[command(name = "neass-lab", version, about = "Adiabatic-response experiments on small fermionic lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Configuration checks.
    Model {
        #[command(subcommand)]
        action: ModelAction,
    },
    /// Run one experiment and write `<experiment>.csv` and `<experiment>.json`.
    Run {
        #[command(subcommand)]
        experiment: Experiment,
    },
}

#[derive(Subcommand)]
enum ModelAction {
    /// Assemble all operators and report gap and ground-state uniqueness.
    Validate(Common),
}

#[derive(Subcommand)]
enum Experiment {
    /// Finite-volume identity for the inverse Liouvillian.
    InvliouCheck(Common),
    /// Commutator scan against the Lieb-Robinson velocity.
    LrCone(Common),
    /// Adiabatic defect over ε and perturbation order.
    AdiabaticSweep(Common),
    /// Defects near and away from the edge of an open chain.
    BulkBoundary(Common),
    /// Thermodynamic-limit diagnostics over nested volumes.
    TdlConvergence(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file.
    #[arg(value_name = "CONFIG", required_unless_present = "config_flag")]
    config: Option<PathBuf>,
    #[arg(long = "config", value_name = "PATH", conflicts_with = "config")]
    config_flag: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Override the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn path(&self) -> PathBuf {
        self.config.clone().or_else(|| self.config_flag.clone()).expect("clap enforces a config path")
    }
}

fn execute(name: &str, common: &Common) -> Result<bool, LabError> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| LabError::Invalid(format!("--threads: {e}")))?;
    }
    let mut cfg: Config = config::load(&common.path())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let hash = config::config_hash(&cfg);
    let start = Instant::now();
    let outcome = experiments::run(name, &cfg)?;
    let passed = outcome.passed();
    let report = RunReport {
        experiment: name.into(),
        version: VERSION.into(),
        config_name: cfg.name.clone(),
        config_hash: hash,
        seed: cfg.seed,
        passed,
        checks: outcome.checks.clone(),
        leakage: outcome.leakage,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        details: outcome.details.clone(),
    };
    let written = output::write(&common.out, name, &outcome.table, &report)?;
    for c in &outcome.checks {
        println!(
            "{:<4} {:<34} value={:.6e} threshold={:.6e} ({})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold,
            c.rule
        );
    }
    if name == "validate" {
        if let Some(g) = outcome.details.get("min_gap") {
            println!("gap {g} unique {}", outcome.details["unique"]);
        }
    }
    if let Some(l) = outcome.leakage {
        println!("weight leakage {l:.3e}");
    }
    println!("wrote {} and {}", written.csv.display(), written.json.display());
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::Model {
            action: ModelAction::Validate(c),
        } => ("validate", c),
        Command::Run { experiment } => match experiment {
            Experiment::InvliouCheck(c) => ("invliou-check", c),
            Experiment::LrCone(c) => ("lr-cone", c),
            Experiment::AdiabaticSweep(c) => ("adiabatic-sweep", c),
            Experiment::BulkBoundary(c) => ("bulk-boundary", c),
            Experiment::TdlConvergence(c) => ("tdl-convergence", c),
        },
    };
    match execute(name, common) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
