use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use regime_equilibrium::experiment::{reproduce_fig1, run, ExperimentConfig, Outputs};
use regime_equilibrium::Error;

#[derive(Parser)]
#[command(version, about = "Equilibrium consumption-investment policies under regime switching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve each gamma and write consumption curves and coefficient tables.
    Solve(Common),
    /// Solve and run the fixed-point, Monte-Carlo and slope validations.
    Validate(Common),
    /// Reproduce the four-gamma reference curves and their qualitative checks.
    Fig1(Common),
    /// Certify the equilibrium against the perturbation menu.
    SlopeCert(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; defaults to the reference market.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte-Carlo paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Solver steps.
    #[arg(long)]
    grid: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::reference(),
        };
        if let Some(o) = &self.out {
            c.out_dir = o.clone();
        }
        c.seed = self.seed.unwrap_or(c.seed);
        c.paths = self.paths.or(c.paths);
        c.grid = self.grid.or(c.grid);
        c.validate()?;
        Ok(c)
    }
}

fn execute(cli: Cli) -> Result<bool, Error> {
    let (common, outputs) = match &cli.command {
        Command::Fig1(common) => {
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let summary = reproduce_fig1(common.seed, &out)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            return Ok(summary.passed);
        }
        Command::Solve(c) => (c, Outputs { tables: true, ..Outputs::default() }),
        Command::Validate(c) => (c, Outputs::all()),
        Command::SlopeCert(c) => (c, Outputs { curves: false, slope_certification: true, ..Outputs::default() }),
    };
    let mut config = common.config()?;
    if common.config.is_none() || matches!(cli.command, Command::Validate(_) | Command::SlopeCert(_)) {
        config.outputs = outputs;
    }
    let summary = run(&config)?;
    for r in &summary.runs {
        match &r.error {
            Some(e) => println!("gamma={}: error: {e}", r.gamma),
            None => println!("gamma={}: {} C(0)={:?}", r.gamma, if r.passed { "pass" } else { "FAIL" }, r.initial_rates),
        }
    }
    println!("report: {}", config.out_dir.join("report.json").display());
    Ok(summary.passed)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
