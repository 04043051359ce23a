//! Runs an experiment from a JSON config (the reference config when none is
//! given) and prints the per-gamma outcome.
//!
//! cargo run --release --example json_experiment -- [config.json]

use regime_equilibrium::experiment::{run, ExperimentConfig};

fn main() -> regime_equilibrium::Result<()> {
    let config = match std::env::args().nth(1) {
        Some(p) => ExperimentConfig::load(p.as_ref())?,
        None => {
            let mut c = ExperimentConfig::reference();
            c.out_dir = "out/experiment".into();
            println!("{}", c.to_json());
            c
        }
    };
    let summary = run(&config)?;
    for r in &summary.runs {
        println!("gamma={:>5} passed={} residual={:?} files={:?}", r.gamma, r.passed, r.residual, r.files);
    }
    std::process::exit(summary.exit_code());
}
