//! Samples regime paths, checks the Dynkin martingale and prints the
//! stationary distribution of the reference generator.

use regime_equilibrium::ctmc::{dynkin_check, sample_path, stationary_distribution};
use regime_equilibrium::report::RngSpec;
use regime_equilibrium::MarketSpec;

fn main() -> regime_equilibrium::Result<()> {
    let spec = MarketSpec::reference(-1.0);
    let gen = &spec.generator;
    let path = sample_path(gen, 0, spec.horizon, &RngSpec::new(42));
    print!("{}", path.to_csv());
    println!("stationary: {:?}", stationary_distribution(gen)?);
    let report = dynkin_check(gen, &[1.0, -2.0], 0, spec.horizon, 100_000, &RngSpec::new(1))?;
    println!("dynkin: {}", report.to_json());
    Ok(())
}
