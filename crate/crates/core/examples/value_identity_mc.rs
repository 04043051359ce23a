//! Monte-Carlo utility of the equilibrium strategy against the solved value
//! function and the deterministic Feynman-Kac value, under both discount
//! conventions.
//!
//! cargo run --release --example value_identity_mc -- [gamma] [paths]

use std::time::Instant;

use regime_equilibrium::equilibrium::solve;
use regime_equilibrium::report::RngSpec;
use regime_equilibrium::simulate::{estimate_j_with, strategy_value, DiscountConvention, ProportionalStrategy, DEFAULT_PATH_STEPS};
use regime_equilibrium::MarketSpec;

fn main() -> regime_equilibrium::Result<()> {
    let mut args = std::env::args().skip(1);
    let gamma: f64 = args.next().map(|s| s.parse().expect("gamma")).unwrap_or(-1.0);
    let paths: usize = args.next().map(|s| s.parse().expect("paths")).unwrap_or(20_000);
    let spec = MarketSpec::reference(gamma);
    let sol = solve(&spec)?;
    let eq = ProportionalStrategy::equilibrium(&sol);
    for convention in [DiscountConvention::FrozenAtStart, DiscountConvention::FollowsRegime] {
        println!("{convention:?}");
        for i in 0..spec.states {
            let start = Instant::now();
            let target = sol.value_at(0.0, 1.0, i)?;
            let fk = strategy_value(&eq, &spec, 0.0, 1.0, i, convention)?;
            let rng = RngSpec::new(2024).with_stream(i as u64);
            let mc = estimate_j_with(&eq, 0.0, 1.0, i, &spec, paths, DEFAULT_PATH_STEPS, convention, &rng)?.against(target);
            println!(
                "  state {i}: value_at {target:.6}  feynman-kac {fk:.6}  mc {:.6} +- {:.6}  z {:+.2}  ({:.1?})",
                mc.estimate,
                mc.std_error,
                mc.z_score.unwrap_or(f64::NAN),
                start.elapsed()
            );
        }
    }
    Ok(())
}
