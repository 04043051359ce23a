//! Certifies the equilibrium against the six-perturbation menu using the
//! deterministic Feynman-Kac oracle.
//!
//! cargo run --release --example slope_certificate -- [gamma] [frozen|regime]

use regime_equilibrium::equilibrium::solve;
use regime_equilibrium::simulate::{certify_with, default_certification_points, DiscountConvention};
use regime_equilibrium::MarketSpec;

fn main() -> regime_equilibrium::Result<()> {
    let gamma: f64 = std::env::args().nth(1).map(|s| s.parse().expect("gamma")).unwrap_or(-1.0);
    let convention = match std::env::args().nth(2).as_deref() {
        Some("regime") => DiscountConvention::FollowsRegime,
        _ => DiscountConvention::FrozenAtStart,
    };
    let sol = solve(&MarketSpec::reference(gamma))?;
    let certs = certify_with(&sol, &default_certification_points(sol.spec.horizon), 1e-6, convention)?;
    println!("{:>6} {:>5} {:<22} {:>14}  slopes", "t", "state", "perturbation", "limit");
    for c in &certs {
        let slopes: Vec<String> = c.estimate.slopes.iter().map(|s| format!("{s:.6}")).collect();
        println!(
            "{:>6.3} {:>5} {:<22} {:>14.8}  [{}] {}",
            c.t,
            c.state,
            c.perturbation,
            c.estimate.extrapolated,
            slopes.join(", "),
            if c.passed { "ok" } else { "NEGATIVE" }
        );
    }
    let failed = certs.iter().filter(|c| !c.passed).count();
    println!("{} of {} cells non-negative", certs.len() - failed, certs.len());
    Ok(())
}
