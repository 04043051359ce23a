//! Applies the Monte-Carlo Picard operator to the solved `g` and reports the
//! distance from a fixed point.
//!
//! cargo run --release --example picard_oracle -- [gamma] [paths]

use std::time::Instant;

use regime_equilibrium::equilibrium::{picard_apply, solve_g};
use regime_equilibrium::report::RngSpec;
use regime_equilibrium::MarketSpec;

fn main() -> regime_equilibrium::Result<()> {
    let mut args = std::env::args().skip(1);
    let gamma: f64 = args.next().map(|s| s.parse().expect("gamma")).unwrap_or(-1.0);
    let paths: usize = args.next().map(|s| s.parse().expect("paths")).unwrap_or(100_000);
    let sol = solve_g(&MarketSpec::reference(gamma))?;
    let g = sol.g_table().expect("power branch");
    let start = Instant::now();
    let est = picard_apply(&sol.spec, g, paths, &RngSpec::new(7))?;
    println!("{:>6} {:>12} {:>12} {:>10} {:>12} {:>12} {:>10}", "t", "g0", "P[g]0", "se0", "g1", "P[g]1", "se1");
    for (k, &t) in est.table.grid().iter().enumerate() {
        let (p, e) = (&est.table.rows()[k], &est.std_errors.rows()[k]);
        println!(
            "{t:>6.4} {:>12.6} {:>12.6} {:>10.2e} {:>12.6} {:>12.6} {:>10.2e}",
            g.value(t, 0),
            p[0],
            e[0],
            g.value(t, 1),
            p[1],
            e[1]
        );
    }
    let (worst, ok) = est.compare(g, 3.0, 2e-3);
    println!("sup |P[g] - g| = {worst:.3e}, within max(3 se, 2e-3): {ok}  ({:.1?})", start.elapsed());
    Ok(())
}
