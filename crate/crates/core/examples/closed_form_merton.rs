//! With one common discount rate the regime chain is irrelevant and the
//! equilibrium rate has a closed form. Compares it with the ODE solution.

use regime_equilibrium::equilibrium::{merton_closed_form, merton_eta, merton_rate_sensitivity, solve_g};
use regime_equilibrium::MarketSpec;

fn main() -> regime_equilibrium::Result<()> {
    let spec = MarketSpec::constant_discount(-1.0, 0.15, 0.25, 0.05, 0.9, 1.0);
    let sol = solve_g(&spec)?;
    println!("eta = {:.6}", merton_eta(&spec)?);
    let mut worst: f64 = 0.0;
    for &t in sol.grid() {
        worst = worst.max((sol.consumption_rate(t, 0) - merton_closed_form(&spec, t)?).abs());
    }
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        println!(
            "t={t:.2}  closed form {:.8}  ode {:.8}  dC/drho {:+.6}",
            merton_closed_form(&spec, t)?,
            sol.consumption_rate(t, 0),
            merton_rate_sensitivity(&spec, t)?
        );
    }
    println!("max |ode - closed form| over {} nodes: {worst:.2e}", sol.grid().len());
    Ok(())
}
