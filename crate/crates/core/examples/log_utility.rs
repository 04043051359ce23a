//! Log utility: the value is `h ln x + l`, consumption is `x / h`, and the
//! regime with the higher discount rate consumes more.

use regime_equilibrium::equilibrium::{solve, solve_g, Branch};
use regime_equilibrium::MarketSpec;

fn main() -> regime_equilibrium::Result<()> {
    let sol = solve(&MarketSpec::reference(0.0))?;
    let Branch::Log { h, l } = &sol.branch else { unreachable!("gamma = 0 selects the log branch") };
    println!("{:>5} {:>10} {:>10} {:>10} {:>10}", "t", "h0", "h1", "l0", "l1");
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        println!("{t:>5.2} {:>10.6} {:>10.6} {:>10.6} {:>10.6}", h.value(t, 0), h.value(t, 1), l.value(t, 0), l.value(t, 1));
    }
    let curve = sol.consumption_curve();
    println!("C(t,0) > C(t,1) on [0,T): {}", curve.strictly_above(0, 1));
    for g in [1e-4, -1e-4] {
        let near = solve_g(&MarketSpec::reference(g))?;
        let gap = sol.grid().iter().map(|&t| (near.consumption_rate(t, 0) - sol.consumption_rate(t, 0)).abs()).fold(0.0, f64::max);
        println!("gamma={g:+e}: sup |C - C_log| in state 0 = {gap:.2e}");
    }
    Ok(())
}
