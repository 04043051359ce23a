//! Simulates wealth under the equilibrium policy with the exact log-space
//! scheme and with Euler-Maruyama on the same Brownian path.

use regime_equilibrium::ctmc::sample_path;
use regime_equilibrium::equilibrium::solve;
use regime_equilibrium::report::RngSpec;
use regime_equilibrium::simulate::{simulate_wealth, ProportionalStrategy, Scheme};
use regime_equilibrium::MarketSpec;

fn main() -> regime_equilibrium::Result<()> {
    let spec = MarketSpec::reference(-0.5);
    let eq = ProportionalStrategy::equilibrium(&solve(&spec)?);
    let rng = RngSpec::new(9);
    let chain = sample_path(&spec.generator, 0, spec.horizon, &rng.chain_stream(0));
    let exact = simulate_wealth(&eq, 1.0, &chain, &spec, 256, &rng.brownian_stream(0), Scheme::Exact)?;
    let euler = simulate_wealth(&eq, 1.0, &chain, &spec, 256, &rng.brownian_stream(0), Scheme::Euler)?;
    println!("jumps at {:?}", chain.jump_times);
    println!("{:>8} {:>6} {:>12} {:>12}", "t", "state", "exact", "euler");
    for k in (0..exact.times.len()).step_by(32).chain([exact.times.len() - 1]) {
        let t = exact.times[k];
        println!("{t:>8.4} {:>6} {:>12.6} {:>12.6}", chain.state_at(t), exact.wealth[k], euler.wealth[k]);
    }
    Ok(())
}
