//! The deterministic strategy-value oracle against closed forms, the solved
//! value function and Monte Carlo.

use regime_equilibrium::equilibrium::{closed_form_g, merton_closed_form, solve, solve_g};
use regime_equilibrium::report::RngSpec;
use regime_equilibrium::simulate::{
    certify, default_certification_points, equilibrium_slope, estimate_j, feynman_kac_value, strategy_value,
    DiscountConvention, ProportionalStrategy,
};
use regime_equilibrium::MarketSpec;

#[test]
fn common_discount_reproduces_closed_form_value() {
    for gamma in [0.7, -0.5, -1.0] {
        let spec = MarketSpec::constant_discount(gamma, 0.15, 0.25, 0.05, 0.9, 1.0);
        let sol = solve_g(&spec).unwrap();
        let fk = feynman_kac_value(&ProportionalStrategy::equilibrium(&sol), 0.9, &spec).unwrap();
        let g_closed = closed_form_g(&spec, sol.grid()).unwrap();
        for (k, &t) in sol.grid().iter().enumerate().step_by(97) {
            for i in 0..2 {
                let expected = g_closed.rows()[k][i] * 1.3f64.powf(gamma) / gamma;
                assert!((fk.value(t, 1.3, i) - expected).abs() <= 1e-6, "gamma={gamma} t={t}");
            }
            let c = merton_closed_form(&spec, t).unwrap();
            assert!((g_closed.rows()[k][0] - c.powf(gamma - 1.0)).abs() < 1e-12);
        }
    }
}

#[test]
fn regime_following_discount_reproduces_solved_value() {
    for gamma in [0.7, 0.0, -0.5, -1.0] {
        let spec = MarketSpec::reference(gamma);
        let sol = solve(&spec).unwrap();
        let eq = ProportionalStrategy::equilibrium(&sol);
        for t in [0.0, 0.5] {
            for i in 0..2 {
                let v = strategy_value(&eq, &spec, t, 2.0, i, DiscountConvention::FollowsRegime).unwrap();
                let w = sol.value_at(t, 2.0, i).unwrap();
                assert!((v - w).abs() <= 1e-6 * w.abs().max(1.0), "gamma={gamma} t={t} i={i}: {v} vs {w}");
            }
        }
    }
}

#[test]
fn frozen_discount_differs_from_solved_value_when_rates_differ() {
    let spec = MarketSpec::reference(-1.0);
    let sol = solve(&spec).unwrap();
    let eq = ProportionalStrategy::equilibrium(&sol);
    let frozen = strategy_value(&eq, &spec, 0.0, 1.0, 0, DiscountConvention::FrozenAtStart).unwrap();
    let value = sol.value_at(0.0, 1.0, 0).unwrap();
    // A smaller discount on regime-1 spells than rho_1 would apply raises a negative utility.
    assert!(frozen > value + 0.1, "{frozen} vs {value}");
}

#[test]
fn monte_carlo_matches_frozen_oracle_for_constant_strategy() {
    let s = ProportionalStrategy::Constant { invest: vec![1.2, 0.3], consume: vec![0.7, 1.4] };
    for gamma in [0.5, -1.0] {
        let spec = MarketSpec::reference(gamma);
        for i in 0..2 {
            let target = strategy_value(&s, &spec, 0.2, 1.5, i, DiscountConvention::FrozenAtStart).unwrap();
            let r = estimate_j(&s, 0.2, 1.5, i, &spec, 20_000, &RngSpec::new(41).with_stream(i as u64)).unwrap().against(target);
            assert!(r.z_score.unwrap().abs() < 3.0, "gamma={gamma} i={i}: {r:?}");
        }
    }
}

#[test]
fn slopes_scale_linearly_in_wealth_for_log_and_homothetically_for_power() {
    let sol = solve(&MarketSpec::reference(-0.5)).unwrap();
    let eq = ProportionalStrategy::equilibrium(&sol);
    let pert = eq.scaled(1.0, 2.0);
    let eps = [0.1, 0.05, 0.025];
    let s1 = equilibrium_slope(&sol, 0.3, 1.0, 1, &pert, &eps).unwrap();
    let s2 = equilibrium_slope(&sol, 0.3, 2.0, 1, &pert, &eps).unwrap();
    let ratio = s2.extrapolated / s1.extrapolated;
    assert!((ratio - 2.0f64.powf(-0.5)).abs() < 1e-8, "{ratio}");
}

#[test]
fn certification_passes_with_a_common_discount() {
    // One discount rate: frozen and regime-following agree, so the
    // equilibrium is certified at every risk aversion.
    for gamma in [0.7, 0.0, -1.0] {
        let mut spec = MarketSpec::reference(gamma);
        spec.rho = vec![0.6, 0.6];
        let sol = solve(&spec).unwrap();
        let certs = certify(&sol, &default_certification_points(1.0), 1e-6).unwrap();
        assert!(certs.iter().all(|c| c.passed), "gamma={gamma}");
    }
}
