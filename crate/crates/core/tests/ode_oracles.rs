//! The backward integrator and the linear systems built on it, checked
//! against matrix-exponential solutions.

mod common;

use common::{affine_backward, generator_matrix};
use nalgebra::{DMatrix, DVector};
use regime_equilibrium::equilibrium::{solve_log, Branch};
use regime_equilibrium::ode::{residual_norm, solve_terminal_ode, FnSystem, SolveSettings};
use regime_equilibrium::simulate::{feynman_kac_value_with, Discount, FkValue, ProportionalStrategy};
use regime_equilibrium::MarketSpec;

#[test]
fn linear_two_state_system_matches_matrix_exponential() {
    let m = DMatrix::from_row_slice(2, 2, &[-0.7, 0.4, 1.3, -2.1]);
    let c = DVector::from_vec(vec![0.5, -0.25]);
    let mm = m.clone();
    let cc = c.clone();
    let system = FnSystem {
        horizon: 2.0,
        terminal: vec![1.0, 3.0],
        rhs: move |_t: f64, y: &[f64], dy: &mut [f64]| {
            for i in 0..2 {
                dy[i] = -(mm[(i, 0)] * y[0] + mm[(i, 1)] * y[1] + cc[i]);
            }
        },
    };
    let table = solve_terminal_ode(&system, 2048).unwrap();
    let y_t = DVector::from_vec(vec![1.0, 3.0]);
    for (k, &t) in table.grid().iter().enumerate() {
        let exact = affine_backward(&m, &c, &y_t, 2.0 - t);
        for i in 0..2 {
            assert!((table.rows()[k][i] - exact[i]).abs() <= 1e-8, "t={t} i={i}");
        }
    }
    assert!(residual_norm(&system, &table).unwrap() < 1e-5);
}

#[test]
fn log_h_matches_matrix_exponential() {
    let spec = MarketSpec::reference(0.0);
    let sol = solve_log(&spec).unwrap();
    let Branch::Log { h, .. } = &sol.branch else { panic!("log branch") };
    let m = generator_matrix(spec.generator.rows()) - DMatrix::from_diagonal(&DVector::from_vec(spec.rho.clone()));
    let ones = DVector::from_element(2, 1.0);
    for (k, &t) in h.grid().iter().enumerate().step_by(64) {
        let exact = affine_backward(&m, &ones, &ones, 1.0 - t);
        for i in 0..2 {
            assert!((h.rows()[k][i] - exact[i]).abs() <= 1e-8);
        }
    }
}

fn constant_strategy() -> ProportionalStrategy {
    ProportionalStrategy::Constant { invest: vec![1.5, 0.4], consume: vec![0.6, 1.1] }
}

fn power_fk_oracle(spec: &MarketSpec, strategy: &ProportionalStrategy, rho: &[f64], t: f64) -> DVector<f64> {
    let g = spec.gamma;
    let diag: Vec<f64> = (0..2)
        .map(|i| {
            let (a, b) = strategy.fractions(0.0, i);
            let c = spec.coeffs(0.0, i);
            g * (c.r + c.mu() * a - b) + 0.5 * g * (g - 1.0) * c.sigma * c.sigma * a * a - rho[i]
        })
        .collect();
    let m = DMatrix::from_diagonal(&DVector::from_vec(diag)) + generator_matrix(spec.generator.rows());
    let c = DVector::from_iterator(2, (0..2).map(|i| strategy.fractions(0.0, i).1.powf(g)));
    affine_backward(&m, &c, &DVector::from_element(2, 1.0), spec.horizon - t)
}

#[test]
fn feynman_kac_power_matches_oracle_for_both_discounts() {
    let strategy = constant_strategy();
    for gamma in [0.7, -0.5, -1.0] {
        let spec = MarketSpec::reference(gamma);
        let regime = feynman_kac_value_with(&strategy, Discount::Regime, &spec, &[], &SolveSettings::default()).unwrap();
        let frozen = feynman_kac_value_with(&strategy, Discount::Frozen(0.9), &spec, &[], &SolveSettings::default()).unwrap();
        let (FkValue::Power { f: fr, .. }, FkValue::Power { f: ff, .. }) = (&regime, &frozen) else { panic!("power") };
        for t in [0.0, 0.3, 0.77] {
            // Compare at the grid node at or below t.
            let k = fr.grid().partition_point(|&s| s <= t) - 1;
            let tk = fr.grid()[k];
            let a = power_fk_oracle(&spec, &strategy, &spec.rho, tk);
            let b = power_fk_oracle(&spec, &strategy, &[0.9, 0.9], tk);
            for i in 0..2 {
                assert!((fr.rows()[k][i] - a[i]).abs() <= 1e-8, "gamma={gamma} t={tk} i={i}");
                assert!((ff.rows()[k][i] - b[i]).abs() <= 1e-8, "gamma={gamma} t={tk} i={i}");
            }
        }
    }
}
