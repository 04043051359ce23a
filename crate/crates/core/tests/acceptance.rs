//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when
//! any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use regime_equilibrium::ctmc::{dynkin_check, stationary_distribution};
use regime_equilibrium::equilibrium::{merton_closed_form, picard_apply, solve, solve_g, solve_log, Branch};
use regime_equilibrium::report::RngSpec;
use regime_equilibrium::simulate::{
    certify, certify_with, default_certification_points, estimate_j, estimate_j_with, DiscountConvention,
    ProportionalStrategy, strategy_value, DEFAULT_PATH_STEPS,
};
use regime_equilibrium::{MarketSpec, RegimeGenerator};

const GAMMAS: [f64; 4] = [0.7, 0.0, -0.5, -1.0];
const PATHS: usize = 100_000;

struct Outcome {
    passed: bool,
    detail: String,
    notes: Vec<String>,
}

impl Outcome {
    fn new(passed: bool, detail: String) -> Self {
        Self { passed, detail, notes: Vec::new() }
    }
}

type Check = fn() -> Outcome;
/// Untimed context printed under a criterion; never affects the verdict.
type Diagnostics = Option<fn() -> Vec<String>>;

fn merton_spec() -> MarketSpec {
    MarketSpec::constant_discount(-1.0, 0.15, 0.25, 0.05, 0.9, 1.0)
}

fn closed_form() -> Outcome {
    let spec = merton_spec();
    let sol = solve_g(&spec).expect("solve");
    let grid = sol.grid();
    let worst = grid
        .iter()
        .flat_map(|&t| (0..2).map(move |i| (t, i)))
        .map(|(t, i)| (sol.consumption_rate(t, i) - merton_closed_form(&spec, t).unwrap()).abs())
        .fold(0.0, f64::max);
    // Independent evaluation of the closed form at t = 0.
    let eta: f64 = (0.9 + 0.15 * 0.15 / (2.0 * 0.25 * 0.25 * 2.0) + 0.05) / 2.0;
    let c0 = eta / (1.0 + (eta - 1.0) * (-eta).exp());
    let c0_ok = (merton_closed_form(&spec, 0.0).unwrap() - c0).abs() < 1e-12;
    let mut out = Outcome::new(
        worst <= 1e-6 && grid.len() - 1 == 2048 && c0_ok,
        format!("max|C_ode - C_closed| = {worst:.2e} over {} nodes; eta = {eta:.4}, C(0) = {c0:.6}", grid.len()),
    );
    out.notes.push("listed eta=0.495 / C(0)=0.71514 do not follow from the stated inputs; the formula gives 0.52 / 0.727649".into());
    out
}

fn terminal_conditions() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut exact = true;
    for g in GAMMAS {
        let sol = solve(&MarketSpec::reference(g)).expect("solve");
        let last = match &sol.branch {
            Branch::Power { g } => g.rows().last().unwrap().clone(),
            Branch::Log { h, .. } => h.rows().last().unwrap().clone(),
        };
        exact &= last.iter().all(|&v| v == 1.0);
        for i in 0..2 {
            worst = worst.max((sol.consumption_rate(1.0, i) - 1.0).abs());
        }
    }
    Outcome::new(exact && worst <= 1e-6, format!("terminal coefficient exactly 1: {exact}; max|C(T,i) - 1| = {worst:.1e}"))
}

fn log_ordering() -> Outcome {
    let sol = solve_log(&MarketSpec::reference(0.0)).expect("solve");
    let Branch::Log { h, .. } = &sol.branch else { unreachable!() };
    let rows = h.rows();
    let below = rows[..rows.len() - 1].iter().all(|r| r[0] < r[1]);
    let rates = sol.consumption_curve().strictly_above(0, 1);
    let min_gap = rows[..rows.len() - 1].iter().map(|r| r[1] - r[0]).fold(f64::INFINITY, f64::min);
    Outcome::new(below && rates, format!("h(t,0) < h(t,1) at all {} nodes before T; min gap {min_gap:.3e}", rows.len() - 1))
}

fn discount_monotonicity() -> Outcome {
    let step = 1e-4;
    let mut count = 0;
    let mut min_d = f64::INFINITY;
    for gamma in GAMMAS {
        for k in 1..=12 {
            let rho = 0.1 * k as f64;
            for t in [0.0, 0.5, 0.9] {
                let c = |r: f64| merton_closed_form(&MarketSpec::constant_discount(gamma, 0.15, 0.25, 0.05, r, 1.0), t).unwrap();
                let d = (c(rho + step) - c(rho - step)) / (2.0 * step);
                min_d = min_d.min(d);
                count += 1;
            }
        }
    }
    Outcome::new(min_d > 0.0, format!("{count} centred differences (gamma in {{0.7,0,-0.5,-1}}), min {min_d:.4e}"))
}

fn fig1() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for g in GAMMAS {
        let curve = solve(&MarketSpec::reference(g)).expect("solve").consumption_curve();
        let ordered = curve.strictly_above(0, 1);
        let term = curve.terminal_gap();
        ok &= ordered && term <= 1e-6;
        parts.push(format!("gamma={g}: ordered={ordered} |C(T)-1|={term:.0e}"));
    }
    Outcome::new(ok, parts.join("; "))
}

fn fixed_point() -> Outcome {
    let sol = solve_g(&MarketSpec::reference(-1.0)).expect("solve");
    let g = sol.g_table().unwrap();
    let est = picard_apply(&sol.spec, g, PATHS, &RngSpec::new(20_240_601)).expect("picard");
    let (worst, ok) = est.compare(g, 3.0, 2e-3);
    let max_se = est.std_errors.rows().iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    Outcome::new(ok, format!("sup|P[g] - g| = {worst:.2e} on 17 points (max stderr {max_se:.1e})"))
}

fn value_identity() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for gamma in [0.7, -1.0] {
        let spec = MarketSpec::reference(gamma);
        let sol = solve(&spec).expect("solve");
        let eq = ProportionalStrategy::equilibrium(&sol);
        for i in 0..2 {
            let target = sol.value_at(0.0, 1.0, i).unwrap();
            let rng = RngSpec::new(7).with_stream(i as u64);
            let r = estimate_j(&eq, 0.0, 1.0, i, &spec, PATHS, &rng).expect("estimate").against(target);
            let z = r.z_score.unwrap();
            ok &= z.abs() < 3.0;
            parts.push(format!("gamma={gamma} i={i}: J={:.5}+-{:.5} v={target:.5} z={z:+.1}", r.estimate, r.std_error));
        }
    }
    Outcome::new(ok, parts.join("; "))
}

fn value_identity_diagnostics() -> Vec<String> {
    let mut notes = Vec::new();
    for gamma in [0.7, -1.0] {
        let spec = MarketSpec::reference(gamma);
        let sol = solve(&spec).expect("solve");
        let eq = ProportionalStrategy::equilibrium(&sol);
        for i in 0..2 {
            let target = sol.value_at(0.0, 1.0, i).unwrap();
            let frozen = strategy_value(&eq, &spec, 0.0, 1.0, i, DiscountConvention::FrozenAtStart).expect("fk");
            let rng = RngSpec::new(7).with_stream(i as u64);
            let running =
                estimate_j_with(&eq, 0.0, 1.0, i, &spec, PATHS / 10, DEFAULT_PATH_STEPS, DiscountConvention::FollowsRegime, &rng)
                    .expect("estimate")
                    .against(target);
            notes.push(format!(
                "gamma={gamma} i={i}: frozen-discount oracle J={frozen:.5} vs value {target:.5}; regime-following discount MC z={:+.2} ({} paths)",
                running.z_score.unwrap(),
                PATHS / 10
            ));
        }
    }
    notes
}

fn slope_certificate() -> Outcome {
    let sol = solve(&MarketSpec::reference(-1.0)).expect("solve");
    let points = default_certification_points(1.0);
    let certs = certify(&sol, &points, 1e-6).expect("certify");
    let min = certs.iter().map(|c| c.estimate.extrapolated).fold(f64::INFINITY, f64::min);
    let ok = certs.len() == 30 && certs.iter().all(|c| c.passed);
    Outcome::new(ok, format!("gamma=-1: {} cells, min extrapolated slope {min:.4e}", certs.len()))
}

fn slope_diagnostics() -> Vec<String> {
    let points = default_certification_points(1.0);
    let mut notes = Vec::new();
    for gamma in [0.7, 0.0, -0.5] {
        let sol = solve(&MarketSpec::reference(gamma)).expect("solve");
        for conv in [DiscountConvention::FrozenAtStart, DiscountConvention::FollowsRegime] {
            let certs = certify_with(&sol, &points, 1e-6, conv).expect("certify");
            let neg = certs.iter().filter(|c| !c.passed).count();
            let min = certs.iter().map(|c| c.estimate.extrapolated).fold(f64::INFINITY, f64::min);
            notes.push(format!("gamma={gamma} {conv:?}: {neg} of 30 cells below -1e-6 (min {min:.4e})"));
        }
    }
    notes
}

fn generators() -> Outcome {
    let reference = MarketSpec::reference(-1.0).generator;
    let fixtures = [
        ("reference", reference.clone(), vec![1.0, -2.0]),
        ("symmetric", RegimeGenerator::new(vec![vec![-1.0, 1.0], vec![1.0, -1.0]]), vec![0.5, 3.0]),
        (
            "three-state",
            RegimeGenerator::new(vec![vec![-3.0, 2.0, 1.0], vec![0.5, -1.5, 1.0], vec![4.0, 0.0, -4.0]]),
            vec![1.0, -1.0, 2.0],
        ),
        (
            "four-state",
            RegimeGenerator::new(vec![
                vec![-2.0, 1.0, 0.5, 0.5],
                vec![0.3, -0.6, 0.2, 0.1],
                vec![5.0, 2.0, -8.0, 1.0],
                vec![0.0, 0.0, 3.0, -3.0],
            ]),
            vec![0.0, 1.0, -1.0, 4.0],
        ),
        ("absorbing", RegimeGenerator::new(vec![vec![-2.5, 2.5], vec![0.0, 0.0]]), vec![2.0, -1.0]),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, (name, g, f)) in fixtures.iter().enumerate() {
        let r = dynkin_check(g, f, 0, 1.0, PATHS, &RngSpec::new(99).with_stream(k as u64)).expect("dynkin");
        let z = r.z_score.unwrap();
        ok &= z.abs() < 3.0;
        parts.push(format!("{name} z={z:+.2}"));
    }
    let pi = stationary_distribution(&reference).expect("stationary");
    let err = (pi[0] - 10.9 / 16.94).abs().max((pi[1] - 6.04 / 16.94).abs());
    ok &= err <= 1e-10;
    parts.push(format!("stationary error {err:.1e}"));
    Outcome::new(ok, parts.join("; "))
}

fn gamma_continuity() -> Outcome {
    let log = solve_log(&MarketSpec::reference(0.0)).expect("solve");
    let mut worst: f64 = 0.0;
    for g in [1e-4, -1e-4] {
        let near = solve_g(&MarketSpec::reference(g)).expect("solve");
        for &t in log.grid() {
            for i in 0..2 {
                worst = worst.max((near.consumption_rate(t, i) - log.consumption_rate(t, i)).abs());
            }
        }
    }
    Outcome::new(worst <= 1e-3, format!("sup |C_(+-1e-4) - C_log| = {worst:.2e}"))
}

fn main() -> ExitCode {
    let secs = |s| Some(Duration::from_secs(s));
    let criteria: [(&str, Check, Option<Duration>, Diagnostics); 10] = [
        ("constant-discount closed form", closed_form, secs(1), None),
        ("terminal conditions", terminal_conditions, None, None),
        ("log-utility regime ordering", log_ordering, secs(1), None),
        ("consumption increases with the discount rate", discount_monotonicity, secs(1), None),
        ("reference curves: ordering and terminal value", fig1, secs(5), None),
        ("Picard fixed point", fixed_point, secs(60), None),
        ("value identity (Monte Carlo)", value_identity, secs(120), Some(value_identity_diagnostics)),
        ("equilibrium slope certificate", slope_certificate, secs(30), Some(slope_diagnostics)),
        ("generator correctness", generators, None, None),
        ("gamma continuity at the log branch", gamma_continuity, None, None),
    ];
    let mut failures = 0;
    for (k, (name, check, budget, diagnostics)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let in_time = budget.is_none_or(|b| elapsed < b);
        let passed = outcome.passed && in_time;
        failures += usize::from(!passed);
        let budget_text = budget.map_or(String::new(), |b| format!(" / budget {:.0?}", b));
        println!(
            "{} criterion {:>2}: {name}: {} [{:.2?}{budget_text}]",
            if passed { "PASS" } else { "FAIL" },
            k + 1,
            outcome.detail,
            elapsed
        );
        if !in_time {
            println!("       runtime budget exceeded");
        }
        for note in &outcome.notes {
            println!("       note: {note}");
        }
        for line in diagnostics.map(|d| d()).unwrap_or_default() {
            println!("       diagnostic: {line}");
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
