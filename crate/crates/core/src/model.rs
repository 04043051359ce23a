//! Market data and CRRA preference primitives.
//!
//! A [`MarketSpec`] holds per-regime constants: riskless rate `r`, stock
//! return `alpha`, volatility `sigma` and discount rate `rho`, together with
//! the chain generator, the risk-aversion exponent `gamma` and the horizon.
//! The excess return is `mu = alpha - r`.
//!
//! Coefficients may optionally vary in time through a piecewise-constant
//! [`CoefficientSchedule`]; every solver reads coefficients through
//! [`MarketSpec::coeffs`], so the schedule is honoured everywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, SpecViolation};

/// Below this magnitude `gamma` selects the logarithmic branch.
pub const LOG_GAMMA_EPS: f64 = 1e-10;

const ROW_SUM_TOL: f64 = 1e-12;

/// Transition-rate matrix of the regime chain, rows summing to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegimeGenerator {
    rates: Vec<Vec<f64>>,
}

impl RegimeGenerator {
    /// Wraps a rate matrix without checking it; see [`RegimeGenerator::violations`].
    pub fn new(rates: Vec<Vec<f64>>) -> Self {
        Self { rates }
    }

    pub fn states(&self) -> usize {
        self.rates.len()
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.rates[from][to]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rates[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rates
    }

    /// Total exit rate `-lambda_ii`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        -self.rates[i][i]
    }

    /// `(Lambda y)_i = sum_j lambda_ij y_j`.
    pub fn apply(&self, i: usize, y: &[f64]) -> f64 {
        self.rates[i].iter().zip(y).map(|(l, v)| l * v).sum()
    }

    pub fn violations(&self) -> Vec<SpecViolation> {
        let n = self.rates.len();
        let mut out = Vec::new();
        for (i, row) in self.rates.iter().enumerate() {
            if row.len() != n {
                out.push(SpecViolation::Length { field: "generator row", expected: n, got: row.len() });
                continue;
            }
            for (j, &rate) in row.iter().enumerate() {
                if !rate.is_finite() {
                    out.push(SpecViolation::NonFinite { field: "generator", index: i * n + j });
                } else if i != j && rate < 0.0 {
                    out.push(SpecViolation::NegativeRate { row: i, col: j, rate });
                }
            }
            let sum: f64 = row.iter().sum();
            if sum.is_finite() && sum.abs() > ROW_SUM_TOL {
                out.push(SpecViolation::RowSum { row: i, sum });
            }
        }
        out
    }
}

/// CRRA preferences: `U(c) = c^gamma / gamma`, or `ln c` on the log branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preferences {
    pub gamma: f64,
    pub is_log: bool,
}

impl Preferences {
    pub fn new(gamma: f64) -> Self {
        Self { gamma, is_log: gamma.abs() < LOG_GAMMA_EPS }
    }

    pub fn log() -> Self {
        Self { gamma: 0.0, is_log: true }
    }
}

/// Market coefficients in force for one regime at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coeffs {
    pub r: f64,
    pub alpha: f64,
    pub sigma: f64,
}

impl Coeffs {
    pub fn mu(&self) -> f64 {
        self.alpha - self.r
    }
}

/// Piecewise-constant-in-time override of `r`, `alpha`, `sigma`.
///
/// Segment `k` applies on `[starts[k], starts[k+1])`; the last one runs to the
/// horizon. `starts[0]` must be `0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSchedule {
    pub starts: Vec<f64>,
    pub segments: Vec<Vec<Coeffs>>,
}

impl CoefficientSchedule {
    fn segment_index(&self, t: f64, left: bool) -> usize {
        let k = if left {
            self.starts.partition_point(|&s| s < t)
        } else {
            self.starts.partition_point(|&s| s <= t)
        };
        k.saturating_sub(1)
    }

    fn violations(&self, states: usize, horizon: f64) -> Vec<SpecViolation> {
        let mut out = Vec::new();
        if self.starts.is_empty() || self.starts.len() != self.segments.len() {
            out.push(SpecViolation::Schedule("starts and segments must be non-empty and equal length".into()));
            return out;
        }
        if self.starts[0] != 0.0 {
            out.push(SpecViolation::Schedule("first segment must start at 0".into()));
        }
        if self.starts.windows(2).any(|w| w[1] <= w[0]) || self.starts.iter().any(|&s| s >= horizon && s != 0.0) {
            out.push(SpecViolation::Schedule("segment starts must increase strictly inside [0, T)".into()));
        }
        for (k, seg) in self.segments.iter().enumerate() {
            if seg.len() != states {
                out.push(SpecViolation::Schedule(format!("segment {k} has {} states", seg.len())));
            }
            for (i, c) in seg.iter().enumerate() {
                if !(c.sigma > 0.0) || !c.r.is_finite() || !c.alpha.is_finite() || !c.sigma.is_finite() {
                    out.push(SpecViolation::Schedule(format!("segment {k} state {i} has invalid coefficients")));
                }
            }
        }
        out
    }
}

/// Per-regime market, discount and preference data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    pub states: usize,
    pub r: Vec<f64>,
    pub alpha: Vec<f64>,
    pub sigma: Vec<f64>,
    pub generator: RegimeGenerator,
    pub rho: Vec<f64>,
    pub gamma: f64,
    pub horizon: f64,
    #[serde(skip)]
    pub schedule: Option<CoefficientSchedule>,
}

impl MarketSpec {
    /// The two-regime market of the reference experiment: `mu = 0.15`,
    /// `sigma = 0.25`, `r = 0.05` in both regimes, `rho = (0.9, 0.3)`,
    /// generator `[[-6.04, 6.04], [10.9, -10.9]]`, `T = 1`.
    pub fn reference(gamma: f64) -> Self {
        Self {
            states: 2,
            r: vec![0.05, 0.05],
            alpha: vec![0.20, 0.20],
            sigma: vec![0.25, 0.25],
            generator: RegimeGenerator::new(vec![vec![-6.04, 6.04], vec![10.9, -10.9]]),
            rho: vec![0.9, 0.3],
            gamma,
            horizon: 1.0,
            schedule: None,
        }
    }

    /// Two identical regimes sharing one discount rate.
    pub fn constant_discount(gamma: f64, mu: f64, sigma: f64, r: f64, rho: f64, horizon: f64) -> Self {
        Self {
            states: 2,
            r: vec![r; 2],
            alpha: vec![r + mu; 2],
            sigma: vec![sigma; 2],
            generator: RegimeGenerator::new(vec![vec![-1.0, 1.0], vec![1.0, -1.0]]),
            rho: vec![rho; 2],
            gamma,
            horizon,
            schedule: None,
        }
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self { gamma, ..self.clone() }
    }

    pub fn with_schedule(mut self, schedule: CoefficientSchedule) -> Self {
        self.schedule = Some(schedule);
        self
    }

    pub fn preferences(&self) -> Preferences {
        Preferences::new(self.gamma)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("market spec serializes")
    }

    pub fn check_state(&self, i: usize) -> Result<()> {
        if i < self.states {
            Ok(())
        } else {
            Err(Error::StateOutOfRange { state: i, states: self.states })
        }
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        if (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::TimeOutOfRange { t, horizon: self.horizon })
        }
    }

    /// Coefficients in force at `t` in regime `i` (right-continuous in `t`).
    pub fn coeffs(&self, t: f64, i: usize) -> Coeffs {
        match &self.schedule {
            Some(s) => s.segments[s.segment_index(t, false)][i],
            None => Coeffs { r: self.r[i], alpha: self.alpha[i], sigma: self.sigma[i] },
        }
    }

    /// Left limit of [`MarketSpec::coeffs`] at `t`.
    pub fn coeffs_left(&self, t: f64, i: usize) -> Coeffs {
        match &self.schedule {
            Some(s) => s.segments[s.segment_index(t, true)][i],
            None => self.coeffs(t, i),
        }
    }

    /// Times in `(0, T)` where the coefficient schedule switches.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.schedule {
            Some(s) => s.starts.iter().copied().filter(|&t| t > 0.0 && t < self.horizon).collect(),
            None => Vec::new(),
        }
    }

    /// True when every regime shares the same discount rate and coefficients.
    pub fn is_state_independent(&self) -> bool {
        let same = |v: &[f64]| v.iter().all(|&x| x == v[0]);
        self.schedule.is_none() && same(&self.rho) && same(&self.r) && same(&self.alpha) && same(&self.sigma)
    }

    pub fn violations(&self) -> Vec<SpecViolation> {
        let mut out = Vec::new();
        if self.states < 2 {
            out.push(SpecViolation::TooFewStates(self.states));
        }
        let n = self.states;
        for (field, v) in [("r", &self.r), ("alpha", &self.alpha), ("sigma", &self.sigma), ("rho", &self.rho)] {
            if v.len() != n {
                out.push(SpecViolation::Length { field, expected: n, got: v.len() });
            }
            for (i, x) in v.iter().enumerate() {
                if !x.is_finite() {
                    out.push(SpecViolation::NonFinite { field, index: i });
                }
            }
        }
        if self.generator.states() != n {
            out.push(SpecViolation::Length { field: "generator", expected: n, got: self.generator.states() });
        }
        out.extend(self.generator.violations());
        for (i, &s) in self.sigma.iter().enumerate() {
            if !(s > 0.0) && s.is_finite() {
                out.push(SpecViolation::NonPositiveSigma { state: i, value: s });
            }
        }
        for (i, &p) in self.rho.iter().enumerate() {
            if !(p > 0.0) && p.is_finite() {
                out.push(SpecViolation::NonPositiveRho { state: i, value: p });
            }
        }
        if !(self.horizon > 0.0) {
            out.push(SpecViolation::NonPositiveHorizon(self.horizon));
        }
        if !(self.gamma < 1.0) {
            out.push(SpecViolation::GammaTooLarge(self.gamma));
        }
        if let Some(s) = &self.schedule {
            out.extend(s.violations(n, self.horizon));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(v))
        }
    }
}

/// Returns the spec unchanged when every invariant holds, otherwise the full
/// list of violations.
pub fn validate_spec(spec: MarketSpec) -> Result<MarketSpec> {
    spec.validate()?;
    Ok(spec)
}

pub fn utility(c: f64, prefs: &Preferences) -> Result<f64> {
    if c.is_nan() || c < 0.0 {
        return Err(Error::Domain(format!("utility of negative consumption {c}")));
    }
    if prefs.is_log {
        if c == 0.0 {
            return Err(Error::Domain("log utility at zero".into()));
        }
        Ok(c.ln())
    } else {
        if c == 0.0 && prefs.gamma < 0.0 {
            return Err(Error::Domain(format!("power utility with gamma={} at zero", prefs.gamma)));
        }
        Ok(c.powf(prefs.gamma) / prefs.gamma)
    }
}

/// `U'(c)`, used by tests and the policy first-order conditions.
pub fn marginal_utility(c: f64, prefs: &Preferences) -> f64 {
    if prefs.is_log {
        1.0 / c
    } else {
        c.powf(prefs.gamma - 1.0)
    }
}

pub fn inverse_marginal_utility(y: f64, prefs: &Preferences) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::Domain(format!("inverse marginal utility needs y > 0, got {y}")));
    }
    if prefs.is_log {
        Ok(1.0 / y)
    } else {
        Ok(y.powf(1.0 / (prefs.gamma - 1.0)))
    }
}

pub fn excess_return(spec: &MarketSpec, i: usize) -> Result<f64> {
    spec.check_state(i)?;
    Ok(spec.alpha[i] - spec.r[i])
}
