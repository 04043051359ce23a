use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// One broken invariant of a [`MarketSpec`](crate::model::MarketSpec).
#[derive(Debug, Clone, PartialEq)]
pub enum SpecViolation {
    TooFewStates(usize),
    Length { field: &'static str, expected: usize, got: usize },
    NonFinite { field: &'static str, index: usize },
    RowSum { row: usize, sum: f64 },
    NegativeRate { row: usize, col: usize, rate: f64 },
    NonPositiveSigma { state: usize, value: f64 },
    NonPositiveRho { state: usize, value: f64 },
    NonPositiveHorizon(f64),
    GammaTooLarge(f64),
    Schedule(String),
}

impl SpecViolation {
    /// Location of the offending field inside a spec, e.g. `generator[1]`.
    pub fn path(&self) -> String {
        match self {
            Self::TooFewStates(_) => "states".into(),
            Self::Length { field, .. } => (*field).into(),
            Self::NonFinite { field, index } => format!("{field}[{index}]"),
            Self::RowSum { row, .. } => format!("generator[{row}]"),
            Self::NegativeRate { row, col, .. } => format!("generator[{row}][{col}]"),
            Self::NonPositiveSigma { state, .. } => format!("sigma[{state}]"),
            Self::NonPositiveRho { state, .. } => format!("rho[{state}]"),
            Self::NonPositiveHorizon(_) => "horizon".into(),
            Self::GammaTooLarge(_) => "gamma".into(),
            Self::Schedule(_) => "schedule".into(),
        }
    }
}

impl fmt::Display for SpecViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TooFewStates(n) => write!(f, "need at least 2 states, got {n}"),
            Self::Length { field, expected, got } => {
                write!(f, "{field} has {got} entries, expected {expected}")
            }
            Self::NonFinite { field, index } => write!(f, "{field}[{index}] is not finite"),
            Self::RowSum { row, sum } => write!(f, "row {row} sums to {sum}"),
            Self::NegativeRate { row, col, rate } => {
                write!(f, "off-diagonal rate [{row}][{col}] = {rate} is negative")
            }
            Self::NonPositiveSigma { state, value } => {
                write!(f, "sigma[{state}] = {value} must be positive")
            }
            Self::NonPositiveRho { state, value } => {
                write!(f, "rho[{state}] = {value} must be positive")
            }
            Self::NonPositiveHorizon(t) => write!(f, "horizon {t} must be positive"),
            Self::GammaTooLarge(g) => write!(f, "gamma = {g} must be below 1"),
            Self::Schedule(msg) => write!(f, "coefficient schedule: {msg}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid market spec: {}", join(.0))]
    InvalidSpec(Vec<SpecViolation>),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("state {state} out of range for a {states}-state model")]
    StateOutOfRange { state: usize, states: usize },
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("non-finite derivative at t={t} in component {component}")]
    NonFinite { t: f64, component: usize },
    #[error("component {component} fell to {value} at t={t}, below the positivity floor")]
    Positivity { t: f64, component: usize, value: f64 },
    #[error("step-halving error control did not converge within {max_steps} steps")]
    Convergence { max_steps: usize },
    #[error("generator is reducible; closed class {0:?}")]
    ReducibleGenerator(Vec<usize>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join(v: &[SpecViolation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}
