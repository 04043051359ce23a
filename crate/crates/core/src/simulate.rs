//! Wealth simulation and evaluation of proportional feedback strategies.
//!
//! A proportional strategy invests `a(t,i) X` and consumes `b(t,i) X`. Its
//! expected utility from `(t, x, i)` is homothetic in `x`, so it reduces to a
//! per-regime linear ODE (the Feynman-Kac representation). That gives a
//! noise-free oracle used both to certify the equilibrium against
//! perturbations and to cross-check Monte-Carlo estimates.
//!
//! Discounting defaults to the objective's convention: the rate of the regime
//! at the evaluation time is frozen for the whole remaining horizon.
//! [`Discount::Regime`] instead accumulates the rate of the regime currently
//! in force, `exp(-int rho_{J(u)} du)`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ctmc::{sample_path_with, JumpPath};
use crate::equilibrium::EquilibriumSolution;
use crate::error::{Error, Result};
use crate::model::{utility, MarketSpec};
use crate::ode::{solve_terminal_ode_with, OdeSystem, SolutionTable, SolveSettings, DEFAULT_STEPS};
use crate::report::{McReport, RngSpec};

/// Default number of time steps per simulated path.
pub const DEFAULT_PATH_STEPS: usize = 2048;

/// Default Monte-Carlo ensemble size.
pub const DEFAULT_PATHS: usize = 100_000;

/// Feedback fractions of wealth: `a` invested, `b` consumed per year.
#[derive(Debug, Clone, PartialEq)]
pub enum ProportionalStrategy {
    /// Per-regime constants.
    Constant { invest: Vec<f64>, consume: Vec<f64> },
    /// Time tables with one column per regime.
    Tables { invest: SolutionTable, consume: SolutionTable },
    /// The equilibrium policy of a solved model.
    Equilibrium(Box<EquilibriumSolution>),
    /// `base` with both fractions multiplied by fixed factors.
    Scaled { base: Box<ProportionalStrategy>, invest_scale: f64, consume_scale: f64 },
    /// `inner` on `[from, to)`, `base` elsewhere.
    Spliced { base: Box<ProportionalStrategy>, from: f64, to: f64, inner: Box<ProportionalStrategy> },
}

impl ProportionalStrategy {
    pub fn equilibrium(sol: &EquilibriumSolution) -> Self {
        Self::Equilibrium(Box::new(sol.clone()))
    }

    pub fn scaled(&self, invest_scale: f64, consume_scale: f64) -> Self {
        Self::Scaled { base: Box::new(self.clone()), invest_scale, consume_scale }
    }

    /// `self` everywhere except `inner` on `[from, to)`.
    pub fn splice(&self, from: f64, to: f64, inner: &ProportionalStrategy) -> Self {
        Self::Spliced { base: Box::new(self.clone()), from, to, inner: Box::new(inner.clone()) }
    }

    /// `(a, b)` at `t` in regime `i`, right-continuous.
    pub fn fractions(&self, t: f64, i: usize) -> (f64, f64) {
        self.eval(t, i, false)
    }

    /// Left limit of [`ProportionalStrategy::fractions`].
    pub fn fractions_left(&self, t: f64, i: usize) -> (f64, f64) {
        self.eval(t, i, true)
    }

    fn eval(&self, t: f64, i: usize, left: bool) -> (f64, f64) {
        match self {
            Self::Constant { invest, consume } => (invest[i], consume[i]),
            Self::Tables { invest, consume } => (invest.value(t, i), consume.value(t, i)),
            Self::Equilibrium(sol) => {
                let a = if left { sol.investment_fraction_left(t, i) } else { sol.investment_fraction(t, i) };
                (a, sol.consumption_rate(t, i))
            }
            Self::Scaled { base, invest_scale, consume_scale } => {
                let (a, b) = base.eval(t, i, left);
                (a * invest_scale, b * consume_scale)
            }
            Self::Spliced { base, from, to, inner } => {
                let inside = if left { *from < t && t <= *to } else { *from <= t && t < *to };
                if inside {
                    inner.eval(t, i, left)
                } else {
                    base.eval(t, i, left)
                }
            }
        }
    }

    /// Times where the fractions may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::Constant { .. } | Self::Tables { .. } => Vec::new(),
            Self::Equilibrium(sol) => sol.spec.breakpoints(),
            Self::Scaled { base, .. } => base.breakpoints(),
            Self::Spliced { base, from, to, inner } => {
                let mut v = base.breakpoints();
                v.extend(inner.breakpoints());
                v.push(*from);
                v.push(*to);
                v
            }
        }
    }

    /// Checks finiteness and `b >= 0` on a probe grid; with `need_positive`
    /// also `b > 0` (utility at zero consumption diverges for `gamma <= 0`).
    pub fn check(&self, spec: &MarketSpec, from: f64, need_positive: bool) -> Result<()> {
        let probes = 257;
        let mut times: Vec<f64> = (0..probes).map(|k| from + (spec.horizon - from) * k as f64 / (probes - 1) as f64).collect();
        times.extend(self.breakpoints().into_iter().filter(|&b| b >= from && b <= spec.horizon));
        for &t in &times {
            for i in 0..spec.states {
                for (a, b) in [self.fractions(t, i), self.fractions_left(t, i)] {
                    if !a.is_finite() || !b.is_finite() || b < 0.0 {
                        return Err(Error::Domain(format!("strategy fractions ({a}, {b}) invalid at t={t}, state {i}")));
                    }
                    if need_positive && b == 0.0 {
                        return Err(Error::Domain(format!("zero consumption at t={t}, state {i} has infinite disutility")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// How future utility is discounted when evaluating from regime `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Discount {
    /// One rate for the whole horizon.
    Frozen(f64),
    /// The rate of whichever regime is in force.
    Regime,
}

/// Which rate the evaluation state's functional uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscountConvention {
    /// `rho_i` of the starting regime, held fixed.
    #[default]
    FrozenAtStart,
    /// `rho_{J(s)}` accumulated along the path.
    FollowsRegime,
}

impl DiscountConvention {
    fn discount(self, spec: &MarketSpec, i: usize) -> Discount {
        match self {
            Self::FrozenAtStart => Discount::Frozen(spec.rho[i]),
            Self::FollowsRegime => Discount::Regime,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Log-space solution of the linear SDE; wealth stays positive.
    Exact,
    /// Raw Euler-Maruyama increments of the wealth SDE.
    Euler,
}

/// A simulated wealth trajectory on a grid that contains every jump time.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthPath {
    pub times: Vec<f64>,
    pub wealth: Vec<f64>,
    pub chain: JumpPath,
    pub rng: RngSpec,
    /// False when the Euler scheme hit `X <= 0`; the path stops there.
    pub valid: bool,
}

impl WealthPath {
    pub fn terminal(&self) -> f64 {
        *self.wealth.last().unwrap()
    }
}

/// Uniform `n_grid`-step grid over the chain path's span with its jump
/// times inserted.
pub fn path_grid(chain: &JumpPath, n_grid: usize) -> Vec<f64> {
    let (a, b) = (chain.start, chain.horizon);
    let mut grid: Vec<f64> = (0..=n_grid).map(|k| a + (b - a) * k as f64 / n_grid as f64).collect();
    grid.extend(chain.jump_times.iter().copied().filter(|&t| t > a && t < b));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Independent `N(0, dt)` increments for each cell of `grid`.
pub fn brownian_increments<R: Rng + ?Sized>(grid: &[f64], rng: &mut R) -> Vec<f64> {
    grid.windows(2)
        .map(|w| {
            let z: f64 = rng.sample(StandardNormal);
            z * (w[1] - w[0]).sqrt()
        })
        .collect()
}

/// Log-wealth drift `r + mu a - b - sigma^2 a^2 / 2` and volatility `sigma a`.
fn log_coefficients(spec: &MarketSpec, strategy: &ProportionalStrategy, t: f64, i: usize, left: bool) -> (f64, f64, f64) {
    let c = if left { spec.coeffs_left(t, i) } else { spec.coeffs(t, i) };
    let (a, b) = if left { strategy.fractions_left(t, i) } else { strategy.fractions(t, i) };
    let vol = c.sigma * a;
    (c.r + c.mu() * a - b - 0.5 * vol * vol, vol, b)
}

/// Wealth along `grid` (which must contain the chain's jump times) driven
/// by the given Brownian increments.
pub fn simulate_wealth_on(
    strategy: &ProportionalStrategy,
    x0: f64,
    chain: &JumpPath,
    spec: &MarketSpec,
    grid: &[f64],
    dw: &[f64],
    scheme: Scheme,
) -> (Vec<f64>, bool) {
    let mut wealth = Vec::with_capacity(grid.len());
    wealth.push(x0);
    let mut x = x0;
    let mut state = chain.state_at(grid[0]);
    let mut next_jump = 0;
    for (k, w) in grid.windows(2).enumerate() {
        let (s, e) = (w[0], w[1]);
        while next_jump < chain.jump_times.len() && chain.jump_times[next_jump] <= s {
            state = chain.jump_targets[next_jump];
            next_jump += 1;
        }
        let dt = e - s;
        match scheme {
            Scheme::Exact => {
                let (d0, v0, _) = log_coefficients(spec, strategy, s, state, false);
                let (d1, _, _) = log_coefficients(spec, strategy, e, state, true);
                x *= (0.5 * (d0 + d1) * dt + v0 * dw[k]).exp();
            }
            Scheme::Euler => {
                let c = spec.coeffs(s, state);
                let (a, b) = strategy.fractions(s, state);
                x += x * (c.r + c.mu() * a - b) * dt + c.sigma * a * x * dw[k];
                if !(x > 0.0) {
                    wealth.push(x);
                    return (wealth, false);
                }
            }
        }
        wealth.push(x);
    }
    (wealth, true)
}

/// Simulates wealth along `chain` on a uniform `n_grid` grid plus jump times.
pub fn simulate_wealth(
    strategy: &ProportionalStrategy,
    x0: f64,
    chain: &JumpPath,
    spec: &MarketSpec,
    n_grid: usize,
    rng: &RngSpec,
    scheme: Scheme,
) -> Result<WealthPath> {
    if !(x0 > 0.0) {
        return Err(Error::Domain(format!("initial wealth must be positive, got {x0}")));
    }
    if n_grid == 0 {
        return Err(Error::InvalidArgument("n_grid must be positive".into()));
    }
    strategy.check(spec, chain.start, false)?;
    let grid = path_grid(chain, n_grid);
    let dw = brownian_increments(&grid, &mut rng.rng());
    let (wealth, valid) = simulate_wealth_on(strategy, x0, chain, spec, &grid, &dw, scheme);
    let times = grid[..wealth.len()].to_vec();
    Ok(WealthPath { times, wealth, chain: chain.clone(), rng: rng.clone(), valid })
}

/// Monte-Carlo estimate of the discounted utility of `strategy` from
/// `(t, x, i)` with the frozen starting-regime discount.
pub fn estimate_j(
    strategy: &ProportionalStrategy,
    t: f64,
    x: f64,
    i: usize,
    spec: &MarketSpec,
    n_paths: usize,
    rng: &RngSpec,
) -> Result<McReport> {
    estimate_j_with(strategy, t, x, i, spec, n_paths, DEFAULT_PATH_STEPS, DiscountConvention::FrozenAtStart, rng)
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_j_with(
    strategy: &ProportionalStrategy,
    t: f64,
    x: f64,
    i: usize,
    spec: &MarketSpec,
    n_paths: usize,
    n_grid: usize,
    convention: DiscountConvention,
    rng: &RngSpec,
) -> Result<McReport> {
    spec.validate()?;
    spec.check_time(t)?;
    spec.check_state(i)?;
    let prefs = spec.preferences();
    if !(x > 0.0) {
        return Err(Error::Domain(format!("initial wealth must be positive, got {x}")));
    }
    if n_paths == 0 || n_grid == 0 {
        return Err(Error::InvalidArgument("need at least one path and one step".into()));
    }
    strategy.check(spec, t, prefs.is_log || prefs.gamma < 0.0)?;
    if t == spec.horizon {
        let u = utility(x, &prefs)?;
        return Ok(McReport::from_samples(&vec![u; n_paths], rng.clone()));
    }
    let table = NodeTable::new(spec, strategy, t, n_grid);
    let rates: Vec<f64> = match convention {
        DiscountConvention::FrozenAtStart => vec![spec.rho[i]; spec.states],
        DiscountConvention::FollowsRegime => spec.rho.clone(),
    };
    let gamma = prefs.gamma;
    let is_log = prefs.is_log;
    // Discounted utility of consumption exp(ln_b + ln_x), in log space.
    let integrand = move |ln_b: f64, ln_x: f64, disc: f64| {
        if is_log {
            (-disc).exp() * (ln_b + ln_x)
        } else {
            (gamma * (ln_b + ln_x) - disc).exp() / gamma
        }
    };
    let samples: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let chain = sample_path_with(&spec.generator, i, t, spec.horizon, &mut rng.chain_stream(k).rng());
            let mut bm = rng.brownian_stream(k).rng();
            let mut state = i;
            let mut next_jump = 0;
            let mut ln_x = x.ln();
            let mut disc = 0.0_f64;
            let mut total = 0.0_f64;
            let mut step = |a: f64, b: f64, ca: NodeCoef, cb: NodeCoef, sqrt_dt: f64, rate: f64| {
                let dt = b - a;
                let z: f64 = bm.sample(StandardNormal);
                let f0 = integrand(ca.ln_b, ln_x, disc);
                ln_x += 0.5 * (ca.drift + cb.drift) * dt + ca.vol * sqrt_dt * z;
                disc += rate * dt;
                total += 0.5 * dt * (f0 + integrand(cb.ln_b, ln_x, disc));
            };
            for n in 0..table.times.len() - 1 {
                let (s, e) = (table.times[n], table.times[n + 1]);
                while next_jump < chain.jump_times.len() && chain.jump_times[next_jump] <= s {
                    state = chain.jump_targets[next_jump];
                    next_jump += 1;
                }
                let mut a = s;
                let mut ca = table.right[state][n];
                while next_jump < chain.jump_times.len() && chain.jump_times[next_jump] < e {
                    let tau = chain.jump_times[next_jump];
                    let cb = NodeCoef::at(spec, strategy, tau, state, true);
                    step(a, tau, ca, cb, (tau - a).sqrt(), rates[state]);
                    state = chain.jump_targets[next_jump];
                    next_jump += 1;
                    ca = NodeCoef::at(spec, strategy, tau, state, false);
                    a = tau;
                }
                let sqrt_dt = if a == s { table.sqrt_dt[n] } else { (e - a).sqrt() };
                step(a, e, ca, table.left[state][n + 1], sqrt_dt, rates[state]);
            }
            total + integrand(0.0, ln_x, disc)
        })
        .collect();
    Ok(McReport::from_samples(&samples, rng.clone()))
}

/// Log-wealth coefficients and log consumption fraction at one time.
#[derive(Debug, Clone, Copy)]
struct NodeCoef {
    drift: f64,
    vol: f64,
    ln_b: f64,
}

impl NodeCoef {
    fn at(spec: &MarketSpec, strategy: &ProportionalStrategy, t: f64, i: usize, left: bool) -> Self {
        let (drift, vol, b) = log_coefficients(spec, strategy, t, i, left);
        Self { drift, vol, ln_b: b.ln() }
    }
}

/// Strategy coefficients on the nodes shared by every path: a uniform grid
/// over `[t, T]` plus all strategy and market breakpoints.
struct NodeTable {
    times: Vec<f64>,
    sqrt_dt: Vec<f64>,
    right: Vec<Vec<NodeCoef>>,
    left: Vec<Vec<NodeCoef>>,
}

impl NodeTable {
    fn new(spec: &MarketSpec, strategy: &ProportionalStrategy, t: f64, n_grid: usize) -> Self {
        let horizon = spec.horizon;
        let mut times: Vec<f64> = (0..=n_grid).map(|k| t + (horizon - t) * k as f64 / n_grid as f64).collect();
        times.extend(strategy.breakpoints().into_iter().chain(spec.breakpoints()).filter(|&b| b > t && b < horizon));
        times.sort_by(f64::total_cmp);
        times.dedup();
        let sqrt_dt = times.windows(2).map(|w| (w[1] - w[0]).sqrt()).collect();
        let side = |left: bool| -> Vec<Vec<NodeCoef>> {
            (0..spec.states)
                .map(|i| times.iter().map(|&s| NodeCoef::at(spec, strategy, s, i, left)).collect())
                .collect()
        };
        let right = side(false);
        let left = side(true);
        Self { times, sqrt_dt, right, left }
    }
}

/// Per-regime linear system for the value of a proportional strategy.
///
/// Power: `J = f(t,i) x^gamma / gamma` with
/// `f_t + [gamma (r + mu a - b) + gamma (gamma-1) sigma^2 a^2 / 2 - rho] f + sum_j lambda_ij f_j + b^gamma = 0`.
///
/// Log: `J = h ln x + l` with `h_t - rho h + sum_j lambda_ij h_j + 1 = 0` and
/// `l_t + (r + mu a - b - sigma^2 a^2 / 2) h + ln b - rho l + sum_j lambda_ij l_j = 0`.
pub struct FeynmanKacSystem<'a> {
    spec: &'a MarketSpec,
    strategy: &'a ProportionalStrategy,
    discount: Discount,
    extra_breakpoints: Vec<f64>,
    is_log: bool,
}

impl<'a> FeynmanKacSystem<'a> {
    pub fn new(spec: &'a MarketSpec, strategy: &'a ProportionalStrategy, discount: Discount) -> Self {
        Self { spec, strategy, discount, extra_breakpoints: Vec::new(), is_log: spec.preferences().is_log }
    }

    /// Forces extra grid nodes, e.g. the time at which the value is read.
    pub fn with_nodes(mut self, nodes: &[f64]) -> Self {
        self.extra_breakpoints.extend_from_slice(nodes);
        self
    }

    fn rho(&self, i: usize) -> f64 {
        match self.discount {
            Discount::Frozen(r) => r,
            Discount::Regime => self.spec.rho[i],
        }
    }

    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64], left: bool) {
        let n = self.spec.states;
        let gamma = self.spec.gamma;
        if self.is_log {
            let (h, l) = y.split_at(n);
            for i in 0..n {
                let (drift, _, b) = log_coefficients(self.spec, self.strategy, t, i, left);
                let rho = self.rho(i);
                dy[i] = -(-rho * h[i] + self.spec.generator.apply(i, h) + 1.0);
                dy[n + i] = -(drift * h[i] + b.ln() - rho * l[i] + self.spec.generator.apply(i, l));
            }
        } else {
            for i in 0..n {
                let c = if left { self.spec.coeffs_left(t, i) } else { self.spec.coeffs(t, i) };
                let (a, b) = if left { self.strategy.fractions_left(t, i) } else { self.strategy.fractions(t, i) };
                let growth = gamma * (c.r + c.mu() * a - b) + 0.5 * gamma * (gamma - 1.0) * c.sigma * c.sigma * a * a;
                dy[i] = -((growth - self.rho(i)) * y[i] + self.spec.generator.apply(i, y) + b.powf(gamma));
            }
        }
    }
}

impl OdeSystem for FeynmanKacSystem<'_> {
    fn dimension(&self) -> usize {
        if self.is_log {
            2 * self.spec.states
        } else {
            self.spec.states
        }
    }

    fn horizon(&self) -> f64 {
        self.spec.horizon
    }

    fn terminal_values(&self) -> Vec<f64> {
        let n = self.spec.states;
        (0..self.dimension()).map(|c| if c < n { 1.0 } else { 0.0 }).collect()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        self.eval(t, y, dy, false)
    }

    fn rhs_left(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        self.eval(t, y, dy, true)
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut v = self.strategy.breakpoints();
        v.extend(self.spec.breakpoints());
        v.extend(&self.extra_breakpoints);
        v
    }
}

/// Solved Feynman-Kac coefficients of a proportional strategy.
#[derive(Debug, Clone, PartialEq)]
pub enum FkValue {
    Power { gamma: f64, f: SolutionTable },
    Log { h: SolutionTable, l: SolutionTable },
}

impl FkValue {
    /// `J(t, x, i)` for the discount the table was solved with.
    pub fn value(&self, t: f64, x: f64, i: usize) -> f64 {
        match self {
            Self::Power { gamma, f } => f.value(t, i) * x.powf(*gamma) / gamma,
            Self::Log { h, l } => h.value(t, i) * x.ln() + l.value(t, i),
        }
    }

    /// The multiplicative coefficient table (`f`, or `h` for log).
    pub fn coefficient(&self) -> &SolutionTable {
        match self {
            Self::Power { f, .. } => f,
            Self::Log { h, .. } => h,
        }
    }
}

/// Feynman-Kac table of `strategy` with every regime discounted at `frozen_rho`.
pub fn feynman_kac_value(strategy: &ProportionalStrategy, frozen_rho: f64, spec: &MarketSpec) -> Result<FkValue> {
    feynman_kac_value_with(strategy, Discount::Frozen(frozen_rho), spec, &[], &SolveSettings::default())
}

pub fn feynman_kac_value_with(
    strategy: &ProportionalStrategy,
    discount: Discount,
    spec: &MarketSpec,
    nodes: &[f64],
    settings: &SolveSettings,
) -> Result<FkValue> {
    spec.validate()?;
    let prefs = spec.preferences();
    strategy.check(spec, 0.0, prefs.is_log || prefs.gamma < 0.0)?;
    let system = FeynmanKacSystem::new(spec, strategy, discount).with_nodes(nodes);
    let table = solve_terminal_ode_with(&system, settings)?;
    if prefs.is_log {
        let n = spec.states;
        let split = |lo: usize| {
            let rows = table.rows().iter().map(|r| r[lo..lo + n].to_vec()).collect();
            SolutionTable::new(table.grid().to_vec(), rows)
        };
        Ok(FkValue::Log { h: split(0)?, l: split(n)? })
    } else {
        Ok(FkValue::Power { gamma: spec.gamma, f: table })
    }
}

/// Deterministic `J(t, x, i)` of a proportional strategy under `convention`.
pub fn strategy_value(
    strategy: &ProportionalStrategy,
    spec: &MarketSpec,
    t: f64,
    x: f64,
    i: usize,
    convention: DiscountConvention,
) -> Result<f64> {
    spec.check_time(t)?;
    spec.check_state(i)?;
    if !(x > 0.0) {
        return Err(Error::Domain(format!("wealth must be positive, got {x}")));
    }
    let fk = feynman_kac_value_with(strategy, convention.discount(spec, i), spec, &[t], &SolveSettings::default())?;
    Ok(fk.value(t, x, i))
}

/// Difference quotients per window length and their extrapolation to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub epsilons: Vec<f64>,
    pub slopes: Vec<f64>,
    pub extrapolated: f64,
}

/// Relative window lengths, as fractions of `T - t`.
pub const DEFAULT_WINDOW_FRACTIONS: [f64; 3] = [0.1, 0.05, 0.025];

/// Intercept of the least-squares line through `(eps, slope)`.
pub fn richardson_intercept(eps: &[f64], slopes: &[f64]) -> f64 {
    if eps.len() == 1 {
        return slopes[0];
    }
    let n = eps.len() as f64;
    let mx = eps.iter().sum::<f64>() / n;
    let my = slopes.iter().sum::<f64>() / n;
    let sxx: f64 = eps.iter().map(|e| (e - mx) * (e - mx)).sum();
    let sxy: f64 = eps.iter().zip(slopes).map(|(e, s)| (e - mx) * (s - my)).sum();
    if sxx == 0.0 {
        return my;
    }
    my - sxy / sxx * mx
}

/// `[J(equilibrium) - J(perturbed on [t, t+eps])] / eps` for each `eps`,
/// extrapolated linearly to `eps -> 0`. Non-negative limits certify that
/// no perturbation in the tested direction improves on the equilibrium.
pub fn equilibrium_slope(
    sol: &EquilibriumSolution,
    t: f64,
    x: f64,
    i: usize,
    perturbation: &ProportionalStrategy,
    epsilons: &[f64],
) -> Result<SlopeEstimate> {
    equilibrium_slope_with(sol, t, x, i, perturbation, epsilons, DiscountConvention::FrozenAtStart)
}

pub fn equilibrium_slope_with(
    sol: &EquilibriumSolution,
    t: f64,
    x: f64,
    i: usize,
    perturbation: &ProportionalStrategy,
    epsilons: &[f64],
    convention: DiscountConvention,
) -> Result<SlopeEstimate> {
    let spec = &sol.spec;
    spec.check_time(t)?;
    spec.check_state(i)?;
    if epsilons.is_empty() {
        return Err(Error::InvalidArgument("no window lengths given".into()));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("window lengths must decrease".into()));
    }
    if let Some(&e) = epsilons.iter().find(|&&e| !(e > 0.0) || t + e > spec.horizon + 1e-15) {
        return Err(Error::InvalidArgument(format!("window {e} does not fit in (0, T - t]")));
    }
    let eq = ProportionalStrategy::equilibrium(sol);
    let discount = convention.discount(spec, i);
    let settings = SolveSettings::with_steps(DEFAULT_STEPS);
    let slopes = epsilons
        .par_iter()
        .map(|&eps| {
            let to = (t + eps).min(spec.horizon);
            // Same breakpoints on both sides so identical strategies agree bit for bit.
            let base = eq.splice(t, to, &eq);
            let pert = eq.splice(t, to, perturbation);
            let j_eq = feynman_kac_value_with(&base, discount, spec, &[t], &settings)?.value(t, x, i);
            let j_pert = feynman_kac_value_with(&pert, discount, spec, &[t], &settings)?.value(t, x, i);
            Ok((j_eq - j_pert) / eps)
        })
        .collect::<Result<Vec<f64>>>()?;
    let extrapolated = richardson_intercept(epsilons, &slopes);
    Ok(SlopeEstimate { epsilons: epsilons.to_vec(), slopes, extrapolated })
}

/// The six relative perturbations of the certification menu.
pub fn perturbation_menu(eq: &ProportionalStrategy) -> Vec<(&'static str, ProportionalStrategy)> {
    vec![
        ("consume x2", eq.scaled(1.0, 2.0)),
        ("consume x0.5", eq.scaled(1.0, 0.5)),
        ("invest x0", eq.scaled(0.0, 1.0)),
        ("invest x2", eq.scaled(2.0, 1.0)),
        ("both x2", eq.scaled(2.0, 2.0)),
        ("invest sign-flipped", eq.scaled(-1.0, 1.0)),
    ]
}

/// One certified `(t, i, perturbation)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeCertificate {
    pub t: f64,
    pub state: usize,
    pub perturbation: String,
    pub estimate: SlopeEstimate,
    pub passed: bool,
}

/// Runs the perturbation menu at each `(t, i)` with windows
/// `DEFAULT_WINDOW_FRACTIONS * (T - t)`; a cell passes when its extrapolated
/// slope is at least `-tolerance`.
pub fn certify(sol: &EquilibriumSolution, points: &[(f64, usize)], tolerance: f64) -> Result<Vec<SlopeCertificate>> {
    certify_with(sol, points, tolerance, DiscountConvention::FrozenAtStart)
}

pub fn certify_with(
    sol: &EquilibriumSolution,
    points: &[(f64, usize)],
    tolerance: f64,
    convention: DiscountConvention,
) -> Result<Vec<SlopeCertificate>> {
    let eq = ProportionalStrategy::equilibrium(sol);
    let menu = perturbation_menu(&eq);
    let mut out = Vec::new();
    for &(t, i) in points {
        let eps: Vec<f64> = DEFAULT_WINDOW_FRACTIONS.iter().map(|f| f * (sol.spec.horizon - t)).collect();
        for (name, pert) in &menu {
            let estimate = equilibrium_slope_with(sol, t, 1.0, i, pert, &eps, convention)?;
            let passed = estimate.extrapolated >= -tolerance;
            out.push(SlopeCertificate { t, state: i, perturbation: name.to_string(), estimate, passed });
        }
    }
    Ok(out)
}

/// Interior evaluation points used by the certification.
pub fn default_certification_points(horizon: f64) -> Vec<(f64, usize)> {
    vec![(0.0, 0), (0.0, 1), (0.25 * horizon, 0), (0.5 * horizon, 1), (0.75 * horizon, 0)]
}
