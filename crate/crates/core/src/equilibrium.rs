//! Subgame-perfect investment-consumption policies.
//!
//! Power utility (`gamma != 0`): the value function is `g(t,i) x^gamma / gamma`
//! where `g` solves, backward from `g(T,i) = 1`,
//!
//! ```text
//! g_t + [gamma r + mu^2 gamma / (2 sigma^2 (1-gamma)) - rho_i] g
//!     + sum_j lambda_ij g_j + (1-gamma) g^(gamma/(gamma-1)) = 0
//! ```
//!
//! and the policy invests `mu x / (sigma^2 (1-gamma))` and consumes
//! `g^(1/(gamma-1)) x`.
//!
//! Log utility: `v = h(t,i) ln x + l(t,i)` with
//!
//! ```text
//! h_t - rho_i h + sum_j lambda_ij h_j + 1 = 0,                       h(T) = 1
//! l_t + (r + mu^2/(2 sigma^2)) h - 1 - ln h - rho_i l
//!     + sum_j lambda_ij l_j = 0,                                     l(T) = 0
//! ```
//!
//! investing `mu x / sigma^2` and consuming `x / h`. The `l` equation is the
//! one obtained by substituting the log ansatz into the value-function PDE;
//! its source term is `-ln h`.

use rayon::prelude::*;

use crate::ctmc::sample_path_with;
use crate::error::{Error, Result};
use crate::io::fmt_sig;
use crate::model::{utility, Coeffs, MarketSpec, Preferences};
use crate::ode::{residual_norm, solve_terminal_ode_with, OdeSystem, SolutionTable, SolveSettings};
use crate::report::{RngSpec, SampleStats};

/// `g` (and `h`) must stay above this while integrating.
pub const POSITIVITY_FLOOR: f64 = 1e-12;

/// Default number of Picard evaluation times on `[0, T]`.
pub const PICARD_POINTS: usize = 17;

fn growth_exponent(c: &Coeffs, gamma: f64) -> f64 {
    let mu = c.mu();
    gamma * c.r + mu * mu * gamma / (2.0 * c.sigma * c.sigma * (1.0 - gamma))
}

/// The coupled `g` system for power utility.
pub struct GSystem<'a> {
    spec: &'a MarketSpec,
}

impl<'a> GSystem<'a> {
    pub fn new(spec: &'a MarketSpec) -> Self {
        Self { spec }
    }

    fn eval(&self, t: f64, g: &[f64], dg: &mut [f64], left: bool) {
        let gamma = self.spec.gamma;
        let power = gamma / (gamma - 1.0);
        for i in 0..self.spec.states {
            let c = if left { self.spec.coeffs_left(t, i) } else { self.spec.coeffs(t, i) };
            let linear = (growth_exponent(&c, gamma) - self.spec.rho[i]) * g[i];
            let coupling = self.spec.generator.apply(i, g);
            dg[i] = -(linear + coupling + (1.0 - gamma) * g[i].powf(power));
        }
    }
}

impl OdeSystem for GSystem<'_> {
    fn dimension(&self) -> usize {
        self.spec.states
    }

    fn horizon(&self) -> f64 {
        self.spec.horizon
    }

    fn terminal_values(&self) -> Vec<f64> {
        vec![1.0; self.spec.states]
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        self.eval(t, y, dy, false)
    }

    fn rhs_left(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        self.eval(t, y, dy, true)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.spec.breakpoints()
    }

    fn floor(&self, _component: usize) -> Option<f64> {
        Some(POSITIVITY_FLOOR)
    }
}

/// The joint `(h, l)` system for log utility; components `0..S` hold `h`,
/// `S..2S` hold `l`.
pub struct LogSystem<'a> {
    spec: &'a MarketSpec,
}

impl<'a> LogSystem<'a> {
    pub fn new(spec: &'a MarketSpec) -> Self {
        Self { spec }
    }

    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64], left: bool) {
        let n = self.spec.states;
        let (h, l) = y.split_at(n);
        for i in 0..n {
            let c = if left { self.spec.coeffs_left(t, i) } else { self.spec.coeffs(t, i) };
            let rho = self.spec.rho[i];
            dy[i] = -(-rho * h[i] + self.spec.generator.apply(i, h) + 1.0);
            let mu = c.mu();
            let drift = c.r + mu * mu / (2.0 * c.sigma * c.sigma);
            dy[n + i] = -(drift * h[i] - 1.0 - h[i].ln() - rho * l[i] + self.spec.generator.apply(i, l));
        }
    }
}

impl OdeSystem for LogSystem<'_> {
    fn dimension(&self) -> usize {
        2 * self.spec.states
    }

    fn horizon(&self) -> f64 {
        self.spec.horizon
    }

    fn terminal_values(&self) -> Vec<f64> {
        let n = self.spec.states;
        (0..2 * n).map(|c| if c < n { 1.0 } else { 0.0 }).collect()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        self.eval(t, y, dy, false)
    }

    fn rhs_left(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        self.eval(t, y, dy, true)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.spec.breakpoints()
    }

    fn floor(&self, component: usize) -> Option<f64> {
        (component < self.spec.states).then_some(POSITIVITY_FLOOR)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Branch {
    Power { g: SolutionTable },
    Log { h: SolutionTable, l: SolutionTable },
}

/// A solved equilibrium: the spec, its coefficient tables, and solver metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSolution {
    pub spec: MarketSpec,
    pub branch: Branch,
    pub settings: SolveSettings,
    /// Maximum scaled residual of the defining ODEs on the solution grid.
    pub residual: f64,
}

/// Solves the power-utility `g` system with default settings.
pub fn solve_g(spec: &MarketSpec) -> Result<EquilibriumSolution> {
    solve_g_with(spec, &SolveSettings::default())
}

pub fn solve_g_with(spec: &MarketSpec, settings: &SolveSettings) -> Result<EquilibriumSolution> {
    spec.validate()?;
    if spec.preferences().is_log {
        return Err(Error::InvalidArgument("solve_g needs gamma != 0; use solve_log".into()));
    }
    let system = GSystem::new(spec);
    let g = solve_terminal_ode_with(&system, settings)?;
    let residual = residual_norm(&system, &g)?;
    Ok(EquilibriumSolution { spec: spec.clone(), branch: Branch::Power { g }, settings: *settings, residual })
}

/// Solves the log-utility `(h, l)` system with default settings.
pub fn solve_log(spec: &MarketSpec) -> Result<EquilibriumSolution> {
    solve_log_with(spec, &SolveSettings::default())
}

pub fn solve_log_with(spec: &MarketSpec, settings: &SolveSettings) -> Result<EquilibriumSolution> {
    spec.validate()?;
    if !spec.preferences().is_log {
        return Err(Error::InvalidArgument("solve_log needs gamma = 0; use solve_g".into()));
    }
    let system = LogSystem::new(spec);
    let joint = solve_terminal_ode_with(&system, settings)?;
    let residual = residual_norm(&system, &joint)?;
    let n = spec.states;
    let split = |range: std::ops::Range<usize>| {
        let rows = joint.rows().iter().map(|row| row[range.clone()].to_vec()).collect();
        SolutionTable::new(joint.grid().to_vec(), rows)
    };
    let h = split(0..n)?;
    let l = split(n..2 * n)?;
    Ok(EquilibriumSolution { spec: spec.clone(), branch: Branch::Log { h, l }, settings: *settings, residual })
}

/// Dispatches on the spec's preference branch.
pub fn solve(spec: &MarketSpec) -> Result<EquilibriumSolution> {
    solve_with(spec, &SolveSettings::default())
}

pub fn solve_with(spec: &MarketSpec, settings: &SolveSettings) -> Result<EquilibriumSolution> {
    if spec.preferences().is_log {
        solve_log_with(spec, settings)
    } else {
        solve_g_with(spec, settings)
    }
}

impl EquilibriumSolution {
    pub fn preferences(&self) -> Preferences {
        self.spec.preferences()
    }

    pub fn grid(&self) -> &[f64] {
        match &self.branch {
            Branch::Power { g } => g.grid(),
            Branch::Log { h, .. } => h.grid(),
        }
    }

    pub fn g_table(&self) -> Option<&SolutionTable> {
        match &self.branch {
            Branch::Power { g } => Some(g),
            Branch::Log { .. } => None,
        }
    }

    /// Consumption as a fraction of wealth, `C(t,i)`, per year.
    pub fn consumption_rate(&self, t: f64, i: usize) -> f64 {
        match &self.branch {
            Branch::Power { g } => g.value(t, i).powf(1.0 / (self.spec.gamma - 1.0)),
            Branch::Log { h, .. } => 1.0 / h.value(t, i),
        }
    }

    /// Left limit of [`EquilibriumSolution::investment_fraction`] at `t`.
    pub fn investment_fraction_left(&self, t: f64, i: usize) -> f64 {
        self.fraction_from(self.spec.coeffs_left(t, i))
    }

    /// Amount invested per unit of wealth.
    pub fn investment_fraction(&self, t: f64, i: usize) -> f64 {
        self.fraction_from(self.spec.coeffs(t, i))
    }

    fn fraction_from(&self, c: Coeffs) -> f64 {
        let risk = if self.preferences().is_log { 1.0 } else { 1.0 - self.spec.gamma };
        c.mu() / (c.sigma * c.sigma * risk)
    }

    pub fn consumption_curve(&self) -> ConsumptionCurve {
        let grid = self.grid().to_vec();
        let rows = grid.iter().map(|&t| (0..self.spec.states).map(|i| self.consumption_rate(t, i)).collect()).collect();
        ConsumptionCurve { table: SolutionTable::new(grid, rows).expect("solver grid is valid") }
    }

    pub fn policy(&self) -> PolicyField {
        PolicyField { solution: self.clone() }
    }

    /// The ansatz value `g x^gamma / gamma` or `h ln x + l`.
    pub fn value_at(&self, t: f64, x: f64, i: usize) -> Result<f64> {
        self.spec.check_time(t)?;
        self.spec.check_state(i)?;
        if !(x > 0.0) {
            return Err(Error::Domain(format!("value needs positive wealth, got {x}")));
        }
        Ok(match &self.branch {
            Branch::Power { g } => g.value(t, i) * x.powf(self.spec.gamma) / self.spec.gamma,
            Branch::Log { h, l } => h.value(t, i) * x.ln() + l.value(t, i),
        })
    }

    /// Metadata for CSV headers: spec hash, grid size, solver settings.
    pub fn metadata(&self) -> String {
        format!(
            "spec_hash={},gamma={},grid={},tolerance={},solver=rk4-step-halving,version={}",
            crate::io::spec_hash(&self.spec),
            self.spec.gamma,
            self.grid().len() - 1,
            self.settings.tolerance,
            env!("CARGO_PKG_VERSION"),
        )
    }
}

/// Feedback maps `(t, x, i) -> (investment, consumption)`, linear in wealth.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyField {
    pub solution: EquilibriumSolution,
}

impl PolicyField {
    pub fn spec(&self) -> &MarketSpec {
        &self.solution.spec
    }

    pub fn policy_at(&self, t: f64, x: f64, i: usize) -> Result<(f64, f64)> {
        self.solution.spec.check_time(t)?;
        self.solution.spec.check_state(i)?;
        if x.is_nan() || x < 0.0 {
            return Err(Error::Domain(format!("wealth must be non-negative, got {x}")));
        }
        Ok((self.solution.investment_fraction(t, i) * x, self.solution.consumption_rate(t, i) * x))
    }
}

pub fn policy_at(field: &PolicyField, t: f64, x: f64, i: usize) -> Result<(f64, f64)> {
    field.policy_at(t, x, i)
}

/// Per-regime consumption rate `C(t,i)` on the solver grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsumptionCurve {
    pub table: SolutionTable,
}

impl ConsumptionCurve {
    pub fn grid(&self) -> &[f64] {
        self.table.grid()
    }

    pub fn rate(&self, k: usize, i: usize) -> f64 {
        self.table.rows()[k][i]
    }

    pub fn states(&self) -> usize {
        self.table.dimension()
    }

    /// `max_i |C(T,i) - 1|`.
    pub fn terminal_gap(&self) -> f64 {
        self.table.rows().last().unwrap().iter().map(|c| (c - 1.0).abs()).fold(0.0, f64::max)
    }

    /// True when `C(t,hi) > C(t,lo)` at every grid time before `T`.
    pub fn strictly_above(&self, hi: usize, lo: usize) -> bool {
        let rows = self.table.rows();
        rows[..rows.len() - 1].iter().all(|row| row[hi] > row[lo])
    }

    /// `max_t (C(t,a) - C(t,b))`.
    pub fn max_gap(&self, a: usize, b: usize) -> f64 {
        self.table.rows().iter().map(|row| row[a] - row[b]).fold(f64::NEG_INFINITY, f64::max)
    }

    /// CSV: `# metadata`, `t,C0,...`, rows at 12 significant digits.
    pub fn to_csv(&self, metadata: &str) -> String {
        let names: Vec<String> = (0..self.states()).map(|i| format!("C{i}")).collect();
        self.table.to_csv(&names, Some(metadata))
    }
}

/// `eta = (rho - gamma [mu^2/(2 sigma^2 (1-gamma)) + r]) / (1 - gamma)` for a
/// state-independent spec.
pub fn merton_eta(spec: &MarketSpec) -> Result<f64> {
    spec.validate()?;
    if !spec.is_state_independent() {
        return Err(Error::InvalidArgument("closed form needs state-independent coefficients and discount".into()));
    }
    let c = spec.coeffs(0.0, 0);
    let gamma = spec.gamma;
    let mu = c.mu();
    Ok((spec.rho[0] - gamma * (mu * mu / (2.0 * c.sigma * c.sigma * (1.0 - gamma)) + c.r)) / (1.0 - gamma))
}

/// `eta / (1 + (eta - 1) e^{eta (t - T)})`, continuously extended to
/// `1 / (1 + T - t)` at `eta = 0`.
pub fn merton_rate(eta: f64, t: f64, horizon: f64) -> f64 {
    if eta.abs() < 1e-12 {
        return 1.0 / (1.0 + horizon - t);
    }
    eta / (1.0 + (eta - 1.0) * (eta * (t - horizon)).exp())
}

/// Optimal consumption rate under a common discount rate.
pub fn merton_closed_form(spec: &MarketSpec, t: f64) -> Result<f64> {
    let eta = merton_eta(spec)?;
    spec.check_time(t)?;
    Ok(merton_rate(eta, t, spec.horizon))
}

/// `dC/drho` of the closed form.
pub fn merton_rate_sensitivity(spec: &MarketSpec, t: f64) -> Result<f64> {
    let eta = merton_eta(spec)?;
    spec.check_time(t)?;
    let c = merton_rate(eta, t, spec.horizon);
    let tau = t - spec.horizon;
    let e = (eta * tau).exp();
    let d_inv_c = (-1.0 + e * (1.0 + eta * (eta - 1.0) * tau)) / (eta * eta);
    Ok(-c * c * d_inv_c / (1.0 - spec.gamma))
}

/// Picard operator output on the evaluation grid, with per-point standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardEstimate {
    pub table: SolutionTable,
    pub std_errors: SolutionTable,
    pub n_paths: usize,
    pub rng: RngSpec,
}

impl PicardEstimate {
    /// Largest `|estimate - reference|` and whether each point is within
    /// `max(k * stderr, floor)`.
    pub fn compare(&self, reference: &SolutionTable, k: f64, floor: f64) -> (f64, bool) {
        let mut worst: f64 = 0.0;
        let mut ok = true;
        for (idx, &t) in self.table.grid().iter().enumerate() {
            for i in 0..self.table.dimension() {
                let d = (self.table.rows()[idx][i] - reference.value(t, i)).abs();
                worst = worst.max(d);
                ok &= d <= (k * self.std_errors.rows()[idx][i]).max(floor);
            }
        }
        (worst, ok)
    }
}

/// Per-state cumulative quantities on the candidate grid used to integrate
/// `K(v) g^{gamma/(gamma-1)}(v, j)` exactly between chain jumps.
struct StateQuadrature {
    grid: Vec<f64>,
    /// `A(t_k) = int_0^{t_k} kappa`, with `kappa` constant on each cell.
    cum_exp: Vec<f64>,
    kappa: Vec<f64>,
    /// Integrand `e^{A} G` at the nodes.
    phi: Vec<f64>,
    /// Trapezoidal prefix sums of `phi`.
    prefix: Vec<f64>,
    state: usize,
    power: f64,
}

impl StateQuadrature {
    fn new(spec: &MarketSpec, cand: &SolutionTable, state: usize) -> Self {
        let gamma = spec.gamma;
        let grid = cand.grid().to_vec();
        let power = gamma / (gamma - 1.0);
        let n = grid.len();
        let mut kappa = Vec::with_capacity(n - 1);
        let mut cum_exp = vec![0.0; n];
        for k in 0..n - 1 {
            let mid = 0.5 * (grid[k] + grid[k + 1]);
            let kap = growth_exponent(&spec.coeffs(mid, state), gamma) - spec.rho[state];
            kappa.push(kap);
            cum_exp[k + 1] = cum_exp[k] + kap * (grid[k + 1] - grid[k]);
        }
        let phi: Vec<f64> = (0..n).map(|k| cum_exp[k].exp() * cand.rows()[k][state].powf(power)).collect();
        let mut prefix = vec![0.0; n];
        for k in 0..n - 1 {
            prefix[k + 1] = prefix[k] + 0.5 * (grid[k + 1] - grid[k]) * (phi[k] + phi[k + 1]);
        }
        Self { grid, cum_exp, kappa, phi, prefix, state, power }
    }

    fn cell(&self, t: f64) -> usize {
        self.grid.partition_point(|&s| s <= t).saturating_sub(1).min(self.grid.len() - 2)
    }

    fn exponent(&self, t: f64) -> f64 {
        let k = self.cell(t);
        self.cum_exp[k] + self.kappa[k] * (t - self.grid[k])
    }

    fn integrand(&self, t: f64, cand: &SolutionTable) -> f64 {
        self.exponent(t).exp() * cand.value(t, self.state).powf(self.power)
    }

    /// `(int_a^b e^{A(v)-A(a)} G(v) dv, e^{A(b)-A(a)})` by the trapezoidal
    /// rule on the grid with `a` and `b` inserted.
    fn segment(&self, a: f64, b: f64, cand: &SolutionTable) -> (f64, f64) {
        let (ka, kb) = (self.cell(a), self.cell(b));
        let (fa, fb) = (self.integrand(a, cand), self.integrand(b, cand));
        let integral = if ka == kb {
            0.5 * (b - a) * (fa + fb)
        } else {
            let head = 0.5 * (self.grid[ka + 1] - a) * (fa + self.phi[ka + 1]);
            let body = self.prefix[kb] - self.prefix[ka + 1];
            let tail = 0.5 * (b - self.grid[kb]) * (self.phi[kb] + fb);
            head + body + tail
        };
        let ea = self.exponent(a);
        (integral * (-ea).exp(), (self.exponent(b) - ea).exp())
    }
}

/// Monte-Carlo estimate of the Picard map
/// `g(t,i) -> E[K(T)] + (1-gamma) E[int_t^T K(v) g^{gamma/(gamma-1)}(v, J_v) dv]`
/// at `points` evenly spaced times, each `(t, i)` on its own stream.
pub fn picard_apply(
    spec: &MarketSpec,
    candidate: &SolutionTable,
    n_paths: usize,
    rng: &RngSpec,
) -> Result<PicardEstimate> {
    picard_apply_on(spec, candidate, PICARD_POINTS, n_paths, rng)
}

pub fn picard_apply_on(
    spec: &MarketSpec,
    candidate: &SolutionTable,
    points: usize,
    n_paths: usize,
    rng: &RngSpec,
) -> Result<PicardEstimate> {
    spec.validate()?;
    if spec.preferences().is_log {
        return Err(Error::InvalidArgument("picard_apply is defined for power utility".into()));
    }
    if candidate.dimension() != spec.states {
        return Err(Error::InvalidArgument("candidate has the wrong number of states".into()));
    }
    if candidate.start() > 0.0 || candidate.end() < spec.horizon {
        return Err(Error::InvalidArgument("candidate must cover [0, T]".into()));
    }
    if let Some(bad) = candidate.rows().iter().flatten().find(|&&v| !(v > 0.0)) {
        return Err(Error::Domain(format!("candidate must be positive, found {bad}")));
    }
    if points < 2 || n_paths == 0 {
        return Err(Error::InvalidArgument("need at least 2 points and 1 path".into()));
    }
    let horizon = spec.horizon;
    let gamma = spec.gamma;
    let quads: Vec<StateQuadrature> = (0..spec.states).map(|j| StateQuadrature::new(spec, candidate, j)).collect();
    let times: Vec<f64> = (0..points).map(|k| horizon * k as f64 / (points - 1) as f64).collect();
    let jobs: Vec<(usize, usize)> = (0..points).flat_map(|k| (0..spec.states).map(move |i| (k, i))).collect();
    let stats: Vec<SampleStats> = jobs
        .par_iter()
        .map(|&(k, i)| {
            let t = times[k];
            let mut stream = rng.child((k * spec.states + i) as u64).rng();
            let mut acc = SampleStats::default();
            for _ in 0..n_paths {
                let path = sample_path_with(&spec.generator, i, t, horizon, &mut stream);
                let mut weight = 1.0;
                let mut running = 0.0;
                for (a, b, j) in path.segments() {
                    if b <= a {
                        continue;
                    }
                    let (integral, growth) = quads[j].segment(a, b, candidate);
                    running += weight * integral;
                    weight *= growth;
                }
                acc.push(weight + (1.0 - gamma) * running);
            }
            acc
        })
        .collect();
    let mut est = vec![vec![0.0; spec.states]; points];
    let mut err = vec![vec![0.0; spec.states]; points];
    for (&(k, i), s) in jobs.iter().zip(&stats) {
        est[k][i] = s.mean;
        err[k][i] = s.std_error();
    }
    Ok(PicardEstimate {
        table: SolutionTable::new(times.clone(), est)?,
        std_errors: SolutionTable::new(times, err)?,
        n_paths,
        rng: rng.clone(),
    })
}

/// `g = C^{gamma-1}` from the closed-form rate, tabulated on `grid`.
pub fn closed_form_g(spec: &MarketSpec, grid: &[f64]) -> Result<SolutionTable> {
    let eta = merton_eta(spec)?;
    let rows = grid
        .iter()
        .map(|&t| vec![merton_rate(eta, t, spec.horizon).powf(spec.gamma - 1.0); spec.states])
        .collect();
    SolutionTable::new(grid.to_vec(), rows)
}

/// The pointwise objective `(mu pi - c) v_x + sigma^2 pi^2 v_xx / 2 + U(c)`
/// whose maximiser is the equilibrium policy.
pub fn hamiltonian(sol: &EquilibriumSolution, t: f64, x: f64, i: usize, invest: f64, consume: f64) -> Result<f64> {
    let c = sol.spec.coeffs(t, i);
    let (vx, vxx) = match &sol.branch {
        Branch::Power { g } => {
            let gv = g.value(t, i);
            let gamma = sol.spec.gamma;
            (gv * x.powf(gamma - 1.0), (gamma - 1.0) * gv * x.powf(gamma - 2.0))
        }
        Branch::Log { h, .. } => {
            let hv = h.value(t, i);
            (hv / x, -hv / (x * x))
        }
    };
    Ok((c.mu() * invest - consume) * vx + 0.5 * c.sigma * c.sigma * invest * invest * vxx + utility(consume, &sol.preferences())?)
}

/// CSV for a consumption curve with the solution's metadata line.
pub fn curve_csv(sol: &EquilibriumSolution) -> String {
    sol.consumption_curve().to_csv(&sol.metadata())
}

/// CSV of the raw coefficient tables (`g`, or `h` and `l`).
pub fn table_csv(sol: &EquilibriumSolution) -> String {
    let n = sol.spec.states;
    match &sol.branch {
        Branch::Power { g } => {
            let names: Vec<String> = (0..n).map(|i| format!("g{i}")).collect();
            g.to_csv(&names, Some(&sol.metadata()))
        }
        Branch::Log { h, l } => {
            let names: Vec<String> = (0..n).map(|i| format!("h{i}")).chain((0..n).map(|i| format!("l{i}"))).collect();
            let rows = h.rows().iter().zip(l.rows()).map(|(a, b)| a.iter().chain(b).copied().collect()).collect();
            SolutionTable::new(h.grid().to_vec(), rows).expect("same grid").to_csv(&names, Some(&sol.metadata()))
        }
    }
}

/// Short human-readable line for logs.
pub fn describe(sol: &EquilibriumSolution) -> String {
    let c0: Vec<String> = (0..sol.spec.states).map(|i| fmt_sig(sol.consumption_rate(0.0, i))).collect();
    format!("gamma={} C(0,.)=[{}] residual={:.3e}", sol.spec.gamma, c0.join(", "), sol.residual)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn merton_spec() -> MarketSpec {
        MarketSpec::constant_discount(-1.0, 0.15, 0.25, 0.05, 0.9, 1.0)
    }

    #[test]
    fn eta_and_initial_rate() {
        let spec = merton_spec();
        let eta = merton_eta(&spec).unwrap();
        // (0.9 + (0.0225 / 0.25 + 0.05)) / 2
        assert!((eta - 0.52).abs() < 1e-12, "eta {eta}");
        let c0 = merton_closed_form(&spec, 0.0).unwrap();
        let expected = 0.52 / (1.0 - 0.48 * (-0.52f64).exp());
        assert!((c0 - expected).abs() < 1e-14);
        assert!((c0 - 0.727649).abs() < 5e-6, "C(0) {c0}");
        assert!((merton_closed_form(&spec, 1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_eta_uses_limit() {
        assert_eq!(merton_rate(0.0, 0.25, 1.0), 1.0 / 1.75);
        let near = merton_rate(1e-7, 0.25, 1.0);
        assert!((near - 1.0 / 1.75).abs() < 1e-6);
    }

    #[test]
    fn closed_form_rejects_regime_dependent_specs() {
        assert!(merton_closed_form(&MarketSpec::reference(-1.0), 0.0).is_err());
    }

    #[test]
    fn sensitivity_matches_finite_difference() {
        for t in [0.0, 0.5, 0.9] {
            let spec = merton_spec();
            let h = 1e-5;
            let mut up = spec.clone();
            up.rho = vec![0.9 + h; 2];
            let mut dn = spec.clone();
            dn.rho = vec![0.9 - h; 2];
            let fd = (merton_closed_form(&up, t).unwrap() - merton_closed_form(&dn, t).unwrap()) / (2.0 * h);
            let an = merton_rate_sensitivity(&spec, t).unwrap();
            assert!((fd - an).abs() < 1e-8, "t={t} fd={fd} an={an}");
        }
    }

    #[test]
    fn g_terminal_and_collapse() {
        let spec = merton_spec();
        let sol = solve_g(&spec).unwrap();
        let g = sol.g_table().unwrap();
        assert_eq!(g.rows().last().unwrap(), &vec![1.0, 1.0]);
        for (k, &t) in g.grid().iter().enumerate() {
            assert_eq!(g.rows()[k][0], g.rows()[k][1]);
            let c = sol.consumption_rate(t, 0);
            assert!((c - merton_closed_form(&spec, t).unwrap()).abs() < 1e-6);
        }
        assert!(sol.residual <= 1e-5);
    }

    #[test]
    fn branch_mismatch_is_rejected() {
        assert!(solve_g(&MarketSpec::reference(0.0)).is_err());
        assert!(solve_log(&MarketSpec::reference(0.5)).is_err());
    }

    #[test]
    fn log_constant_discount_closed_form() {
        let mut spec = MarketSpec::reference(0.0);
        spec.rho = vec![0.3, 0.3];
        let sol = solve_log(&spec).unwrap();
        match &sol.branch {
            Branch::Log { h, l } => {
                assert!((h.value(0.0, 0) - 1.604_757).abs() < 1e-6);
                assert!((h.value(0.0, 1) - 1.604_757).abs() < 1e-6);
                assert_eq!(h.rows().last().unwrap(), &vec![1.0, 1.0]);
                assert_eq!(l.rows().last().unwrap(), &vec![0.0, 0.0]);
            }
            _ => unreachable!(),
        }
        let (_, c) = sol.policy().policy_at(0.0, 1.0, 0).unwrap();
        assert!((c - 0.623_147).abs() < 1e-6, "{c}");
        assert!(sol.residual <= 1e-5);
    }

    #[test]
    fn log_discount_ordering() {
        let sol = solve_log(&MarketSpec::reference(0.0)).unwrap();
        let Branch::Log { h, .. } = &sol.branch else { unreachable!() };
        let rows = h.rows();
        assert!(rows[..rows.len() - 1].iter().all(|r| r[0] < r[1]));
    }

    #[test]
    fn policy_values() {
        let mut spec = merton_spec();
        spec.gamma = 0.5;
        let sol = solve_g(&spec).unwrap();
        let field = sol.policy();
        let (pi, _) = field.policy_at(0.3, 100.0, 0).unwrap();
        assert!((pi - 480.0).abs() < 1e-9);
        assert_eq!(policy_at(&field, 0.3, 0.0, 1).unwrap(), (0.0, 0.0));
        assert!(field.policy_at(1.5, 1.0, 0).is_err());
        assert!(field.policy_at(0.5, -1.0, 0).is_err());
    }

    #[test]
    fn value_function_boundary_and_homothety() {
        let sol = solve_g(&MarketSpec::reference(-0.5)).unwrap();
        let prefs = sol.preferences();
        for x in [0.5, 1.0, 3.0] {
            assert!((sol.value_at(1.0, x, 1).unwrap() - utility(x, &prefs).unwrap()).abs() < 1e-15);
            let ratio = sol.value_at(0.3, 2.0 * x, 0).unwrap() / sol.value_at(0.3, x, 0).unwrap();
            assert!((ratio - 2f64.powf(-0.5)).abs() < 1e-12);
        }
        assert!(sol.value_at(0.3, 0.0, 0).is_err());
        let log = solve_log(&MarketSpec::reference(0.0)).unwrap();
        assert!((log.value_at(1.0, 2.5, 0).unwrap() - 2.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn policy_maximises_hamiltonian() {
        for gamma in [0.7, 0.0, -1.0] {
            let sol = solve(&MarketSpec::reference(gamma)).unwrap();
            for &t in &[0.0, 0.4, 0.9] {
                for &x in &[0.5, 2.0] {
                    for i in 0..2 {
                        let (pi, c) = sol.policy().policy_at(t, x, i).unwrap();
                        let best = hamiltonian(&sol, t, x, i, pi, c).unwrap();
                        for dp in -5..=5 {
                            for dc in -5..=5 {
                                if dp == 0 && dc == 0 {
                                    continue;
                                }
                                let p2 = pi * (1.0 + 0.05 * dp as f64);
                                let c2 = c * (1.0 + 0.05 * dc as f64);
                                assert!(hamiltonian(&sol, t, x, i, p2, c2).unwrap() < best);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn positivity_guard_trips() {
        // Terminal value already below the floor.
        struct Broken<'a>(GSystem<'a>);
        impl OdeSystem for Broken<'_> {
            fn dimension(&self) -> usize { self.0.dimension() }
            fn horizon(&self) -> f64 { self.0.horizon() }
            fn terminal_values(&self) -> Vec<f64> { vec![1e-13, 1.0] }
            fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) { self.0.rhs(t, y, dy) }
            fn floor(&self, c: usize) -> Option<f64> { self.0.floor(c) }
        }
        let spec = MarketSpec::reference(0.5);
        let err = solve_terminal_ode_with(&Broken(GSystem::new(&spec)), &SolveSettings::default()).unwrap_err();
        assert!(matches!(err, Error::Positivity { component: 0, .. }));
    }
}
