//! Backward (terminal-value) integration of small coupled ODE systems.
//!
//! Classical fourth-order Runge-Kutta from `T` down to the start time on a
//! fixed grid. Each step is also taken as two half steps; if any scaled
//! difference exceeds the tolerance, the whole sweep is repeated with twice
//! as many steps. The half-step values are the ones stored.
//!
//! Systems may declare breakpoints where the right-hand side jumps. The grid
//! always contains them, and a step ending at a breakpoint from below uses
//! [`OdeSystem::rhs_left`] for its upper stage.

use crate::error::{Error, Result};
use crate::io::fmt_sig;

pub trait OdeSystem {
    fn dimension(&self) -> usize;

    fn horizon(&self) -> f64;

    fn start(&self) -> f64 {
        0.0
    }

    fn terminal_values(&self) -> Vec<f64>;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);

    /// Left limit of the right-hand side at `t`.
    fn rhs_left(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        self.rhs(t, y, dy)
    }

    /// Interior times where the right-hand side may jump.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Lower bound a component must respect; breaching it aborts the solve.
    fn floor(&self, _component: usize) -> Option<f64> {
        None
    }
}

/// An [`OdeSystem`] from a closure, for continuous right-hand sides.
pub struct FnSystem<F> {
    pub horizon: f64,
    pub terminal: Vec<f64>,
    pub rhs: F,
}

impl<F> OdeSystem for FnSystem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    fn dimension(&self) -> usize {
        self.terminal.len()
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn terminal_values(&self) -> Vec<f64> {
        self.terminal.clone()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        (self.rhs)(t, y, dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveSettings {
    pub n_steps: usize,
    pub tolerance: f64,
    pub max_steps: usize,
}

pub const DEFAULT_STEPS: usize = 2048;

impl Default for SolveSettings {
    fn default() -> Self {
        Self { n_steps: DEFAULT_STEPS, tolerance: 1e-9, max_steps: 1 << 20 }
    }
}

impl SolveSettings {
    pub fn with_steps(n_steps: usize) -> Self {
        Self { n_steps, ..Self::default() }
    }
}

/// Dense values of a vector function on a strictly increasing grid,
/// linearly interpolated in between.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionTable {
    grid: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl SolutionTable {
    pub fn new(grid: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() {
            return Err(Error::InvalidArgument("table needs at least 2 points and one row per point".into()));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("table grid must increase strictly".into()));
        }
        let dim = values[0].len();
        if values.iter().any(|row| row.len() != dim) {
            return Err(Error::InvalidArgument("ragged table rows".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values[0].len()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.grid[0]
    }

    pub fn end(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[c]).collect()
    }

    /// Bracketing cell `k` with `grid[k] <= t <= grid[k+1]`, clamped to the ends.
    fn cell(&self, t: f64) -> usize {
        let k = self.grid.partition_point(|&s| s <= t);
        k.saturating_sub(1).min(self.grid.len() - 2)
    }

    /// Component `c` at `t`; exact at grid points, constant beyond the ends.
    pub fn value(&self, t: f64, c: usize) -> f64 {
        let k = self.cell(t);
        let (t0, t1) = (self.grid[k], self.grid[k + 1]);
        let (y0, y1) = (self.values[k][c], self.values[k + 1][c]);
        if t <= t0 {
            return y0;
        }
        if t >= t1 {
            return y1;
        }
        let w = (t - t0) / (t1 - t0);
        y0 + w * (y1 - y0)
    }

    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        (0..self.dimension()).map(|c| self.value(t, c)).collect()
    }

    pub fn map(&self, f: impl Fn(f64, usize, f64) -> f64) -> Self {
        let values = self
            .grid
            .iter()
            .zip(&self.values)
            .map(|(&t, row)| row.iter().enumerate().map(|(c, &y)| f(t, c, y)).collect())
            .collect();
        Self { grid: self.grid.clone(), values }
    }

    /// Maximum absolute componentwise difference, evaluated on `self`'s grid.
    pub fn sup_distance(&self, other: &SolutionTable) -> f64 {
        self.grid
            .iter()
            .zip(&self.values)
            .flat_map(|(&t, row)| row.iter().enumerate().map(move |(c, &y)| (y - other.value(t, c)).abs()))
            .fold(0.0, f64::max)
    }

    /// CSV with an optional `# ...` metadata line, then `t,<names>` and rows
    /// at 12 significant digits.
    pub fn to_csv(&self, names: &[String], metadata: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(m) = metadata {
            out.push_str("# ");
            out.push_str(m);
            out.push('\n');
        }
        out.push('t');
        for n in names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (t, row) in self.grid.iter().zip(&self.values) {
            out.push_str(&fmt_sig(*t));
            for y in row {
                out.push(',');
                out.push_str(&fmt_sig(*y));
            }
            out.push('\n');
        }
        out
    }
}

fn build_grid(start: f64, end: f64, breakpoints: &[f64], n_steps: usize) -> Vec<f64> {
    let mut nodes = vec![start];
    let mut bps: Vec<f64> = breakpoints.iter().copied().filter(|&b| b > start && b < end).collect();
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    nodes.extend(bps);
    nodes.push(end);
    let span = end - start;
    let mut grid = vec![start];
    for w in nodes.windows(2) {
        let (a, b) = (w[0], w[1]);
        let m = ((n_steps as f64) * (b - a) / span).ceil().max(1.0) as usize;
        for k in 1..m {
            grid.push(a + (b - a) * k as f64 / m as f64);
        }
        grid.push(b);
    }
    grid
}

struct Stepper<'a, S: ?Sized> {
    system: &'a S,
    dim: usize,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl<'a, S: OdeSystem + ?Sized> Stepper<'a, S> {
    fn new(system: &'a S) -> Self {
        let dim = system.dimension();
        Self { system, dim, k: std::array::from_fn(|_| vec![0.0; dim]), tmp: vec![0.0; dim] }
    }

    fn guard(&self, t: f64, y: &[f64]) -> Result<()> {
        for (c, &v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { t, component: c });
            }
            if let Some(f) = self.system.floor(c) {
                if v < f {
                    return Err(Error::Positivity { t, component: c, value: v });
                }
            }
        }
        Ok(())
    }

    fn eval(&mut self, stage: usize, t: f64, left: bool) -> Result<()> {
        let (y, dy) = (&self.tmp, &mut self.k[stage]);
        if left {
            self.system.rhs_left(t, y, dy);
        } else {
            self.system.rhs(t, y, dy);
        }
        match dy.iter().position(|d| !d.is_finite()) {
            Some(c) => Err(Error::NonFinite { t, component: c }),
            None => Ok(()),
        }
    }

    /// One RK4 step from `t_hi` (value `y`) down to `t_lo`.
    fn step(&mut self, t_hi: f64, t_lo: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        let h = t_lo - t_hi;
        let mid = t_hi + 0.5 * h;
        self.guard(t_hi, y)?;
        self.tmp.copy_from_slice(y);
        self.eval(0, t_hi, true)?;
        for ((t, &yc), &kc) in self.tmp.iter_mut().zip(y).zip(&self.k[0]) {
            *t = yc + 0.5 * h * kc;
        }
        self.guard(mid, &self.tmp)?;
        self.eval(1, mid, false)?;
        for ((t, &yc), &kc) in self.tmp.iter_mut().zip(y).zip(&self.k[1]) {
            *t = yc + 0.5 * h * kc;
        }
        self.guard(mid, &self.tmp)?;
        self.eval(2, mid, false)?;
        for ((t, &yc), &kc) in self.tmp.iter_mut().zip(y).zip(&self.k[2]) {
            *t = yc + h * kc;
        }
        self.guard(t_lo, &self.tmp)?;
        self.eval(3, t_lo, false)?;
        for c in 0..self.dim {
            out[c] = y[c] + h / 6.0 * (self.k[0][c] + 2.0 * self.k[1][c] + 2.0 * self.k[2][c] + self.k[3][c]);
        }
        self.guard(t_lo, out)
    }
}

enum Sweep {
    Done(SolutionTable),
    Refine,
}

fn sweep<S: OdeSystem + ?Sized>(system: &S, n_steps: usize, tolerance: f64) -> Result<Sweep> {
    let grid = build_grid(system.start(), system.horizon(), &system.breakpoints(), n_steps);
    let dim = system.dimension();
    let mut stepper = Stepper::new(system);
    let mut values = vec![Vec::new(); grid.len()];
    let terminal = system.terminal_values();
    let n = grid.len() - 1;
    values[n] = terminal;
    let mut full = vec![0.0; dim];
    let mut half = vec![0.0; dim];
    let mut fine = vec![0.0; dim];
    for k in (0..n).rev() {
        let (t_lo, t_hi) = (grid[k], grid[k + 1]);
        let t_mid = 0.5 * (t_lo + t_hi);
        let y = &values[k + 1];
        stepper.step(t_hi, t_lo, y, &mut full)?;
        stepper.step(t_hi, t_mid, y, &mut half)?;
        stepper.step(t_mid, t_lo, &half.clone(), &mut fine)?;
        let err = full
            .iter()
            .zip(&fine)
            .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            .fold(0.0, f64::max);
        if err > tolerance {
            return Ok(Sweep::Refine);
        }
        values[k] = fine.clone();
    }
    Ok(Sweep::Done(SolutionTable { grid, values }))
}

/// Solves with the default step count and error control.
pub fn solve_terminal_ode<S: OdeSystem + ?Sized>(system: &S, n_steps: usize) -> Result<SolutionTable> {
    solve_terminal_ode_with(system, &SolveSettings::with_steps(n_steps))
}

pub fn solve_terminal_ode_with<S: OdeSystem + ?Sized>(system: &S, settings: &SolveSettings) -> Result<SolutionTable> {
    if settings.n_steps < 16 {
        return Err(Error::InvalidArgument(format!("need at least 16 steps, got {}", settings.n_steps)));
    }
    if !(system.horizon() > system.start()) {
        return Err(Error::InvalidArgument("horizon must exceed start time".into()));
    }
    let mut n = settings.n_steps;
    while n <= settings.max_steps {
        match sweep(system, n, settings.tolerance)? {
            Sweep::Done(table) => return Ok(table),
            Sweep::Refine => n *= 2,
        }
    }
    Err(Error::Convergence { max_steps: settings.max_steps })
}

/// Largest scaled gap between a centred difference quotient and the
/// right-hand side, over interior grid points away from breakpoints.
pub fn residual_norm<S: OdeSystem + ?Sized>(system: &S, table: &SolutionTable) -> Result<f64> {
    if table.len() < 3 {
        return Err(Error::InvalidArgument("residual needs at least 3 grid points".into()));
    }
    let bps = system.breakpoints();
    let mut dy = vec![0.0; table.dimension()];
    let mut worst: f64 = 0.0;
    for k in 1..table.len() - 1 {
        let t = table.grid[k];
        if bps.contains(&t) {
            continue;
        }
        let (lo, hi) = (&table.values[k - 1], &table.values[k + 1]);
        let dt = table.grid[k + 1] - table.grid[k - 1];
        system.rhs(t, &table.values[k], &mut dy);
        for c in 0..dy.len() {
            let fd = (hi[c] - lo[c]) / dt;
            let scale = table.values[k][c].abs().max(1.0);
            worst = worst.max((fd - dy[c]).abs() / scale);
        }
    }
    Ok(worst)
}
