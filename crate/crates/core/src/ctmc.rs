//! Regime-chain sampling and generator diagnostics.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::RegimeGenerator;
use crate::report::{McReport, RngSpec};

/// A realized chain trajectory on `[start, horizon]`.
///
/// `jump_targets[k]` is the state entered at `jump_times[k]`; self-jumps are
/// never recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpPath {
    pub initial_state: usize,
    pub start: f64,
    pub jump_times: Vec<f64>,
    pub jump_targets: Vec<usize>,
    pub horizon: f64,
}

impl JumpPath {
    pub fn constant(state: usize, start: f64, horizon: f64) -> Self {
        Self { initial_state: state, start, jump_times: Vec::new(), jump_targets: Vec::new(), horizon }
    }

    /// State at `t`, right-continuous at jump times.
    pub fn state_at(&self, t: f64) -> usize {
        match self.jump_times.partition_point(|&s| s <= t) {
            0 => self.initial_state,
            k => self.jump_targets[k - 1],
        }
    }

    pub fn final_state(&self) -> usize {
        self.jump_targets.last().copied().unwrap_or(self.initial_state)
    }

    /// Maximal constant-state pieces `(from, to, state)` covering `[start, horizon]`.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        let n = self.jump_times.len();
        (0..=n).map(move |k| {
            let from = if k == 0 { self.start } else { self.jump_times[k - 1] };
            let to = if k == n { self.horizon } else { self.jump_times[k] };
            let state = if k == 0 { self.initial_state } else { self.jump_targets[k - 1] };
            (from, to, state)
        })
    }

    /// Debug dump: header `t_jump,new_state`, the initial state at `start`,
    /// then one row per jump.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_jump,new_state\n");
        out.push_str(&format!("{},{}\n", self.start, self.initial_state));
        for (t, s) in self.jump_times.iter().zip(&self.jump_targets) {
            out.push_str(&format!("{t},{s}\n"));
        }
        out
    }
}

/// Samples a path on `[0, horizon]`.
pub fn sample_path(generator: &RegimeGenerator, initial: usize, horizon: f64, rng: &RngSpec) -> JumpPath {
    sample_path_with(generator, initial, 0.0, horizon, &mut rng.rng())
}

/// Gillespie sampling on `[start, horizon]` from an explicit generator of randomness.
pub fn sample_path_with<R: Rng + ?Sized>(
    generator: &RegimeGenerator,
    initial: usize,
    start: f64,
    horizon: f64,
    rng: &mut R,
) -> JumpPath {
    let mut path = JumpPath::constant(initial, start, horizon);
    let mut state = initial;
    let mut t = start;
    loop {
        let q = generator.exit_rate(state);
        if !(q > 0.0) {
            break;
        }
        let hold: f64 = Exp::new(q).expect("positive exit rate").sample(rng);
        t += hold;
        if t > horizon {
            break;
        }
        let u: f64 = rng.random::<f64>() * q;
        let mut acc = 0.0;
        let mut next = state;
        for (j, &rate) in generator.row(state).iter().enumerate() {
            if j == state || rate <= 0.0 {
                continue;
            }
            acc += rate;
            next = j;
            if u < acc {
                break;
            }
        }
        path.jump_times.push(t);
        path.jump_targets.push(next);
        state = next;
    }
    path
}

fn reachability(generator: &RegimeGenerator) -> Vec<Vec<bool>> {
    let n = generator.states();
    let mut reach = vec![vec![false; n]; n];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
        for (j, cell) in row.iter_mut().enumerate() {
            if i != j && generator.rate(i, j) > 0.0 {
                *cell = true;
            }
        }
    }
    for k in 0..n {
        let via = reach[k].clone();
        for row in reach.iter_mut().filter(|row| row[k]) {
            for (cell, &v) in row.iter_mut().zip(&via) {
                *cell |= v;
            }
        }
    }
    reach
}

/// The unique `pi >= 0` with `sum(pi) = 1` and `pi Lambda = 0`.
///
/// Fails on reducible generators, naming a closed class.
pub fn stationary_distribution(generator: &RegimeGenerator) -> Result<Vec<f64>> {
    let n = generator.states();
    if n == 0 {
        return Err(Error::InvalidArgument("empty generator".into()));
    }
    let reach = reachability(generator);
    if !reach.iter().all(|row| row.iter().all(|&r| r)) {
        // A class is closed when everything it reaches also reaches back.
        let closed = (0..n)
            .find(|&i| (0..n).all(|j| !reach[i][j] || reach[j][i]))
            .expect("finite chains have a closed class");
        let class: Vec<usize> = (0..n).filter(|&j| reach[closed][j]).collect();
        return Err(Error::ReducibleGenerator(class));
    }
    let mut a = DMatrix::from_fn(n, n, |i, j| generator.rate(j, i));
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidArgument("singular stationary system".into()))?;
    Ok(pi.iter().map(|&p| p.max(0.0)).collect())
}

/// Monte-Carlo check that `G(J_T) - G(J_0) - int_0^T (Lambda G)(J_u) du` has
/// mean zero; the report targets 0.
pub fn dynkin_check(
    generator: &RegimeGenerator,
    test_fn: &[f64],
    initial: usize,
    horizon: f64,
    n_paths: usize,
    rng: &RngSpec,
) -> Result<McReport> {
    let n = generator.states();
    if test_fn.len() != n {
        return Err(Error::InvalidArgument(format!("test function has {} values for {n} states", test_fn.len())));
    }
    if initial >= n {
        return Err(Error::StateOutOfRange { state: initial, states: n });
    }
    if n_paths < 1000 {
        return Err(Error::InvalidArgument(format!("dynkin_check needs at least 1000 paths, got {n_paths}")));
    }
    let drift: Vec<f64> = (0..n).map(|i| generator.apply(i, test_fn)).collect();
    let samples: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let path = sample_path(generator, initial, horizon, &rng.chain_stream(k));
            let compensator: f64 = path.segments().map(|(a, b, s)| (b - a) * drift[s]).sum();
            test_fn[path.final_state()] - test_fn[initial] - compensator
        })
        .collect();
    Ok(McReport::from_samples(&samples, rng.clone()).against(0.0))
}
