#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Solution at `t` of `y' = -(M y + c)`, `y(T) = y_T`:
/// `e^{M tau} y_T + M^{-1} (e^{M tau} - I) c` with `tau = T - t`.
pub fn affine_backward(m: &DMatrix<f64>, c: &DVector<f64>, y_t: &DVector<f64>, tau: f64) -> DVector<f64> {
    let e = (m * tau).exp();
    let n = m.nrows();
    let forcing = m.clone().lu().solve(&((&e - DMatrix::identity(n, n)) * c)).expect("invertible M");
    &e * y_t + forcing
}

/// `e^{Lambda t}` for a generator given as rows.
pub fn transition_matrix(rows: &[Vec<f64>], t: f64) -> DMatrix<f64> {
    let n = rows.len();
    (DMatrix::from_fn(n, n, |i, j| rows[i][j]) * t).exp()
}

pub fn generator_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}
