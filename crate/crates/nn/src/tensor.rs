//! Small dense-tensor helpers shared by the networks.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softplus, ln(1 + eˣ).
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Truncated-normal init (std 0.02, clipped at ±2σ) via rejection.
pub fn trunc_normal(rows: usize, cols: usize, std: f64, rng: &mut ChaCha12Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| loop {
        // Box–Muller from two uniforms.
        let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        if z.abs() <= 2.0 {
            return std * z;
        }
    })
}

/// Sum of each column as a 1×n row.
pub fn col_sums(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(1, m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out[(0, c)] += m[(r, c)];
        }
    }
    out
}

/// Add a 1×n row vector to every row.
pub fn add_row_broadcast(m: &mut DMatrix<f64>, row: &DMatrix<f64>) {
    debug_assert_eq!(row.nrows(), 1);
    debug_assert_eq!(row.ncols(), m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            m[(r, c)] += row[(0, c)];
        }
    }
}
