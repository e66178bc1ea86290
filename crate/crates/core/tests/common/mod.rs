#![allow(dead_code)]

use nalgebra::DMatrix;
use proptest::prelude::*;

pub fn matrix(rows: usize, cols: usize, scale: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-scale..scale, rows * cols)
        .prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
}

pub fn square(max_n: usize, scale: f64) -> impl Strategy<Value = DMatrix<f64>> {
    (1..=max_n).prop_flat_map(move |n| matrix(n, n, scale))
}

/// `(A, B)` with `n ≤ max_n`, `m ≤ max_m`.
pub fn pair(max_n: usize, max_m: usize) -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
    (1..=max_n, 1..=max_m).prop_flat_map(|(n, m)| (matrix(n, n, 2.0), matrix(n, m, 2.0)))
}

pub fn psd(max_n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (1..=max_n, 1..=max_n).prop_flat_map(|(n, k)| matrix(n, k, 3.0).prop_map(|g| &g * g.transpose()))
}

pub fn rel_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + a.norm().max(b.norm()))
}
