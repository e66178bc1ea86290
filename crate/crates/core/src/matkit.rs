//! Dense-matrix kernels shared by the rest of the crate.
//!
//! Everything here is a pure function on owned or borrowed `DMatrix<f64>`
//! values: spectra, half-plane classification, PSD square roots,
//! orthonormal range bases and the Hurwitz predicate.

use nalgebra::{Complex, DMatrix, Schur, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Default half-plane boundary band: `Re(λ) >= -1e-9` counts as `σ⁺`.
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-9;
/// Default relative singular-value cutoff for rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

const SCHUR_MAX_ITER: usize = 10_000;
const SCHUR_RETRIES: u64 = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is indefinite (smallest eigenvalue {min_eigenvalue:.3e})")]
    Indefinite { min_eigenvalue: f64 },
}

/// Eigenvalues of a real square matrix, with algebraic multiplicity.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    pub source_dim: usize,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Largest real part, or `-inf` for the empty spectrum.
    pub fn max_real(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn ensure_square(m: &DMatrix<f64>) -> Result<(), MatError> {
    if m.nrows() != m.ncols() {
        return Err(MatError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// All eigenvalues of `m`, conjugate pairs symmetrized.
pub fn spectrum(m: &DMatrix<f64>) -> Result<Spectrum, MatError> {
    ensure_square(m)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(MatError::NonFinite);
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(Spectrum {
            eigenvalues: Vec::new(),
            source_dim: 0,
        });
    }
    let (_, t) = real_schur(m)?;
    let mut eigenvalues: Vec<Complex64> = quasi_triangular_eigenvalues(&t);
    if eigenvalues.iter().any(|l| !l.re.is_finite() || !l.im.is_finite()) {
        return Err(MatError::NoConvergence);
    }
    pair_conjugates(&mut eigenvalues, 1e-8 * m.norm().max(f64::MIN_POSITIVE));
    Ok(Spectrum {
        eigenvalues,
        source_dim: n,
    })
}

/// Real Schur form `M = Q T Qᵀ`.
///
/// nalgebra's QR iteration occasionally stalls on structured inputs such as
/// Hamiltonians with exact zero blocks. When it does, the decomposition is
/// retried on `VᵀMV` for a few fixed pseudo-random orthogonal `V` and mapped
/// back, which leaves the spectrum unchanged.
pub fn real_schur(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), MatError> {
    ensure_square(m)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(MatError::NonFinite);
    }
    if let Some(s) = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER) {
        return Ok(s.unpack());
    }
    let n = m.nrows();
    for seed in 0..SCHUR_RETRIES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let v = g.qr().q();
        let rotated = v.transpose() * m * &v;
        if let Some(s) = Schur::try_new(rotated, f64::EPSILON, SCHUR_MAX_ITER) {
            let (q, t) = s.unpack();
            return Ok((v * q, t));
        }
    }
    Err(MatError::NoConvergence)
}

/// Eigenvalues read off the 1x1 and 2x2 diagonal blocks of a real Schur form.
fn quasi_triangular_eigenvalues(t: &DMatrix<f64>) -> Vec<Complex64> {
    let n = t.nrows();
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    while k < n {
        if k + 1 < n && t[(k + 1, k)] != 0.0 {
            let (a, b, c, d) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
            let half_tr = 0.5 * (a + d);
            let disc = Complex64::new(0.25 * (a - d) * (a - d) + b * c, 0.0).sqrt();
            out.push(half_tr + disc);
            out.push(half_tr - disc);
            k += 2;
        } else {
            out.push(Complex64::new(t[(k, k)], 0.0));
            k += 1;
        }
    }
    out
}

/// Pairs each upper-half-plane eigenvalue with its nearest lower-half-plane
/// partner and replaces both by the exact conjugate pair of their average.
fn pair_conjugates(values: &mut [Complex64], tol: f64) {
    let n = values.len();
    let mut used = vec![false; n];
    for i in 0..n {
        if used[i] || values[i].im <= 0.0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if j == i || used[j] || values[j].im >= 0.0 {
                continue;
            }
            let dist = (values[i] - values[j].conj()).norm();
            if best.is_none_or(|(_, d)| dist < d) {
                best = Some((j, dist));
            }
        }
        if let Some((j, dist)) = best {
            if dist < tol {
                let re = 0.5 * (values[i].re + values[j].re);
                let im = 0.5 * (values[i].im - values[j].im);
                values[i] = Complex64::new(re, im);
                values[j] = Complex64::new(re, -im);
                used[i] = true;
                used[j] = true;
            }
        }
    }
}

/// Splits a spectrum into `σ⁺` (`Re(λ) >= -tol`) and `σ⁻`.
pub fn split_half_planes(s: &Spectrum, tol: f64) -> (Vec<Complex64>, Vec<Complex64>) {
    s.eigenvalues.iter().partition(|l| l.re >= -tol)
}

/// Symmetric PSD square root through the symmetric eigendecomposition.
///
/// Eigenvalues in `[-1e-10·‖M‖, 0)` are clamped to zero; anything more
/// negative is rejected.
pub fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>, MatError> {
    ensure_square(m)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(MatError::NonFinite);
    }
    if m.is_empty() {
        return Ok(m.clone());
    }
    let scale = m.norm();
    let asymmetry = (m - m.transpose()).norm();
    if asymmetry > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(MatError::NotSymmetric { asymmetry });
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let min_eigenvalue = eig.eigenvalues.min();
    if min_eigenvalue < -1e-10 * scale {
        return Err(MatError::Indefinite { min_eigenvalue });
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let s = v * DMatrix::from_diagonal(&roots) * v.transpose();
    Ok((&s + s.transpose()) * 0.5)
}

/// Flips each column so that its largest-magnitude entry is positive.
pub(crate) fn normalize_column_signs(basis: &mut DMatrix<f64>) {
    for mut col in basis.column_iter_mut() {
        let mut pivot: f64 = 0.0;
        for &v in col.iter() {
            if v.abs() > pivot.abs() + 1e-12 {
                pivot = v;
            }
        }
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
}

/// Orthonormal basis of the column space of `m`.
///
/// Directions whose singular value falls below `rank_tol · σ_max` are dropped.
/// Columns are sign-normalized so the result is deterministic.
pub fn orthonormal_range(m: &DMatrix<f64>, rank_tol: f64) -> DMatrix<f64> {
    let rows = m.nrows();
    if m.is_empty() || m.iter().all(|v| *v == 0.0) {
        return DMatrix::zeros(rows, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let s_max = svd.singular_values.max();
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > rank_tol * s_max)
        .map(|(i, _)| i)
        .collect();
    let mut basis = DMatrix::zeros(rows, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        basis.set_column(j, &u.column(i));
    }
    normalize_column_signs(&mut basis);
    basis
}

/// Orthonormal basis of the orthogonal complement of the (orthonormal) columns of `v`.
pub fn orthogonal_complement(v: &DMatrix<f64>) -> DMatrix<f64> {
    let n = v.nrows();
    if v.ncols() >= n {
        return DMatrix::zeros(n, 0);
    }
    let projector = DMatrix::identity(n, n) - v * v.transpose();
    // projector eigenvalues are 0 or 1, so a fixed cut at 1/2 is exact
    let eig = SymmetricEigen::new((&projector + projector.transpose()) * 0.5);
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    let mut basis = DMatrix::zeros(n, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        basis.set_column(j, &eig.eigenvectors.column(i));
    }
    normalize_column_signs(&mut basis);
    debug_assert_eq!(basis.ncols() + v.ncols(), n);
    basis
}

/// True iff every eigenvalue of `m` satisfies `Re(λ) < -margin`.
///
/// Non-square input or a failed eigen-iteration yields `false`.
pub fn is_hurwitz(m: &DMatrix<f64>, margin: f64) -> bool {
    match spectrum(m) {
        Ok(s) => s.eigenvalues.iter().all(|l| l.re < -margin),
        Err(_) => false,
    }
}

pub(crate) fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex<f64>> {
    m.map(|v| Complex::new(v, 0.0))
}

/// Smallest and largest singular values of a complex matrix (row-rank view).
pub(crate) fn complex_singular_range(m: &DMatrix<Complex<f64>>) -> (f64, f64) {
    let k = m.nrows().min(m.ncols());
    if k == 0 {
        return (0.0, 0.0);
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    // A wide matrix has `nrows` singular values; a missing one counts as zero.
    let min = if m.ncols() < m.nrows() { 0.0 } else { sv.min() };
    (min, max)
}
