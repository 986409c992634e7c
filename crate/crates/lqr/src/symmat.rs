//! Symmetric-matrix toolkit: norm-preserving vectorization (svec/smat), the
//! symmetric Kronecker operator, PSD-floor projection, the invariant metric
//! `delta_inf` on positive definite matrices, and quantitative stability
//! certificates.
//!
//! The svec ordering is row-major over the upper triangle with diagonal
//! entries unscaled and off-diagonal entries scaled by sqrt(2), so that
//! `<svec(M), svec(N)> = <M, N>_F`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance used when checking that an input matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Spectral-radius threshold below which a matrix is considered stable.
pub const STABILITY_MARGIN: f64 = 1e-9;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Length of the svec image of an `n x n` symmetric matrix.
pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Matrix side `n` such that `svec_len(n) == len`, if `len` is triangular.
pub fn smat_dim(len: usize) -> Option<usize> {
    let n = ((2.0 * len as f64 + 0.25).sqrt() - 0.5).round() as usize;
    (svec_len(n) == len).then_some(n)
}

/// Checks that `m` is symmetric to within [`SYMMETRY_TOL`] (relative) and
/// returns the symmetrized matrix `(M + M^T) / 2`, absorbing floating drift
/// from upstream solves.
pub fn check_symmetric(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(1.0);
    let mut asym: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry: asym / scale });
    }
    Ok((m + m.transpose()) * 0.5)
}

/// Norm-preserving vectorization of a symmetric matrix.
pub fn svec(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let m = check_symmetric(m)?;
    Ok(svec_unchecked(&m))
}

/// svec without the symmetry check; reads only the upper triangle.
pub fn svec_unchecked(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows();
    let mut v = DVector::zeros(svec_len(n));
    let mut k = 0;
    for i in 0..n {
        v[k] = m[(i, i)];
        k += 1;
        for j in (i + 1)..n {
            v[k] = SQRT_2 * m[(i, j)];
            k += 1;
        }
    }
    v
}

/// Inverse of [`svec`].
pub fn smat(v: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = smat_dim(v.len()).ok_or_else(|| {
        Error::Dimension(format!("length {} is not a triangular number", v.len()))
    })?;
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        m[(i, i)] = v[k];
        k += 1;
        for j in (i + 1)..n {
            let x = v[k] / SQRT_2;
            m[(i, j)] = x;
            m[(j, i)] = x;
            k += 1;
        }
    }
    Ok(m)
}

/// Dense matrix of the symmetric Kronecker operator `L (x)_s L`, acting on
/// svec coordinates: `(L (x)_s L) svec(M) = svec(L M L^T)` for symmetric `M`.
pub fn sym_kron(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !l.is_square() {
        return Err(Error::Dimension(format!(
            "sym_kron expects a square matrix, got {}x{}",
            l.nrows(),
            l.ncols()
        )));
    }
    let n = l.nrows();
    let p = svec_len(n);
    let mut op = DMatrix::zeros(p, p);
    let mut basis = DVector::zeros(p);
    for k in 0..p {
        basis[k] = 1.0;
        let e = smat(&basis)?;
        let col = svec_unchecked(&(l * e * l.transpose()));
        op.set_column(k, &col);
        basis[k] = 0.0;
    }
    Ok(op)
}

/// Euclidean projection onto `{X = X^T : X >= mu I}` via eigenvalue clipping.
pub fn proj_psd_floor(m: &DMatrix<f64>, mu: f64) -> Result<DMatrix<f64>> {
    if mu <= 0.0 {
        return Err(Error::Parameter(format!("psd floor mu must be positive, got {mu}")));
    }
    let m = check_symmetric(m)?;
    let eig = m.symmetric_eigen();
    let clipped = eig.eigenvalues.map(|l| l.max(mu));
    let q = &eig.eigenvectors;
    let out = q * DMatrix::from_diagonal(&clipped) * q.transpose();
    // the congruence can leave ~1ulp asymmetry
    Ok((&out + out.transpose()) * 0.5)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

/// Largest eigenvalue of a symmetric matrix.
pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.max()
}

fn check_pd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = check_symmetric(m)?;
    let eigs = m.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = (eigs.min(), eigs.max());
    if lo <= 1e-12 * hi.max(0.0) {
        return Err(Error::NotPositiveDefinite { lambda_min: lo });
    }
    Ok(m)
}

/// `M^{-1/2}` for symmetric positive definite `M`.
pub fn inv_sqrt_pd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = check_pd(m)?;
    let eig = m.symmetric_eigen();
    let d = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose())
}

/// Invariant metric `delta_inf(A, B) = || log(A^{-1/2} B A^{-1/2}) ||` on
/// positive definite matrices. Symmetric in its arguments and invariant under
/// congruence `(A, B) -> (M A M^T, M B M^T)`.
pub fn delta_inf(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "delta_inf arguments differ in shape: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let a_inv_sqrt = inv_sqrt_pd(a)?;
    let b = check_pd(b)?;
    let c = &a_inv_sqrt * b * &a_inv_sqrt;
    let c = (&c + c.transpose()) * 0.5;
    let eigs = c.symmetric_eigen().eigenvalues;
    Ok(eigs.iter().map(|l| l.ln().abs()).fold(0.0, f64::max))
}

/// Spectral radius of a square matrix.
pub fn spectral_radius(l: &DMatrix<f64>) -> f64 {
    l.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Whether `rho(L) < 1 - STABILITY_MARGIN`.
pub fn is_stable(l: &DMatrix<f64>) -> bool {
    spectral_radius(l) < 1.0 - STABILITY_MARGIN
}

/// Operator (spectral) norm.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// A verified `(tau, rho)` pair: `||L^k|| <= tau rho^k` for `k = 0..k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCertificate {
    pub tau: f64,
    pub rho: f64,
    pub k_max: usize,
}

/// Default power horizon for [`stability_certificate`].
pub const DEFAULT_CERT_HORIZON: usize = 200;

/// Constructs a `(tau, rho)` stability certificate for `L`, or `None` when
/// `rho(L) >= 1`. Uses `rho = (rho(L) + 1) / 2` and takes `tau` as the
/// largest transient ratio `||L^k|| / rho^k` over `k = 0..k_max`.
pub fn stability_certificate(
    l: &DMatrix<f64>,
    k_max: usize,
) -> Result<Option<StabilityCertificate>> {
    if !l.is_square() {
        return Err(Error::Dimension(format!(
            "stability_certificate expects a square matrix, got {}x{}",
            l.nrows(),
            l.ncols()
        )));
    }
    if k_max < 1 {
        return Err(Error::Parameter("certificate horizon k_max must be >= 1".into()));
    }
    let sr = spectral_radius(l);
    if sr >= 1.0 {
        return Ok(None);
    }
    let rho = (sr + 1.0) / 2.0;
    let mut tau: f64 = 1.0; // k = 0 term
    let mut power = DMatrix::identity(l.nrows(), l.ncols());
    let mut rho_k = 1.0;
    for _ in 1..=k_max {
        power = &power * l;
        rho_k *= rho;
        tau = tau.max(operator_norm(&power) / rho_k);
    }
    Ok(Some(StabilityCertificate { tau, rho, k_max }))
}
