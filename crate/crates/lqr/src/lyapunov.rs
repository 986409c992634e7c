//! Discrete Lyapunov and Riccati solvers, closed-form value and Q functions
//! for linear feedback policies, average cost, and steady-state covariance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::symmat::{
    check_symmetric, is_stable, lambda_min, smat, spectral_radius, svec_unchecked, sym_kron,
};

/// Relative value function of a policy: `V(x) = x^T V x` with average-cost
/// offset `lambda`.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    pub v: DMatrix<f64>,
    pub lambda: f64,
}

/// Relative Q-function of a policy, parameterized by the symmetric
/// `(n+d) x (n+d)` matrix `Q` with `Q(x, u) = [x; u]^T Q [x; u]`.
#[derive(Debug, Clone)]
pub struct QFunction {
    pub q_mat: DMatrix<f64>,
    pub lambda: f64,
    /// Cached `svec(Q)`.
    pub q: DVector<f64>,
}

/// Solution of the discrete algebraic Riccati equation.
#[derive(Debug, Clone)]
pub struct DareSolution {
    pub p_star: DMatrix<f64>,
    pub k_star: DMatrix<f64>,
    /// Optimal average cost `Tr(sigma_w^2 P_star)` per unit noise variance
    /// `sigma_w^2 = 1`; scale by the actual `sigma_w^2` via [`Self::j_star`].
    pub j_star_unit: f64,
}

impl DareSolution {
    /// Optimal average cost under process noise level `sigma_w`.
    pub fn j_star(&self, sigma_w: f64) -> f64 {
        sigma_w * sigma_w * self.j_star_unit
    }
}

/// Solves the discrete Lyapunov equation `P = L^T P L + M` as a dense linear
/// system in svec coordinates. Requires `rho(L) < 1` and symmetric `M`.
pub fn dlyap(l: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sr = spectral_radius(l);
    if sr >= 1.0 - crate::symmat::STABILITY_MARGIN {
        return Err(Error::Unstable { spectral_radius: sr });
    }
    let m = check_symmetric(m)?;
    if l.nrows() != m.nrows() {
        return Err(Error::Dimension(format!(
            "dlyap: L is {}x{} but M is {}x{}",
            l.nrows(),
            l.ncols(),
            m.nrows(),
            m.ncols()
        )));
    }
    // svec(P) - svec(L^T P L) = svec(M), with L^T P L = (L^T) P (L^T)^T.
    let n = l.nrows();
    let p = crate::symmat::svec_len(n);
    let op = DMatrix::identity(p, p) - sym_kron(&l.transpose())?;
    let rhs = svec_unchecked(&m);
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Conditioning("dlyap svec system is singular".into()))?;
    smat(&sol)
}

const DARE_TOL: f64 = 1e-12;
const DARE_MAX_ITERS: usize = 100_000;

/// One application of the Riccati map
/// `F(V) = S + A^T V A - A^T V B (R + B^T V B)^{-1} B^T V A`.
pub fn riccati_map(
    v: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    s: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let bvb = r + b.transpose() * v * b;
    let inv = bvb
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Conditioning("R + B^T V B is singular".into()))?;
    let ava = a.transpose() * v * a;
    let avb = a.transpose() * v * b;
    let next = s + ava - &avb * inv * avb.transpose();
    Ok((&next + next.transpose()) * 0.5)
}

/// Solves the DARE `V = S + A^T V A - A^T V B (R + B^T V B)^{-1} B^T V A` by
/// fixed-point iteration of the Riccati map from `V_0 = S`, and returns the
/// solution together with the optimal gain and average cost.
pub fn dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    s: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DareSolution> {
    let s = check_symmetric(s)?;
    let r = check_symmetric(r)?;
    if lambda_min(&s) <= 0.0 || lambda_min(&r) <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            lambda_min: lambda_min(&s).min(lambda_min(&r)),
        });
    }
    let mut v = s.clone();
    for _ in 0..DARE_MAX_ITERS {
        let next = riccati_map(&v, a, b, &s, &r)?;
        let residual = (&next - &v).norm() / next.norm().max(1.0);
        v = next;
        if residual < DARE_TOL {
            let k_star = optimal_gain(&v, a, b, &r)?;
            if !is_stable(&(a + b * &k_star)) {
                return Err(Error::Unstable {
                    spectral_radius: spectral_radius(&(a + b * &k_star)),
                });
            }
            let j_star_unit = v.trace();
            return Ok(DareSolution { p_star: v, k_star, j_star_unit });
        }
    }
    Err(Error::NonStabilizable { iterations: DARE_MAX_ITERS })
}

/// `K = -(R + B^T V B)^{-1} B^T V A` for a given value matrix `V`.
pub fn optimal_gain(
    v: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let bvb = r + b.transpose() * v * b;
    let inv = bvb
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Conditioning("R + B^T V B is singular".into()))?;
    Ok(-inv * b.transpose() * v * a)
}

/// Value function of the policy `u = Kx`:
/// `V = dlyap(A + BK, S + K^T R K)`, `lambda = sigma_w^2 Tr(V)`.
pub fn policy_value(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    s: &DMatrix<f64>,
    r: &DMatrix<f64>,
    k: &DMatrix<f64>,
    sigma_w: f64,
) -> Result<ValueFunction> {
    let closed = a + b * k;
    let v = dlyap(&closed, &(s + k.transpose() * r * k))?;
    let lambda = sigma_w * sigma_w * v.trace();
    Ok(ValueFunction { v, lambda })
}

/// Q-function of the policy `u = K_eval x`:
/// `Q = blkdiag(S, R) + [A B]^T V [A B]` with
/// `lambda = <Q, sigma_w^2 [I; K][I; K]^T>`.
pub fn policy_qfun(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    s: &DMatrix<f64>,
    r: &DMatrix<f64>,
    k_eval: &DMatrix<f64>,
    sigma_w: f64,
) -> Result<QFunction> {
    let vf = policy_value(a, b, s, r, k_eval, sigma_w)?;
    let n = a.nrows();
    let d = b.ncols();
    let ab = stack_horizontal(a, b);
    let mut q_mat = DMatrix::zeros(n + d, n + d);
    q_mat.view_mut((0, 0), (n, n)).copy_from(s);
    q_mat.view_mut((n, n), (d, d)).copy_from(r);
    q_mat += ab.transpose() * &vf.v * &ab;
    let q_mat = (&q_mat + q_mat.transpose()) * 0.5;
    let ik = stack_vertical_identity(k_eval, n);
    let lambda = sigma_w * sigma_w * (&q_mat * &ik * ik.transpose()).trace();
    let q = svec_unchecked(&q_mat);
    Ok(QFunction { q_mat, lambda, q })
}

/// `[A B]` as one `n x (n+d)` matrix.
pub fn stack_horizontal(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let d = b.ncols();
    let mut out = DMatrix::zeros(n, n + d);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((0, n), (n, d)).copy_from(b);
    out
}

/// `[I; K]` as one `(n+d) x n` matrix.
pub fn stack_vertical_identity(k: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let d = k.nrows();
    let mut out = DMatrix::zeros(n + d, n);
    out.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    out.view_mut((n, 0), (d, n)).copy_from(k);
    out
}

/// Steady-state average cost `Tr(W dlyap(A + BK, S + K^T R K))` of playing
/// `u = Kx` under process noise covariance `W`.
pub fn avg_cost(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    s: &DMatrix<f64>,
    r: &DMatrix<f64>,
    k: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<f64> {
    let closed = a + b * k;
    let v = dlyap(&closed, &(s + k.transpose() * r * k))?;
    Ok((w * v).trace())
}

/// Steady-state covariance of the trajectory driven by
/// `u = K_play x + eta`, `eta ~ N(0, sigma_eta^2 I)`:
/// `P_inf = dlyap((A + B K_play)^T, sigma_w^2 I + sigma_eta^2 B B^T)`.
pub fn steady_covariance(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    k_play: &DMatrix<f64>,
    sigma_w: f64,
    sigma_eta: f64,
) -> Result<DMatrix<f64>> {
    let closed = a + b * k_play;
    let n = a.nrows();
    let w = DMatrix::identity(n, n) * (sigma_w * sigma_w)
        + b * b.transpose() * (sigma_eta * sigma_eta);
    dlyap(&closed.transpose(), &w)
}
