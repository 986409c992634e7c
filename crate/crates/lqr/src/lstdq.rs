//! Off-policy least-squares temporal-difference estimation of Q-functions
//! (LSTD-Q), plus the oracle-feature variant and diagnostic quantities used
//! to probe estimator conditioning.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::lyapunov::{stack_horizontal, stack_vertical_identity};
use crate::par;
use crate::sim::{LinearSystem, Trajectory};
use crate::symmat::{svec_len, svec_unchecked, sym_kron};

/// Feature matrices for the LSTD-Q estimator. Features are stored
/// column-wise (`p x T`), so column `t` holds `phi_t` resp. `psi_{t+1}`.
#[derive(Debug, Clone)]
pub struct LstdqFeatures {
    pub phi: DMatrix<f64>,
    pub psi_plus: DMatrix<f64>,
    /// `f = svec(sigma_w^2 [I; K_eval][I; K_eval]^T)`.
    pub f: DVector<f64>,
    pub costs: Vec<f64>,
    pub state_dim: usize,
    pub input_dim: usize,
}

impl LstdqFeatures {
    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.phi.nrows()
    }
}

/// `svec(z z^T)` written directly into `out`.
fn svec_outer(z: &DVector<f64>, out: &mut [f64]) {
    const SQRT_2: f64 = std::f64::consts::SQRT_2;
    let n = z.len();
    let mut k = 0;
    for i in 0..n {
        out[k] = z[i] * z[i];
        k += 1;
        for j in (i + 1)..n {
            out[k] = SQRT_2 * z[i] * z[j];
            k += 1;
        }
    }
}

fn stacked(x: &DVectorView<f64>, u: &DVectorView<f64>) -> DVector<f64> {
    let mut z = DVector::zeros(x.len() + u.len());
    z.rows_mut(0, x.len()).copy_from(x);
    z.rows_mut(x.len(), u.len()).copy_from(u);
    z
}

/// Builds `phi_t = svec([x_t; u_t][x_t; u_t]^T)` and the next-state greedy
/// features `psi_{t+1} = svec([x'; K x'][x'; K x']^T)` from a trajectory.
pub fn build_features(
    traj: &Trajectory,
    k_eval: &DMatrix<f64>,
    sigma_w: f64,
) -> Result<LstdqFeatures> {
    let n = traj.state_dim();
    let d = traj.input_dim();
    if k_eval.nrows() != d || k_eval.ncols() != n {
        return Err(Error::Dimension(format!(
            "K_eval must be {}x{}, got {}x{}",
            d,
            n,
            k_eval.nrows(),
            k_eval.ncols()
        )));
    }
    let t_len = traj.len();
    let p = svec_len(n + d);
    let mut phi = DMatrix::zeros(p, t_len);
    let mut psi_plus = DMatrix::zeros(p, t_len);
    for t in 0..t_len {
        let z = stacked(&traj.state(t), &traj.input(t));
        svec_outer(&z, phi.column_mut(t).as_mut_slice());
        let x_next = traj.state(t + 1);
        let u_greedy = k_eval * x_next;
        let z_next = stacked(&x_next, &u_greedy.column(0).into());
        svec_outer(&z_next, psi_plus.column_mut(t).as_mut_slice());
    }
    let ik = stack_vertical_identity(k_eval, n);
    let f = svec_unchecked(&(&ik * ik.transpose() * (sigma_w * sigma_w)));
    Ok(LstdqFeatures {
        phi,
        psi_plus,
        f,
        costs: traj.costs().to_vec(),
        state_dim: n,
        input_dim: d,
    })
}

/// [`build_features`] over several trajectories, concatenated in order.
/// Phase boundaries are respected: each trajectory contributes only its own
/// transitions.
pub fn build_features_multi(
    trajs: &[Trajectory],
    k_eval: &DMatrix<f64>,
    sigma_w: f64,
) -> Result<LstdqFeatures> {
    let mut parts = trajs
        .iter()
        .map(|t| build_features(t, k_eval, sigma_w))
        .collect::<Result<Vec<_>>>()?;
    let first = parts.first().ok_or_else(|| {
        Error::Parameter("build_features_multi needs at least one trajectory".into())
    })?;
    let p = first.feature_dim();
    let total: usize = parts.iter().map(|f| f.len()).sum();
    let mut phi = DMatrix::zeros(p, total);
    let mut psi_plus = DMatrix::zeros(p, total);
    let mut costs = Vec::with_capacity(total);
    let mut offset = 0;
    let (state_dim, input_dim, f) =
        (first.state_dim, first.input_dim, first.f.clone());
    for part in parts.drain(..) {
        let len = part.len();
        phi.view_mut((0, offset), (p, len)).copy_from(&part.phi);
        psi_plus.view_mut((0, offset), (p, len)).copy_from(&part.psi_plus);
        costs.extend_from_slice(&part.costs);
        offset += len;
    }
    Ok(LstdqFeatures { phi, psi_plus, f, costs, state_dim, input_dim })
}

impl LstdqFeatures {
    /// The sub-batch of transitions `range` (columns), used to split one
    /// dataset across policy improvement iterations.
    pub fn slice(&self, range: std::ops::Range<usize>) -> LstdqFeatures {
        LstdqFeatures {
            phi: self.phi.columns(range.start, range.len()).into_owned(),
            psi_plus: self.psi_plus.columns(range.start, range.len()).into_owned(),
            f: self.f.clone(),
            costs: self.costs[range].to_vec(),
            state_dim: self.state_dim,
            input_dim: self.input_dim,
        }
    }
}

/// Features with the sampled next-state columns replaced by their closed-form
/// conditional expectations `smat(Xi_t) = [I;K](mu_t mu_t^T + sigma_w^2 I)[I;K]^T`
/// with `mu_t = A x_t + B u_t`. Test-harness use only: requires the true
/// system.
pub fn oracle_features(
    traj: &Trajectory,
    k_eval: &DMatrix<f64>,
    sys: &LinearSystem,
) -> Result<LstdqFeatures> {
    let mut features = build_features(traj, k_eval, sys.sigma_w)?;
    let n = traj.state_dim();
    let ik = stack_vertical_identity(k_eval, n);
    let noise_cov = DMatrix::identity(n, n) * (sys.sigma_w * sys.sigma_w);
    for t in 0..traj.len() {
        let mu = &sys.a * traj.state(t) + &sys.b * traj.input(t);
        let cond = &ik * (&mu * mu.transpose() + &noise_cov) * ik.transpose();
        features
            .psi_plus
            .column_mut(t)
            .copy_from(&svec_unchecked(&cond));
    }
    Ok(features)
}

/// Result of the LSTD-Q solve. `rank_deficient` flags a design matrix whose
/// rank fell below the feature dimension at the pseudo-inverse cutoff; the
/// estimate is still the pseudo-inverse solution.
#[derive(Debug, Clone)]
pub struct LstdqEstimate {
    pub q: DVector<f64>,
    pub rank_deficient: bool,
}

const ACCUM_CHUNK: usize = 8192;

/// The LSTD-Q estimator
/// `q_hat = (sum_t phi_t (phi_t - psi_{t+1} + f)^T)^+ sum_t phi_t c_t`.
///
/// Accumulation is chunked with a deterministic reduction order, so the
/// result does not depend on the parallelism degree.
pub fn lstdq(features: &LstdqFeatures) -> Result<LstdqEstimate> {
    let p = features.feature_dim();
    let t_len = features.len();
    if t_len == 0 {
        return Err(Error::Parameter("lstdq needs at least one transition".into()));
    }

    let indices: Vec<usize> = (0..t_len).collect();
    let partials = par::map_chunks(&indices, ACCUM_CHUNK, |chunk| {
        let mut a = DMatrix::<f64>::zeros(p, p);
        let mut b = DVector::<f64>::zeros(p);
        let mut diff = DVector::<f64>::zeros(p);
        for &t in chunk {
            let phi_t = features.phi.column(t);
            diff.copy_from(&phi_t);
            diff -= features.psi_plus.column(t);
            diff += &features.f;
            a.ger(1.0, &phi_t, &diff, 1.0);
            b.axpy(features.costs[t], &phi_t, 1.0);
        }
        (a, b)
    });

    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    for (pa, pb) in partials {
        a += pa;
        b += pb;
    }

    // pseudo-inverse with SVD cutoff max(T, p) * eps * sigma_max
    let svd = a.svd(true, true);
    let sigma_max = svd.singular_values.max();
    let cutoff = (t_len.max(p) as f64) * f64::EPSILON * sigma_max;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let mut y = u.transpose() * b;
    for i in 0..p {
        let s = svd.singular_values[i];
        y[i] = if s > cutoff { y[i] / s } else { 0.0 };
    }
    let q = v_t.transpose() * y;
    Ok(LstdqEstimate { q, rank_deficient: rank < p })
}

/// Conditioning diagnostics from the estimator analysis. Requires the true
/// `(A, B)`; diagnostics only, never used by the estimator itself.
#[derive(Debug, Clone, Copy)]
pub struct LstdqDiagnostics {
    /// Smallest singular value of the stacked feature matrix `Phi`.
    pub sigma_min_phi: f64,
    /// `sigma_min(I - L (x)_s L)` with `L = [I; K_eval][A B]`.
    pub sigma_min_bellman: f64,
}

/// The closed-loop lift `L = [I; K_eval][A B]`.
pub fn bellman_lift(k_eval: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    stack_vertical_identity(k_eval, a.nrows()) * stack_horizontal(a, b)
}

pub fn lstdq_diagnostics(
    features: &LstdqFeatures,
    k_eval: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<LstdqDiagnostics> {
    // sigma_min(Phi) = sqrt(lambda_min(Phi Phi^T)) with Phi stored column-wise
    let gram = &features.phi * features.phi.transpose();
    let lmin = gram.symmetric_eigen().eigenvalues.min().max(0.0);
    let sigma_min_phi = lmin.sqrt();

    let l = bellman_lift(k_eval, a, b);
    let p = features.feature_dim();
    let op = DMatrix::identity(p, p) - sym_kron(&l)?;
    let sigma_min_bellman = op.svd(false, false).singular_values.min();
    Ok(LstdqDiagnostics { sigma_min_phi, sigma_min_bellman })
}
