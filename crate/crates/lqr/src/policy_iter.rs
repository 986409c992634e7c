//! Policy iteration for LQR: the exact recursion and value iteration under
//! known dynamics, and the two sample-based least-squares variants (LSPI with
//! data reuse, and LSPI with fresh data per iteration).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lstdq::{build_features, lstdq, oracle_features};
use crate::lyapunov::{
    dare, optimal_gain, policy_qfun, policy_value, riccati_map, ValueFunction,
};
use crate::sim::{rollout_with_limit, CostModel, InitialState, LinearSystem, RngStream};
use crate::symmat::{
    delta_inf, is_stable, proj_psd_floor, smat, spectral_radius, stability_certificate,
    DEFAULT_CERT_HORIZON,
};

/// Per-iteration record of a policy iteration run. The ground-truth fields
/// are filled only when the harness asked for truth metrics.
#[derive(Debug, Clone, Default)]
pub struct PiMetrics {
    pub delta_inf_to_star: Option<f64>,
    pub rel_cost_err: Option<f64>,
    pub q_err: Option<f64>,
    pub stable: bool,
}

/// Why a policy iteration trace stopped early.
#[derive(Debug, Clone)]
pub enum PiFailure {
    Unstable { iteration: usize, spectral_radius: f64 },
    Divergence { iteration: usize, step: usize },
    Conditioning { iteration: usize, message: String },
}

/// Trace of gains and diagnostics across policy improvement steps.
/// `gains[0]` is the initial policy; `metrics[t]` describes `gains[t]`.
#[derive(Debug, Clone)]
pub struct PiTrace {
    pub gains: Vec<DMatrix<f64>>,
    pub values: Vec<ValueFunction>,
    pub metrics: Vec<PiMetrics>,
    pub failure: Option<PiFailure>,
}

impl PiTrace {
    pub fn final_gain(&self) -> &DMatrix<f64> {
        self.gains.last().expect("trace holds at least the initial gain")
    }

    /// CSV with columns `iteration,q_err,rel_cost_err,stable`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,q_err,rel_cost_err,stable")?;
        for (t, m) in self.metrics.iter().enumerate() {
            let q_err = m.q_err.map_or(String::new(), |v| v.to_string());
            let rel = m.rel_cost_err.map_or(String::new(), |v| v.to_string());
            writeln!(w, "{t},{q_err},{rel},{}", m.stable)?;
        }
        Ok(())
    }
}

/// The greedy improvement map `G(Q) = -Q22^{-1} Q12^T` for a `Q` matrix
/// partitioned at state dimension `n`.
pub fn greedy_improve(q_mat: &DMatrix<f64>, state_dim: usize) -> Result<DMatrix<f64>> {
    let total = q_mat.nrows();
    if !q_mat.is_square() || state_dim >= total {
        return Err(Error::Dimension(format!(
            "Q must be square with side > state dim; got {}x{} with n = {}",
            q_mat.nrows(),
            q_mat.ncols(),
            state_dim
        )));
    }
    let d = total - state_dim;
    let q12 = q_mat.view((0, state_dim), (state_dim, d));
    let q22 = q_mat.view((state_dim, state_dim), (d, d)).into_owned();
    let inv = q22
        .try_inverse()
        .ok_or_else(|| Error::Conditioning("Q22 block is singular".into()))?;
    Ok(-inv * q12.transpose())
}

/// Exact policy iteration from known dynamics:
/// `K_{t+1} = -(R + B^T V_t B)^{-1} B^T V_t A`,
/// `V_{t+1} = dlyap(A + B K_{t+1}, S + K_{t+1}^T R K_{t+1})`.
///
/// The trace records, per iterate, the invariant-metric distance to the DARE
/// solution and the relative cost error.
pub fn exact_pi(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    s: &DMatrix<f64>,
    r: &DMatrix<f64>,
    k0: &DMatrix<f64>,
    n_iters: usize,
) -> Result<PiTrace> {
    if !is_stable(&(a + b * k0)) {
        return Err(Error::Unstable { spectral_radius: spectral_radius(&(a + b * k0)) });
    }
    let star = dare(a, b, s, r)?;
    let j_star = star.j_star_unit;

    let mut gains = vec![k0.clone()];
    let mut values = Vec::new();
    let mut metrics = Vec::new();
    let mut failure = None;

    let mut k = k0.clone();
    for t in 0..=n_iters {
        let closed = a + b * &k;
        if stability_certificate(&closed, DEFAULT_CERT_HORIZON)?.is_none() {
            failure = Some(PiFailure::Unstable {
                iteration: t,
                spectral_radius: spectral_radius(&closed),
            });
            break;
        }
        let vf = policy_value(a, b, s, r, &k, 1.0)?;
        metrics.push(PiMetrics {
            delta_inf_to_star: Some(delta_inf(&vf.v, &star.p_star)?),
            rel_cost_err: Some((vf.v.trace() - j_star) / j_star),
            q_err: None,
            stable: true,
        });
        if t == n_iters {
            values.push(vf);
            break;
        }
        k = optimal_gain(&vf.v, a, b, r)?;
        values.push(vf);
        gains.push(k.clone());
    }
    Ok(PiTrace { gains, values, metrics, failure })
}

/// Value iteration: recurses the Riccati map from a PSD `V_0`, stopping when
/// the invariant-metric gap between successive iterates drops below `tol`.
pub fn value_iteration(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    s: &DMatrix<f64>,
    r: &DMatrix<f64>,
    v0: &DMatrix<f64>,
    max_iters: usize,
    tol: f64,
) -> Result<DMatrix<f64>> {
    let mut v = crate::symmat::check_symmetric(v0)?;
    for _ in 0..max_iters {
        let next = riccati_map(&v, a, b, s, r)?;
        // delta_inf needs PD iterates; fall back to a norm gap before the
        // recursion has made V positive definite
        let gap = delta_inf(&next, &v).unwrap_or_else(|_| (&next - &v).norm());
        v = next;
        if gap < tol {
            break;
        }
    }
    Ok(v)
}

/// Configuration shared by both LSPI variants.
#[derive(Debug, Clone)]
pub struct LspiOptions {
    /// Number of policy improvement iterations `N`.
    pub n_iters: usize,
    /// Rollout length `T` (per iteration for the fresh-data variant).
    pub rollout_len: usize,
    /// Exploration standard deviation for `u = K0 x + eta`.
    pub sigma_eta: f64,
    /// Eigenvalue floor for the projection of the estimated `Q`.
    pub mu: f64,
    /// Reset the state between iterations instead of continuing (ablation;
    /// the fresh-data variant does not require a reset).
    pub reset_between_iters: bool,
    /// Replace sampled next-state features by their conditional expectations
    /// (test-harness mode; reads the true dynamics).
    pub oracle_features: bool,
    /// Record ground-truth diagnostics (q_err, relative cost error) in the
    /// trace. Uses the true dynamics; the estimator path never does.
    pub truth_metrics: bool,
    pub divergence_threshold: f64,
}

impl LspiOptions {
    pub fn new(n_iters: usize, rollout_len: usize, sigma_eta: f64, mu: f64) -> Self {
        Self {
            n_iters,
            rollout_len,
            sigma_eta,
            mu,
            reset_between_iters: false,
            oracle_features: false,
            truth_metrics: false,
            divergence_threshold: crate::sim::DEFAULT_DIVERGENCE_THRESHOLD,
        }
    }
}

struct TruthContext {
    star: crate::lyapunov::DareSolution,
}

fn truth_context(
    sys: &LinearSystem,
    cost: &CostModel,
    enabled: bool,
) -> Result<Option<TruthContext>> {
    if !enabled {
        return Ok(None);
    }
    Ok(Some(TruthContext { star: dare(&sys.a, &sys.b, &cost.s, &cost.r)? }))
}

fn truth_metrics_for(
    ctx: &Option<TruthContext>,
    sys: &LinearSystem,
    cost: &CostModel,
    k: &DMatrix<f64>,
    q_est: Option<&nalgebra::DVector<f64>>,
) -> PiMetrics {
    let stable = is_stable(&(&sys.a + &sys.b * k));
    let mut m = PiMetrics { stable, ..Default::default() };
    if let Some(ctx) = ctx {
        if stable {
            if let Ok(vf) = policy_value(&sys.a, &sys.b, &cost.s, &cost.r, k, 1.0) {
                let j_star = ctx.star.j_star_unit;
                m.rel_cost_err = Some((vf.v.trace() - j_star) / j_star);
                m.delta_inf_to_star = delta_inf(&vf.v, &ctx.star.p_star).ok();
            }
            if let Some(q_est) = q_est {
                if let Ok(truth) =
                    policy_qfun(&sys.a, &sys.b, &cost.s, &cost.r, k, sys.sigma_w)
                {
                    m.q_err = Some((q_est - &truth.q).norm());
                }
            }
        }
    }
    m
}

/// LSPI with upfront data collection: one rollout of length `T` under `K_0`,
/// re-used by every LSTD-Q iteration.
pub fn lspi_v1(
    sys: &LinearSystem,
    cost: &CostModel,
    k0: &DMatrix<f64>,
    opts: &LspiOptions,
    stream: RngStream,
) -> Result<PiTrace> {
    let ctx = truth_context(sys, cost, opts.truth_metrics)?;
    let mut gains = vec![k0.clone()];
    let mut metrics = Vec::new();
    let mut failure = None;

    let mut rng = stream.rng();
    let traj = match rollout_with_limit(
        sys,
        cost,
        k0,
        opts.sigma_eta,
        opts.rollout_len,
        InitialState::Fresh,
        &mut rng,
        opts.divergence_threshold,
    ) {
        Ok(t) => t,
        Err(Error::Divergence { step, .. }) => {
            metrics.push(truth_metrics_for(&ctx, sys, cost, k0, None));
            return Ok(PiTrace {
                gains,
                values: Vec::new(),
                metrics,
                failure: Some(PiFailure::Divergence { iteration: 0, step }),
            });
        }
        Err(e) => return Err(e),
    };

    let mut k = k0.clone();
    for t in 0..opts.n_iters {
        let features = if opts.oracle_features {
            oracle_features(&traj, &k, sys)?
        } else {
            build_features(&traj, &k, sys.sigma_w)?
        };
        let est = lstdq(&features)?;
        metrics.push(truth_metrics_for(&ctx, sys, cost, &k, Some(&est.q)));
        let q_proj = proj_psd_floor(&smat(&est.q)?, opts.mu)?;
        match greedy_improve(&q_proj, sys.state_dim()) {
            Ok(next) => {
                k = next;
                gains.push(k.clone());
            }
            Err(Error::Conditioning(message)) => {
                failure = Some(PiFailure::Conditioning { iteration: t, message });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if failure.is_none() {
        metrics.push(truth_metrics_for(&ctx, sys, cost, &k, None));
    }
    Ok(PiTrace { gains, values: Vec::new(), metrics, failure })
}

/// LSPI with fresh data per iteration: a new length-`T` rollout under `K_0`
/// (continuing the state, no reset) precedes each LSTD-Q call.
pub fn lspi_v2(
    sys: &LinearSystem,
    cost: &CostModel,
    k0: &DMatrix<f64>,
    opts: &LspiOptions,
    stream: RngStream,
) -> Result<PiTrace> {
    let ctx = truth_context(sys, cost, opts.truth_metrics)?;
    let mut gains = vec![k0.clone()];
    let mut metrics = Vec::new();
    let mut failure = None;

    let mut k = k0.clone();
    let mut carry: Option<nalgebra::DVector<f64>> = None;
    for t in 0..opts.n_iters {
        let start = match (&carry, opts.reset_between_iters) {
            (Some(x), false) => InitialState::Continue(x.clone()),
            _ => InitialState::Fresh,
        };
        let mut rng = stream.phase(t as u64).rng();
        let traj = match rollout_with_limit(
            sys,
            cost,
            k0,
            opts.sigma_eta,
            opts.rollout_len,
            start,
            &mut rng,
            opts.divergence_threshold,
        ) {
            Ok(traj) => traj,
            Err(Error::Divergence { step, .. }) => {
                failure = Some(PiFailure::Divergence { iteration: t, step });
                break;
            }
            Err(e) => return Err(e),
        };
        carry = Some(traj.final_state());

        let features = if opts.oracle_features {
            oracle_features(&traj, &k, sys)?
        } else {
            build_features(&traj, &k, sys.sigma_w)?
        };
        let est = lstdq(&features)?;
        metrics.push(truth_metrics_for(&ctx, sys, cost, &k, Some(&est.q)));
        let q_proj = proj_psd_floor(&smat(&est.q)?, opts.mu)?;
        match greedy_improve(&q_proj, sys.state_dim()) {
            Ok(next) => {
                k = next;
                gains.push(k.clone());
            }
            Err(Error::Conditioning(message)) => {
                failure = Some(PiFailure::Conditioning { iteration: t, message });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if failure.is_none() {
        metrics.push(truth_metrics_for(&ctx, sys, cost, &k, None));
    }
    Ok(PiTrace { gains, values: Vec::new(), metrics, failure })
}

/// Default eigenvalue floor `mu = min(lambda_min(S), lambda_min(R))`.
pub fn default_mu(cost: &CostModel) -> f64 {
    crate::symmat::lambda_min(&cost.s).min(crate::symmat::lambda_min(&cost.r))
}
