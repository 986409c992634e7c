//! LQR plant simulation: seeded Gaussian rollouts under `u = K_play x + eta`
//! with explicit state carry-over across phases and per-step cost accounting.

use std::io::Write;

use nalgebra::{DMatrix, DVector, DVectorView};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::symmat::check_symmetric;

/// Norm threshold beyond which a rollout is declared divergent.
pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e8;

/// The plant `x_{t+1} = A x_t + B u_t + w_t`, `w_t ~ N(0, sigma_w^2 I)`,
/// with initial-state covariance `Sigma0` for fresh starts.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub sigma_w: f64,
    pub sigma0: DMatrix<f64>,
}

impl LinearSystem {
    /// Builds a system with a deterministic zero fresh start (`Sigma0 = 0`).
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, sigma_w: f64) -> Result<Self> {
        let n = a.nrows();
        Self::with_initial_covariance(a, b, sigma_w, DMatrix::zeros(n, n))
    }

    pub fn with_initial_covariance(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        sigma_w: f64,
        sigma0: DMatrix<f64>,
    ) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.nrows() {
            return Err(Error::Dimension(format!(
                "system dimensions inconsistent: A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if sigma_w < 0.0 {
            return Err(Error::Parameter(format!("sigma_w must be >= 0, got {sigma_w}")));
        }
        let sigma0 = check_symmetric(&sigma0)?;
        if sigma0.nrows() != a.nrows() {
            return Err(Error::Dimension("Sigma0 must be n x n".into()));
        }
        Ok(Self { a, b, sigma_w, sigma0 })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

/// Quadratic stage cost `c(x, u) = x^T S x + u^T R u`.
#[derive(Debug, Clone)]
pub struct CostModel {
    pub s: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl CostModel {
    pub fn new(s: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        Ok(Self { s: check_symmetric(&s)?, r: check_symmetric(&r)? })
    }

    pub fn stage_cost(&self, x: &DVectorView<f64>, u: &DVectorView<f64>) -> f64 {
        (x.transpose() * &self.s * x)[(0, 0)] + (u.transpose() * &self.r * u)[(0, 0)]
    }
}

/// A reproducible RNG stream keyed by `(seed, trial, phase, purpose)`.
/// Identical keys produce identical draws regardless of scheduling, which is
/// what makes trial-level parallelism deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub trial: u64,
    pub phase: u64,
    pub purpose: u32,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, trial: 0, phase: 0, purpose: 0 }
    }

    pub fn trial(self, trial: u64) -> Self {
        Self { trial, ..self }
    }

    pub fn phase(self, phase: u64) -> Self {
        Self { phase, ..self }
    }

    pub fn purpose(self, purpose: u32) -> Self {
        Self { purpose, ..self }
    }

    /// Instantiates the generator for this stream key.
    pub fn rng(&self) -> ChaCha12Rng {
        let mut state = self
            .seed
            .wrapping_mul(0x6C62_272E_07BB_0142)
            .wrapping_add(self.trial)
            .wrapping_mul(0x27D4_EB2F_1656_67C5)
            .wrapping_add(self.phase)
            .wrapping_mul(0x1000_0000_01B3)
            .wrapping_add(self.purpose as u64);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha12Rng::from_seed(key)
    }
}

/// How a rollout begins: fresh draw `x_0 ~ N(0, Sigma0)` or continuation from
/// the final state of a previous phase.
#[derive(Debug, Clone)]
pub enum InitialState {
    Fresh,
    Continue(DVector<f64>),
}

/// A recorded rollout: states `x_1..x_{T+1}`, inputs, exploration noises,
/// and per-step costs, stored flat.
#[derive(Debug, Clone)]
pub struct Trajectory {
    n: usize,
    d: usize,
    states: Vec<f64>,
    inputs: Vec<f64>,
    etas: Vec<f64>,
    costs: Vec<f64>,
    pub k_play: DMatrix<f64>,
    pub sigma_eta: f64,
}

impl Trajectory {
    /// Number of recorded transitions `T`.
    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    /// `x_t` for `t = 0..=T` (index `T` is the carry-over state).
    pub fn state(&self, t: usize) -> DVectorView<'_, f64> {
        DVectorView::from_slice(&self.states[t * self.n..(t + 1) * self.n], self.n)
    }

    pub fn input(&self, t: usize) -> DVectorView<'_, f64> {
        DVectorView::from_slice(&self.inputs[t * self.d..(t + 1) * self.d], self.d)
    }

    pub fn eta(&self, t: usize) -> DVectorView<'_, f64> {
        DVectorView::from_slice(&self.etas[t * self.d..(t + 1) * self.d], self.d)
    }

    pub fn cost(&self, t: usize) -> f64 {
        self.costs[t]
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    /// Final state, suitable for `InitialState::Continue`.
    pub fn final_state(&self) -> DVector<f64> {
        self.state(self.len()).into_owned()
    }

    /// The first `len` transitions as their own trajectory (with `x_len` as
    /// the carry-over state). Lets estimators be scored on data prefixes
    /// without re-simulating.
    pub fn prefix(&self, len: usize) -> Trajectory {
        assert!(len <= self.len());
        Trajectory {
            n: self.n,
            d: self.d,
            states: self.states[..(len + 1) * self.n].to_vec(),
            inputs: self.inputs[..len * self.d].to_vec(),
            etas: self.etas[..len * self.d].to_vec(),
            costs: self.costs[..len].to_vec(),
            k_play: self.k_play.clone(),
            sigma_eta: self.sigma_eta,
        }
    }

    /// Debug dump with columns `t, x[0..n), u[0..d), cost`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for i in 0..self.n {
            write!(w, ",x{i}")?;
        }
        for i in 0..self.d {
            write!(w, ",u{i}")?;
        }
        writeln!(w, ",cost")?;
        for t in 0..self.len() {
            write!(w, "{t}")?;
            for v in self.state(t).iter() {
                write!(w, ",{v}")?;
            }
            for v in self.input(t).iter() {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{}", self.costs[t])?;
        }
        Ok(())
    }
}

fn gaussian_vector<R: Rng>(rng: &mut R, dim: usize, sigma: f64) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| sigma * rng.sample::<f64, _>(StandardNormal))
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Rolls the plant forward `t_len` steps under `u = K_play x + eta` with
/// `eta ~ N(0, sigma_eta^2 I)`. Per step the exploration noise is drawn
/// before the process noise, so streams replay identically.
pub fn rollout<R: Rng>(
    sys: &LinearSystem,
    cost: &CostModel,
    k_play: &DMatrix<f64>,
    sigma_eta: f64,
    t_len: usize,
    start: InitialState,
    rng: &mut R,
) -> Result<Trajectory> {
    rollout_with_limit(sys, cost, k_play, sigma_eta, t_len, start, rng, DEFAULT_DIVERGENCE_THRESHOLD)
}

#[allow(clippy::too_many_arguments)]
pub fn rollout_with_limit<R: Rng>(
    sys: &LinearSystem,
    cost: &CostModel,
    k_play: &DMatrix<f64>,
    sigma_eta: f64,
    t_len: usize,
    start: InitialState,
    rng: &mut R,
    divergence_threshold: f64,
) -> Result<Trajectory> {
    let n = sys.state_dim();
    let d = sys.input_dim();
    if k_play.nrows() != d || k_play.ncols() != n {
        return Err(Error::Dimension(format!(
            "K_play must be {}x{}, got {}x{}",
            d,
            n,
            k_play.nrows(),
            k_play.ncols()
        )));
    }
    if t_len == 0 {
        return Err(Error::Parameter("rollout length must be >= 1".into()));
    }

    let mut x = match start {
        InitialState::Continue(x0) => {
            if x0.len() != n {
                return Err(Error::Dimension("continuation state has wrong dimension".into()));
            }
            x0
        }
        InitialState::Fresh => {
            if sys.sigma0.amax() == 0.0 {
                DVector::zeros(n)
            } else {
                psd_sqrt(&sys.sigma0) * gaussian_vector(rng, n, 1.0)
            }
        }
    };

    let mut traj = Trajectory {
        n,
        d,
        states: Vec::with_capacity((t_len + 1) * n),
        inputs: Vec::with_capacity(t_len * d),
        etas: Vec::with_capacity(t_len * d),
        costs: Vec::with_capacity(t_len),
        k_play: k_play.clone(),
        sigma_eta,
    };

    for t in 0..t_len {
        let eta = gaussian_vector(rng, d, sigma_eta);
        let w = gaussian_vector(rng, n, sys.sigma_w);
        let u = k_play * &x + &eta;
        let c = (x.transpose() * &cost.s * &x)[(0, 0)] + (u.transpose() * &cost.r * &u)[(0, 0)];

        traj.states.extend_from_slice(x.as_slice());
        traj.inputs.extend_from_slice(u.as_slice());
        traj.etas.extend_from_slice(eta.as_slice());
        traj.costs.push(c);

        x = &sys.a * &x + &sys.b * &u + w;
        if x.norm() > divergence_threshold {
            return Err(Error::Divergence { step: t, norm: x.norm() });
        }
    }
    traj.states.extend_from_slice(x.as_slice());
    Ok(traj)
}

/// Per-step costs and their sum.
pub fn trajectory_cost(traj: &Trajectory) -> (&[f64], f64) {
    (traj.costs(), traj.costs().iter().sum())
}
