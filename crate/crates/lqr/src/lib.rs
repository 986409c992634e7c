//! Least-squares policy iteration for the linear quadratic regulator.
//!
//! The crate provides, bottom up:
//!
//! - [`symmat`]: svec/smat vectorization, the symmetric Kronecker operator,
//!   PSD-floor projection, the invariant metric on PD matrices, and
//!   `(tau, rho)` stability certificates;
//! - [`lyapunov`]: discrete Lyapunov and Riccati solvers plus closed-form
//!   value/Q functions, average cost, and steady-state covariance;
//! - [`sim`]: seeded Gaussian rollouts of the plant with state carry-over;
//! - [`lstdq`]: the off-policy LSTD-Q estimator and its diagnostics;
//! - [`policy_iter`]: exact policy iteration, value iteration, and the
//!   sample-based LSPI variants;
//! - [`adaptive`]: the epoch-based online controller with regret accounting;
//! - [`baselines`]: certainty-equivalence control, policy gradients with two
//!   baselines, two-point derivative-free optimization, and projected SGD.
//!
//! Trial-level parallelism lives in [`par`] behind the `parallel` feature
//! (enabled by default); disabling it swaps in a sequential fallback with
//! byte-identical results.

pub mod adaptive;
pub mod baselines;
mod error;
pub mod lstdq;
pub mod lyapunov;
pub mod par;
pub mod policy_iter;
pub mod sim;
pub mod symmat;
pub mod testing;

pub use error::{Error, Result};
