//! Average-cost optimal tracking for deterministic discrete-time linear
//! systems.
//!
//! The crate is organised bottom-up:
//!
//! * [`matnum`]: dense LU / Cholesky / rank / eigenvalue kernel.
//! * [`plant`]: the plant, controllability and observability checks, and the
//!   steady-state target `(x_ss, u_ss)`.
//! * [`criteria`]: stage costs and the average-cost, surrogate and quadratic
//!   indices.
//! * [`riccati`]: DARE solver and LQR gains.
//! * [`qp`] and [`mpc`]: slack-reformulated receding-horizon controller and
//!   the QP solver behind it.
//! * [`scalar_dp`]: grid value iteration and closed forms for the scalar
//!   example.
//! * [`harness`]: closed-loop rollouts, controller comparison and CSV export.

pub mod criteria;
pub mod error;
pub mod harness;
pub mod matnum;
pub mod mpc;
pub mod plant;
pub mod qp;
pub mod riccati;
pub mod scalar_dp;

pub use criteria::StageContext;
pub use error::{Error, Result};
pub use harness::{Controller, Horizon, Trajectory};
pub use matnum::Matrix;
pub use mpc::MpcConfig;
pub use plant::{LinearSystem, LinearTermConvention, SteadyState, TrackingProblem};
