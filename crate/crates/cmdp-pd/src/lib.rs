//! Primal-dual proximal optimization of deterministic policies for
//! constrained MDPs with continuous state-action spaces.
//!
//! The library implements a regularized-Lagrangian saddle-point iteration:
//! the policy takes a quadratic-regularized ascent step on its advantage
//! function, the dual variable a quadratic-regularized descent step on the
//! constraint value. Three drivers share that scheme:
//!
//! * [`pgpd::run_exact_pd`] — closed-form values on linear-quadratic
//!   instances ([`lq`]);
//! * [`pgpd::run_approx_pd`] — a linear model over quadratic features
//!   ([`features`]) fitted to the augmented action-value function, with
//!   exact or sampled ([`rollout`]) regression targets;
//! * [`pgpd::run_dual_baseline`] — greedy dual descent without the
//!   proximal and regularization structure, for comparison.
//!
//! [`envs`] provides the two benchmark simulators (double-integrator
//! navigation, discretized fluid velocity control), [`harness`] the
//! experiment configs, presets, CSV output and multi-seed execution, and
//! [`oracles`] slow independent reference computations used by the tests.
//!
//! See the crate examples for one runnable entry point per capability.

pub mod cmdp;
pub mod envs;
pub mod error;
pub mod features;
pub mod harness;
pub mod lq;
pub mod oracle_suites;
pub mod oracles;
pub mod pgpd;
pub mod rng;
pub mod rollout;

pub use error::{Error, Result};
