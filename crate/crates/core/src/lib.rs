//! Transmission control for real-time remote estimation over HARQ links.
//!
//! The crate is organised bottom-up:
//!
//! * [`lti`]: the LTI process, steady-state Kalman covariance and the
//!   age-of-information to MSE cost map.
//! * [`fbl`]: finite-blocklength normal-approximation error rates for
//!   Chase-combining and incremental-redundancy HARQ, plus the SINRs of
//!   non-orthogonal retransmission.
//! * [`mdp`]: a scheme-agnostic finite MDP with average-cost solvers.
//! * [`schemes`]: builders that turn a HARQ scheme configuration into a
//!   [`mdp::FiniteMdp`].
//! * [`eval`]: seeded Monte Carlo evaluation of a policy.
//! * [`pareto`]: epsilon-constraint scans over the retransmission
//!   parameter with Pareto-front extraction.
//! * [`config`], [`output`], [`reproduce`], [`cli`]: the command-line
//!   driver.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod fbl;
pub mod lti;
pub mod mdp;
pub mod output;
pub mod pareto;
pub mod reproduce;
pub mod schemes;

pub use error::{Error, Result};
