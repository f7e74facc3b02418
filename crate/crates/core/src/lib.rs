//! Finite-horizon stochastic optimal control under a joint chance constraint.
//!
//! Given a finite MDP with a safe set `A`, [`dual::solve`] finds a policy that
//! minimizes expected cost subject to `P(x_k ∈ A for all k) ≥ α`. The joint
//! constraint is made tractable by augmenting the state with a binary flag
//! ([`augment`]), relaxing it with a multiplier `λ` and solving each relaxed
//! problem by dynamic programming ([`dp`]). Bisection on `λ` brackets the
//! optimum between two deterministic policies whose randomized mixture is
//! feasible, and the bracket width gives a certificate `δ` on suboptimality.
//!
//! [`sim`] provides Monte-Carlo rollouts and a brute-force oracle for small
//! models; [`model`] builds gridded models of continuous systems.

pub mod augment;
pub mod cli;
pub mod dp;
pub mod dual;
pub mod error;
pub mod model;
pub mod numfmt;
pub mod sim;
pub mod util;

pub use error::{Error, Result};
