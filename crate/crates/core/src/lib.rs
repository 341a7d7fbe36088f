//! Online posted-price mechanisms for heterogeneous edge resources, framed as
//! a stochastic multi-armed bandit.
//!
//! The platform sells `M x N` products (VM type `i` at edge node `j`). Each
//! round it posts one price vector drawn from a fixed, discretized arm set; the
//! arriving buyer takes every product whose private valuation is at least the
//! posted price, and the platform collects the (scaled) payment as reward.
//!
//! - [`market`]: products, price levels, arm construction, buyer valuations and
//!   the purchase / settlement dynamics of one round.
//! - [`policies`]: KL-UCB, MOSS, UCB, Thompson Sampling and epsilon-greedy as
//!   interchangeable state machines, including the KL-UCB root finder.
//! - [`oracle`]: ground-truth arm means, gaps and pseudo-regret.
//! - [`runner`]: seeded, parallel multi-episode experiments and their metrics.
//! - [`rng`]: counter-based random streams keyed by (seed, purpose, episode).

pub mod error;
pub mod market;
pub mod oracle;
pub mod policies;
pub mod quadrature;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
