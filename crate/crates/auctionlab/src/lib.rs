//! Slot-allocation mechanisms for marketplace search auctions.
//!
//! The crate compares two ways to rank `n` jobs into `n` slots for a seeker:
//! position-unaware generalized first-price ranking on slot-averaged scores,
//! and position-aware maximum-weight bipartite matching. Around that core it
//! provides a Monte Carlo harness for the revenue/relevance tradeoff, a
//! power-law calibrator for the seeker weight, and a tabular discounted MDP
//! for choosing weights dynamically.
//!
//! Start with the `examples/` directory: each example is a runnable tour of
//! one capability. The `auctionlab` binary exposes the same flows as
//! `simulate`, `allocate`, `calibrate`, and `optimize-weights` subcommands.

pub mod allocation;
pub mod calibration;
pub mod cli;
pub mod error;
pub mod mdp;
pub mod metrics;
pub mod score;
pub mod simulation;

pub use error::{Error, Result};
