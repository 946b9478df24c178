//! Semantic channel equalization between two independently learned agent
//! languages on the scout-and-treasure grid world.
//!
//! The crate is organised bottom-up:
//!
//! - [`gridworld`]: the task environment and its exact optimal action values.
//! - [`language`]: encoder table + stochastic MLP decoder, trained with REINFORCE.
//! - [`channel`]: AWGN channel calibrated against symbol power.
//! - [`semantics`]: decoder decision regions (atoms), sample clouds and the
//!   information-transfer tensor.
//! - [`codebook`]: closed-form Gaussian optimal-transport maps between atoms.
//! - [`equalizer`]: the semantic and effectiveness codebook-selection policies.
//! - [`harness`]: episode runner, evaluation, SNR sweeps and partition rasters.
//! - [`cli`]: the command-line front end used by the `semeq` binary.

pub mod channel;
pub mod cli;
pub mod codebook;
pub mod equalizer;
pub mod error;
pub mod gridworld;
pub mod harness;
pub mod language;
pub mod rng;
pub mod semantics;

pub use error::{Error, Result};

/// A point of the two-dimensional semantic space.
pub type Symbol = nalgebra::Vector2<f64>;

/// Number of actions, and therefore atoms per partition.
pub const NUM_ACTIONS: usize = 4;
