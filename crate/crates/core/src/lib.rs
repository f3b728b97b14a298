//! Least-squares value iteration over norm-constrained ReLU networks.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every algorithmic
//! piece of the laboratory:
//!
//! * [`mdp`]: episodic MDPs on the unit box, synthetic generators with a
//!   tunable smoothness knob, and a grid modulus of smoothness.
//! * [`oracle`]: exact finite-horizon dynamic programming on tabular or
//!   discretized MDPs.
//! * [`approx`]: two-layer networks under an l1 path-norm budget, sparse
//!   deep ReLU networks, projected least-squares fitting, architecture
//!   planners and the approximation / Rademacher probes.
//! * [`replay`]: per-step replay memory and aligned mini-batch sampling.
//! * [`agent`]: the episode loop (backward fitting, epsilon-greedy rollout).
//! * [`regret`]: regret ledger, TD errors, the regret decomposition and its
//!   martingale terms, occupancy and generalization diagnostics, slope fits.
//!
//! File formats, configuration and the command line live in `nvi-lab`.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod agent;
pub mod approx;
pub mod error;
pub mod math;
pub mod mdp;
pub mod oracle;
pub mod regret;
pub mod replay;

pub use error::{Error, Result};

/// Seeded generator used throughout the crate.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Builds a [`SimRng`] from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> SimRng {
    use rand::SeedableRng;
    SimRng::seed_from_u64(seed)
}
