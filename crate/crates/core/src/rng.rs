//! Random stream derivation.
//!
//! Every stream is a ChaCha8 generator (a counter-based cipher stream) whose
//! 256-bit key is the SHA-256 digest of `(master_seed, purpose, label,
//! index)`. Streams for different purposes, policies or episodes never share
//! state, so the order in which episodes execute cannot change any draw, and
//! adding a policy to an experiment leaves every existing stream untouched.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha8Rng;

const DOMAIN: &[u8] = b"postprice/stream/v1";

/// What a stream is used for. Part of the key, so the environment of episode
/// `e` and the policy of episode `e` are independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Buyer valuations / synthetic rewards; keyed without the policy label so
    /// every policy sees the same environment for a given episode.
    Environment,
    /// Internal randomness of a policy (Thompson draws, epsilon coin).
    Policy,
    /// Arm-set construction.
    Arms,
}

impl Purpose {
    fn tag(self) -> &'static [u8] {
        match self {
            Purpose::Environment => b"env",
            Purpose::Policy => b"policy",
            Purpose::Arms => b"arms",
        }
    }
}

/// Derives the stream for `(master_seed, purpose, label, index)`.
pub fn derive(master_seed: u64, purpose: Purpose, label: &str, index: u64) -> Stream {
    let mut h = Sha256::new();
    h.update(DOMAIN);
    h.update(master_seed.to_le_bytes());
    h.update(purpose.tag());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    let key: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(key)
}

/// Environment stream for one episode; shared by all policies.
pub fn environment(master_seed: u64, episode: u64) -> Stream {
    derive(master_seed, Purpose::Environment, "", episode)
}

/// Policy-private stream for one episode.
pub fn policy(master_seed: u64, policy_label: &str, episode: u64) -> Stream {
    derive(master_seed, Purpose::Policy, policy_label, episode)
}
