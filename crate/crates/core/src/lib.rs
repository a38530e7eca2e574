//! Graph neural networks for graphs whose nodes carry heterogeneous, sparse
//! and changing feature sets.
//!
//! Features are lifted into the graph: every distinct feature becomes a
//! *feature node* linked to the graph nodes that carry it, weighted by the
//! stored value ([`graph::AllotropicGraph`]). A three-phase message-passing
//! layer ([`model`]) then moves information feature → node, node ↔ node and
//! node → feature, so the parameter count never depends on how many nodes or
//! features exist.
//!
//! Around the model sit missing-feature baselines ([`imputation`]), task heads
//! and the training protocol ([`tasks`]), and elastic-weight-consolidation
//! training over graph streams ([`continual`]).

pub mod continual;
pub mod error;
pub mod exec;
pub mod graph;
pub mod imputation;
pub mod model;
pub mod synthetic;
pub mod tasks;
pub mod tensor;

pub use error::{Error, Result};
pub use exec::Execution;

/// Deterministic generator used everywhere a seed is accepted.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Builds a [`SeededRng`] from a seed and a stream label.
///
/// Different labels give independent streams for the same user seed, so adding
/// a new random consumer never shifts the draws of an existing one.
pub fn rng_for(seed: u64, stream: &str) -> SeededRng {
    use rand::SeedableRng;
    // FNV-1a over the label, folded into the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    SeededRng::seed_from_u64(seed ^ h.rotate_left(17))
}
