//! Graph-contextualized knowledge representation learning.
//!
//! Knowledge-graph subgraphs are converted into node sequences (entities plus
//! one node per relation occurrence) and encoded by a Transformer whose
//! attention is masked by the subgraph adjacency. Encoder outputs are scored
//! with a translation energy and trained with a margin loss. The crate also
//! carries a TransE baseline, link-prediction metrics and a forward maximum
//! matching entity linker.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, checkpoints and
//! the command-line front end live in the `kgformer` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod embedding;
pub mod error;
pub mod eval;
pub mod graph;
pub mod kgformer;
pub mod linker;
pub mod numerics;
pub mod sampler;
pub mod transe;

pub use embedding::{EmbeddingTable, Norm};
pub use error::{Error, Result};
pub use graph::{DegreeStats, EntityId, IngestReport, KnowledgeGraph, RelationId, Triple};
pub use sampler::{Corruption, Fanout, Side, Subgraph, TrainingSample};

/// Deterministic generator used everywhere a seed is accepted.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Builds the crate's generator from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}
