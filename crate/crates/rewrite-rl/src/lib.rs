//! A self-contained conversational query-rewriting lab.
//!
//! The crate covers the full loop of a small retrieval-augmented dialogue
//! system on a synthetic corpus:
//!
//! - [`corpus`] — data model for multi-turn dialogues plus a deterministic
//!   synthetic generator and JSONL persistence.
//! - [`embedding`] / [`retrieval`] — a signed feature-hashing text embedder
//!   and exact top-l cosine search with MRR evaluation.
//! - [`metrics`] — ROUGE-1/2/L, BLEU, METEOR-lite and the four feedback
//!   metrics used to score rewrites.
//! - [`gensim`] — a deterministic extractive answer generator.
//! - [`nn`] — a minimal reverse-mode autodiff engine, a tiny attention
//!   seq2seq rewriter policy, and checkpointing.
//! - [`preference`] — preference-pair construction and Bradley-Terry reward
//!   model training.
//! - [`ppo`] — PPO training of the rewriter against a weighted multi-aspect
//!   reward with a KL penalty toward the frozen initialized policy.
//! - [`harness`] — configuration, pipeline commands, and evaluation reports
//!   backing the `rewrite-rl` binary.
//!
//! Every stage is seeded and single-threaded per call, so identical configs
//! reproduce identical artifacts byte for byte. See the `examples/` directory
//! for one runnable walkthrough per capability.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub mod corpus;
pub mod embedding;
pub mod gensim;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod ppo;
pub mod preference;
pub mod retrieval;
pub mod text;

/// Deterministic RNG for one work item of one pipeline stage.
///
/// Each stage draws from its own stream derived from `(seed, stage, index)`,
/// so adding a stage or reordering work inside one never perturbs the
/// randomness seen by another.
pub fn stage_rng(seed: u64, stage: &str, index: u64) -> ChaCha8Rng {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.rotate_left(17);
    for b in stage.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    ChaCha8Rng::seed_from_u64(h)
}

pub use corpus::{DialogueExample, DialogueTurn, Document, SynthConfig};
pub use embedding::{EmbeddingVector, HashingEmbedder};
pub use gensim::GenerationInput;
pub use harness::{Command, HarnessError, RunConfig};
pub use metrics::{MetricValues, OverlapScore, RougeVariant};
pub use nn::{Adam, ParamStore, RewriterPolicy, ScorerModel, Vocab};
pub use ppo::{PpoConfig, PpoStepStats, PpoTrainer, RewardBundle, Rollout};
pub use preference::{PreferencePair, PreferenceSets, RewardMetric, RewardModels, RewriteScorer};
pub use retrieval::{RankedList, RetrievalIndex};
