//! Neural building blocks: autodiff tape, parameter store, vocabulary, the
//! rewriter and scorer architectures, supervised training, checkpoints.

pub mod checkpoint;
pub mod graph;
pub mod model;
pub mod params;
pub mod train;
pub mod vocab;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, ModelKind};
pub use graph::{Graph, NodeId};
pub use model::{sigmoid, DecodeResult, ModelConfig, RewriterPolicy, ScorerModel};
pub use params::{clip_grad_norm, Adam, Gradients, Init, PTensor, ParamStore, Real};
pub use train::{init_train, rewrite_training_pair, InitTrainConfig};
pub use vocab::{Vocab, BOS, CLS, EOS, PAD, SEP, UNK};
