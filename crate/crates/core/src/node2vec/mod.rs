//! Structural k-mer embeddings: weighted second-order random walks over the
//! k-mer graph, then skip-gram with negative sampling on the walk corpus.

mod skipgram;
mod walk;

pub use skipgram::{
    skipgram_loss_and_grad, train_skipgram, SkipGramConfig, SkipGramGrads, SkipGramModel,
    SkipGramStats,
};
pub use walk::{generate_walks, read_walks, write_walks, WalkConfig};
