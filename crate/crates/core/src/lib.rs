//! Network inference from node-by-condition measurement tables.
//!
//! The pipeline turns a table of (possibly missing) measurements into node
//! vectors and a sparse backbone network:
//!
//! 1. [`context`] builds per-condition tolerance neighborhoods and samples
//!    biased random walks over them, one corpus of node sequences per run.
//! 2. [`skipgram`] trains a three-layer skip-gram network on the corpus; the
//!    input-matrix rows are the node vectors.
//! 3. [`edges`] ranks node pairs by cosine similarity and selects edges by a
//!    global threshold or by the iterative Rényi-entropy method.
//! 4. [`analysis`] projects vectors with PCA and summarizes the networks.

pub mod analysis;
pub mod artifact;
pub mod context;
pub mod data;
pub mod edges;
pub mod entropy;
pub mod error;
pub mod seed;
pub mod skipgram;
pub mod vectors;

pub use context::{build_context_sets, generate_corpus, ContextSets, Corpus, ToleranceRule, WalkConfig};
pub use data::{generate_synthetic, load_dataset, write_dataset, CsvOptions, NodalDataset, SyntheticSpec};
pub use edges::{build_similarity, gte, rem, EdgeList, RemConfig, SimilarityView, Symmetrization};
pub use entropy::{diversity_index, renyi_entropy, RenyiOrder};
pub use error::{Error, ErrorKind, Result};
pub use skipgram::{train, EmbeddingModel, Objective, TrainConfig};
pub use vectors::NodeVectors;
