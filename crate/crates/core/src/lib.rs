//! Unsupervised bilingual lexicon induction.
//!
//! Two monolingual embedding spaces are normalized, optionally transformed
//! (PCA, similarity-order transform, fusion), seeded with an unsupervised
//! dictionary, and aligned by iterative Procrustes self-learning with CSLS
//! retrieval. Static alignments can be refined with contextual vectors via
//! small spring networks, and results are scored with precision@k.

pub mod cscbli;
pub mod dictionary;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod fixtures;
pub mod init;
pub mod linalg;
pub mod matrix_io;
pub mod preprocess;
pub mod retrieval;
pub mod selflearn;
mod util;

pub use dictionary::Dictionary;
pub use embeddings::{EmbeddingMatrix, FrequencyTable, Vocabulary};
pub use error::{Error, Result};
pub use retrieval::Retrieval;
pub use util::{derive_seed, stable_hash};
