//! Sparse disentangled multimodal embeddings and exclusion retrieval.
//!
//! Training runs in three steps: a sparse autoencoder over word vectors
//! ([`sae`]), caption embeddings as means of word latents ([`caption`]), and a
//! masked image/text encoder-decoder pair ([`biencoder`]). [`retrieval`]
//! answers "A but not B" queries by subtracting dimension sets, and [`eval`]
//! scores rankings.

pub mod biencoder;
pub mod caption;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod retrieval;
pub mod sae;

pub use embedding::{DenseEmbeddingSet, SparseEmbeddingSet, SparseVector, WordEmbeddingTable};
pub use error::{Error, Result};
