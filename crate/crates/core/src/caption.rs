//! Caption embeddings as the mean of sparse word embeddings.

use std::collections::HashMap;

use crate::embedding::{SparseEmbeddingSet, SparseVector};
use crate::io::CaptionRecord;

/// Lowercases, splits on Unicode whitespace and trims ASCII punctuation from
/// both ends of each piece. Inner punctuation is kept.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|piece| {
            piece
                .trim_matches(|c: char| c.is_ascii_punctuation())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptionEmbedding {
    pub image_id: String,
    pub caption_index: usize,
    pub embedding: SparseVector,
    pub oov_count: usize,
    pub token_count: usize,
}

impl CaptionEmbedding {
    /// No token of the caption was in the vocabulary.
    pub fn all_oov(&self) -> bool {
        self.oov_count == self.token_count
    }

    /// Key used in caption SEMB files: `imageid#captionindex`.
    pub fn key(&self) -> String {
        caption_key(&self.image_id, self.caption_index)
    }
}

pub fn caption_key(image_id: &str, caption_index: usize) -> String {
    format!("{image_id}#{caption_index}")
}

/// Mean of the in-vocabulary word vectors, the divisor being the number of
/// tokens found. Returns the pooled vector and the out-of-vocabulary count.
/// Tokens are accumulated in sorted order so that any permutation of the
/// caption gives bit-identical output.
pub fn mean_pool(tokens: &[String], words: &SparseEmbeddingSet) -> (SparseVector, usize) {
    let mut acc = vec![0.0f64; words.dim()];
    let mut found = 0usize;
    let mut sorted: Vec<&String> = tokens.iter().collect();
    sorted.sort_unstable();
    for token in sorted {
        if let Some(z) = words.get(token) {
            found += 1;
            for (i, v) in z.iter() {
                acc[i] += v as f64;
            }
        }
    }
    let oov = tokens.len() - found;
    if found == 0 {
        return (SparseVector::empty(words.dim()), oov);
    }
    let n = found as f64;
    acc.iter_mut().for_each(|v| *v /= n);
    (SparseVector::from_dense(&acc), oov)
}

pub fn caption_embedding(
    image_id: &str,
    caption_index: usize,
    tokens: &[String],
    words: &SparseEmbeddingSet,
) -> CaptionEmbedding {
    let (embedding, oov_count) = mean_pool(tokens, words);
    CaptionEmbedding {
        image_id: image_id.to_owned(),
        caption_index,
        embedding,
        oov_count,
        token_count: tokens.len(),
    }
}

/// One embedding per caption, in input order. Caption indices count captions
/// of the same image in the order they appear.
pub fn embed_captions(
    captions: &[CaptionRecord],
    words: &SparseEmbeddingSet,
) -> Vec<CaptionEmbedding> {
    let mut next_index: HashMap<&str, usize> = HashMap::new();
    captions
        .iter()
        .map(|rec| {
            let slot = next_index.entry(rec.image_id.as_str()).or_insert(0);
            let idx = *slot;
            *slot += 1;
            caption_embedding(&rec.image_id, idx, &tokenize(&rec.caption), words)
        })
        .collect()
}

/// Collects caption embeddings into a sparse set keyed `imageid#k`.
pub fn to_sparse_set(
    dim: usize,
    embeddings: &[CaptionEmbedding],
) -> crate::Result<SparseEmbeddingSet> {
    let mut set = SparseEmbeddingSet::new(dim);
    for e in embeddings {
        set.push(e.key(), e.embedding.clone())?;
    }
    Ok(set)
}
