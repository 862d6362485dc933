use std::cmp::Ordering;
use std::collections::HashMap;

use crate::embedding::{SparseEmbeddingSet, SparseVector};
use crate::error::{Error, Result};

/// Ranked `(id, score)` pairs: score descending, then id ascending.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedList {
    pub cutoff: usize,
    pub entries: Vec<(String, f64)>,
}

impl RankedList {
    pub fn empty(cutoff: usize) -> Self {
        RankedList {
            cutoff,
            entries: Vec::new(),
        }
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|(id, _)| id.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// The ordering every ranked output uses.
pub fn rank_order(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

/// Sorts candidates under the tie rule and keeps the first `k`.
pub fn top_k(mut candidates: Vec<(String, f64)>, k: usize) -> RankedList {
    candidates.sort_by(rank_order);
    candidates.truncate(k);
    RankedList {
        cutoff: k,
        entries: candidates,
    }
}

/// Per-dimension posting lists over a fixed set of sparse records.
#[derive(Debug, Clone)]
pub struct InvertedIndex {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<SparseVector>,
    norms: Vec<f64>,
    postings: Vec<Vec<(u32, f32)>>,
    lookup: HashMap<String, usize>,
}

impl InvertedIndex {
    pub fn build(set: &SparseEmbeddingSet) -> Result<Self> {
        let dim = set.dim();
        let mut postings: Vec<Vec<(u32, f32)>> = vec![Vec::new(); dim];
        let mut ids = Vec::with_capacity(set.len());
        let mut vectors = Vec::with_capacity(set.len());
        let mut lookup = HashMap::with_capacity(set.len());
        for (ordinal, (id, v)) in set.iter().enumerate() {
            if lookup.insert(id.to_owned(), ordinal).is_some() {
                return Err(Error::DuplicateId(id.to_owned()));
            }
            if v.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: v.dim(),
                });
            }
            for (i, x) in v.iter() {
                postings[i].push((ordinal as u32, x));
            }
            ids.push(id.to_owned());
            vectors.push(v.clone());
        }
        let norms = vectors.iter().map(SparseVector::norm).collect();
        Ok(InvertedIndex {
            dim,
            ids,
            vectors,
            norms,
            postings,
            lookup,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn posting(&self, dim: usize) -> &[(u32, f32)] {
        &self.postings[dim]
    }

    pub fn id(&self, ordinal: usize) -> &str {
        &self.ids[ordinal]
    }

    pub fn vector(&self, ordinal: usize) -> &SparseVector {
        &self.vectors[ordinal]
    }

    pub fn norm(&self, ordinal: usize) -> f64 {
        self.norms[ordinal]
    }

    pub fn ordinal(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    /// Accumulates `weight(dim) · value` over the given dimensions (in
    /// increasing order) and ranks the records with a positive score.
    pub(crate) fn accumulate(
        &self,
        dims: impl Iterator<Item = (usize, f64)>,
        k: usize,
    ) -> RankedList {
        let mut scores = vec![0.0f64; self.ids.len()];
        let mut touched = vec![false; self.ids.len()];
        for (d, w) in dims {
            for &(ord, v) in &self.postings[d] {
                scores[ord as usize] += w * v as f64;
                touched[ord as usize] = true;
            }
        }
        let candidates = scores
            .iter()
            .zip(&touched)
            .enumerate()
            .filter(|(_, (&s, &t))| t && s > 0.0)
            .map(|(ord, (&s, _))| (self.ids[ord].clone(), s))
            .collect();
        top_k(candidates, k)
    }

    /// Top-`k` records by dot product with `query`. Zero scores are dropped.
    pub fn search(&self, query: &SparseVector, k: usize) -> Result<RankedList> {
        if query.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: query.dim(),
            });
        }
        Ok(self.accumulate(query.iter().map(|(i, v)| (i, v as f64)), k))
    }
}
