//! In-memory embedding containers shared by every stage of the pipeline.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// A non-negative sparse vector stored as strictly increasing `(index, value)` pairs.
///
/// Values are 32-bit so that what is held in memory is exactly what the
/// binary formats store.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<f32>,
}

impl SparseVector {
    pub fn empty(dim: usize) -> Self {
        SparseVector {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a vector from explicit entries, checking every invariant.
    pub fn new(dim: usize, entries: Vec<(u32, f32)>) -> Result<Self> {
        let (indices, values): (Vec<u32>, Vec<f32>) = entries.into_iter().unzip();
        let v = SparseVector {
            dim,
            indices,
            values,
        };
        v.validate()?;
        Ok(v)
    }

    /// Keeps the strictly positive entries of a dense vector.
    ///
    /// Entries whose 32-bit rounding is zero are dropped as well.
    pub fn from_dense(dense: &[f64]) -> Self {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (i, &x) in dense.iter().enumerate() {
            let v = x as f32;
            if v > 0.0 {
                indices.push(i as u32);
                values.push(v);
            }
        }
        SparseVector {
            dim: dense.len(),
            indices,
            values,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Invalid(
                "sparse vector dimension must be positive".into(),
            ));
        }
        if self.indices.len() != self.values.len() {
            return Err(Error::Invalid("index/value length mismatch".into()));
        }
        if self.indices.len() > self.dim {
            return Err(Error::Invalid("more entries than dimensions".into()));
        }
        for w in self.indices.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Invalid("indices not strictly increasing".into()));
            }
        }
        if let Some(&last) = self.indices.last() {
            if last as usize >= self.dim {
                return Err(Error::Invalid(format!(
                    "index {last} out of range for dim {}",
                    self.dim
                )));
            }
        }
        for &v in &self.values {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Invalid(format!(
                    "value {v} is not strictly positive and finite"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f32)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn get(&self, index: usize) -> f32 {
        match self.indices.binary_search(&(index as u32)) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v as f64;
        }
        out
    }

    /// Dot product accumulated in increasing index order.
    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut a, mut b) = (0, 0);
        let mut acc = 0.0f64;
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[a] as f64 * other.values[b] as f64;
                    a += 1;
                    b += 1;
                }
            }
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_value(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }
}

/// Identifier-keyed dense vectors of a shared dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseEmbeddingSet {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    lookup: HashMap<String, usize>,
}

impl DenseEmbeddingSet {
    pub fn new(dim: usize) -> Self {
        DenseEmbeddingSet {
            dim,
            ids: Vec::new(),
            data: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    pub fn push(&mut self, id: impl Into<String>, vector: &[f32]) -> Result<()> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::Invalid("empty id".into()));
        }
        if vector.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                term: "dense vector",
            });
        }
        if self.lookup.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.lookup.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(vector);
        Ok(())
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

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, ordinal: usize) -> &[f32] {
        &self.data[ordinal * self.dim..(ordinal + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.lookup.get(id).map(|&o| self.vector(o))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .enumerate()
            .map(move |(o, id)| (id.as_str(), self.vector(o)))
    }
}

/// Identifier-keyed sparse vectors of a shared dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseEmbeddingSet {
    dim: usize,
    records: Vec<(String, SparseVector)>,
    lookup: HashMap<String, usize>,
}

impl SparseEmbeddingSet {
    pub fn new(dim: usize) -> Self {
        SparseEmbeddingSet {
            dim,
            records: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    pub fn push(&mut self, id: impl Into<String>, vector: SparseVector) -> Result<()> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::Invalid("empty id".into()));
        }
        if vector.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: vector.dim(),
            });
        }
        if self.lookup.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.lookup.insert(id.clone(), self.records.len());
        self.records.push((id, vector));
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[(String, SparseVector)] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&SparseVector> {
        self.lookup.get(id).map(|&o| &self.records[o].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &SparseVector)> {
        self.records.iter().map(|(id, v)| (id.as_str(), v))
    }

    /// Mean fraction of dimensions that are nonzero across records.
    pub fn mean_density(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let total: usize = self.records.iter().map(|(_, v)| v.nnz()).sum();
        total as f64 / (self.records.len() * self.dim) as f64
    }
}

/// Pretrained word vectors keyed by lowercase token.
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddingTable {
    dim: usize,
    tokens: Vec<String>,
    data: Vec<f32>,
    lookup: HashMap<String, usize>,
    duplicates: usize,
}

impl WordEmbeddingTable {
    pub fn new(dim: usize) -> Self {
        WordEmbeddingTable {
            dim,
            tokens: Vec::new(),
            data: Vec::new(),
            lookup: HashMap::new(),
            duplicates: 0,
        }
    }

    /// Inserts a token, keeping the first occurrence of duplicates.
    ///
    /// Returns `false` when the token was already present.
    pub fn insert(&mut self, token: &str, vector: &[f32]) -> Result<bool> {
        let token = token.to_lowercase();
        if token.is_empty() {
            return Err(Error::Invalid("empty token".into()));
        }
        if vector.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        if self.lookup.contains_key(&token) {
            self.duplicates += 1;
            return Ok(false);
        }
        self.lookup.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.data.extend_from_slice(vector);
        Ok(true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of duplicate lines dropped while loading.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn vector(&self, ordinal: usize) -> &[f32] {
        &self.data[ordinal * self.dim..(ordinal + 1) * self.dim]
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.lookup.get(token).map(|&o| self.vector(o))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.tokens
            .iter()
            .enumerate()
            .map(move |(o, t)| (t.as_str(), self.vector(o)))
    }
}
