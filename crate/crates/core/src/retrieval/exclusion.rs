use serde::{Deserialize, Serialize};

use super::index::{InvertedIndex, RankedList};
use crate::biencoder::{BiEncoderModel, Modality};
use crate::caption::{mean_pool, tokenize};
use crate::embedding::{DenseEmbeddingSet, SparseEmbeddingSet, SparseVector};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExclusionParams {
    /// Images retrieved per label during dimension extraction.
    pub k_extract: usize,
    /// Percentage of aggregate magnitude the extracted dimensions must cover.
    pub th: f64,
    pub k_return: usize,
}

impl Default for ExclusionParams {
    fn default() -> Self {
        ExclusionParams {
            k_extract: 10,
            th: 80.0,
            k_return: 10,
        }
    }
}

impl ExclusionParams {
    pub fn validate(&self) -> Result<()> {
        if self.k_extract == 0 || self.k_return == 0 {
            return Err(Error::Invalid(
                "retrieval.k_extract and retrieval.k_return must be positive".into(),
            ));
        }
        if !(self.th > 0.0 && self.th <= 100.0) {
            return Err(Error::Invalid("retrieval.th must lie in (0, 100]".into()));
        }
        Ok(())
    }
}

/// A set of latent dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimSet {
    dim: usize,
    members: Vec<u32>,
}

impl DimSet {
    pub fn empty(dim: usize) -> Self {
        DimSet {
            dim,
            members: Vec::new(),
        }
    }

    pub fn from_indices(dim: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut members = Vec::new();
        for i in indices {
            if i >= dim {
                return Err(Error::Invalid(format!(
                    "dimension {i} out of range for {dim}"
                )));
            }
            members.push(i as u32);
        }
        members.sort_unstable();
        members.dedup();
        Ok(DimSet { dim, members })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn members(&self) -> &[u32] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&(i as u32)).is_ok()
    }

    pub fn is_subset(&self, other: &DimSet) -> bool {
        self.members.iter().all(|&m| other.contains(m as usize))
    }

    pub fn difference(&self, other: &DimSet) -> DimSet {
        DimSet {
            dim: self.dim,
            members: self
                .members
                .iter()
                .copied()
                .filter(|&m| !other.contains(m as usize))
                .collect(),
        }
    }
}

/// Smallest prefix of dimensions, ordered by aggregate descending (ties to
/// the lower index), whose cumulative aggregate reaches `th`% of the total.
/// Only dimensions with a positive aggregate are eligible.
pub fn select_by_mass(aggregate: &[f64], th: f64) -> DimSet {
    let mut order: Vec<usize> = (0..aggregate.len())
        .filter(|&i| aggregate[i] > 0.0)
        .collect();
    order.sort_by(|&a, &b| aggregate[b].total_cmp(&aggregate[a]).then(a.cmp(&b)));
    let total: f64 = order.iter().map(|&i| aggregate[i]).sum();
    let target = th / 100.0 * total;
    // Guards against cumulative rounding falling a few ulps short of the target.
    let slack = total * 1e-12;
    let mut cumulative = 0.0;
    let mut members = Vec::new();
    for i in order {
        if cumulative + slack >= target && !members.is_empty() {
            break;
        }
        cumulative += aggregate[i];
        members.push(i as u32);
    }
    members.sort_unstable();
    DimSet {
        dim: aggregate.len(),
        members,
    }
}

/// Dimensions covering `th`% of the mean magnitude of the top `k_extract`
/// records retrieved for `query`.
pub fn extract_dims(
    index: &InvertedIndex,
    query: &SparseVector,
    params: &ExclusionParams,
) -> Result<DimSet> {
    let ranked = index.search(query, params.k_extract)?;
    if ranked.is_empty() {
        return Ok(DimSet::empty(index.dim()));
    }
    let mut aggregate = vec![0.0f64; index.dim()];
    for (id, _) in &ranked.entries {
        let ord = index.ordinal(id).expect("ranked id comes from the index");
        for (i, v) in index.vector(ord).iter() {
            aggregate[i] += v as f64;
        }
    }
    let n = ranked.len() as f64;
    aggregate.iter_mut().for_each(|a| *a /= n);
    Ok(select_by_mass(&aggregate, params.th))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExclusionResult {
    pub ranked: RankedList,
    /// The included dimensions were entirely removed by the excluded ones.
    pub empty_remainder: bool,
}

/// Ranks records by their summed values over `include \ exclude`.
pub fn exclusion_search(
    index: &InvertedIndex,
    include: &DimSet,
    exclude: &DimSet,
    k: usize,
) -> Result<ExclusionResult> {
    for set in [include, exclude] {
        if set.dim() != index.dim() {
            return Err(Error::DimMismatch {
                expected: index.dim(),
                found: set.dim(),
            });
        }
    }
    let remainder = include.difference(exclude);
    if remainder.is_empty() {
        return Ok(ExclusionResult {
            ranked: RankedList::empty(k),
            empty_remainder: true,
        });
    }
    let ranked = index.accumulate(remainder.members().iter().map(|&d| (d as usize, 1.0)), k);
    Ok(ExclusionResult {
        ranked,
        empty_remainder: false,
    })
}

/// Everything needed to turn a label into a sparse text-side query.
#[derive(Debug, Clone, Copy)]
pub struct QueryEncoder<'a> {
    pub model: &'a BiEncoderModel,
    /// Dense text embeddings keyed by label.
    pub label_embeddings: &'a DenseEmbeddingSet,
    /// Sparse word embeddings used as the mask guide.
    pub words: Option<&'a SparseEmbeddingSet>,
    pub top_t: usize,
    pub eps_active: f64,
}

impl QueryEncoder<'_> {
    /// Text-side sparse representation of a label. The guide is the mean of
    /// the label's in-vocabulary word embeddings; a label with none falls
    /// back to the top-`t` mask.
    pub fn label_query_vector(&self, label: &str) -> Result<SparseVector> {
        let dense = self
            .label_embeddings
            .get(label)
            .ok_or_else(|| Error::MissingId(label.to_owned()))?;
        let guide = match self.words {
            Some(words) => {
                let (pooled, _) = mean_pool(&tokenize(label), words);
                (!pooled.is_empty()).then_some(pooled)
            }
            None => None,
        };
        self.model.sparse_representation(
            Modality::Text,
            &linalg::to_f64(dense),
            guide.as_ref(),
            self.top_t,
            self.eps_active,
        )
    }
}

/// "include but not exclude": extract both dimension sets, subtract, rank.
pub fn exclude_pipeline(
    index: &InvertedIndex,
    include: &str,
    exclude: &str,
    params: &ExclusionParams,
    encoder: &QueryEncoder<'_>,
) -> Result<ExclusionResult> {
    params.validate()?;
    let d1 = extract_dims(index, &encoder.label_query_vector(include)?, params)?;
    let d2 = extract_dims(index, &encoder.label_query_vector(exclude)?, params)?;
    exclusion_search(index, &d1, &d2, params.k_return)
}
