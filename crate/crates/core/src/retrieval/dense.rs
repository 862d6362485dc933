//! Dense cosine retrieval and the average-embedding exclusion baseline.

use super::exclusion::ExclusionParams;
use super::index::{top_k, RankedList};
use crate::embedding::DenseEmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg;

/// Top-`k` records by cosine similarity. Zero-norm records are skipped.
pub fn dense_search(set: &DenseEmbeddingSet, query: &[f64], k: usize) -> Result<RankedList> {
    if query.len() != set.dim() {
        return Err(Error::DimMismatch {
            expected: set.dim(),
            found: query.len(),
        });
    }
    let qn = linalg::norm(query);
    if qn == 0.0 {
        return Err(Error::Invalid("zero-norm query".into()));
    }
    let mut candidates = Vec::with_capacity(set.len());
    for (id, v) in set.iter() {
        let v = linalg::to_f64(v);
        let vn = linalg::norm(&v);
        if vn == 0.0 {
            continue;
        }
        candidates.push((id.to_owned(), linalg::dot(query, &v) / (qn * vn)));
    }
    Ok(top_k(candidates, k))
}

fn mean_of(set: &DenseEmbeddingSet, ids: &[&str]) -> Result<Vec<f64>> {
    if ids.is_empty() {
        return Err(Error::Empty("id list"));
    }
    let mut acc = vec![0.0; set.dim()];
    for id in ids {
        let v = set
            .get(id)
            .ok_or_else(|| Error::MissingId((*id).to_owned()))?;
        for (a, &x) in acc.iter_mut().zip(v) {
            *a += x as f64;
        }
    }
    let n = ids.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Mean of the `include` vectors minus the mean of the `exclude` vectors.
pub fn avg_emb_query(
    set: &DenseEmbeddingSet,
    include: &[&str],
    exclude: &[&str],
) -> Result<Vec<f64>> {
    let a = mean_of(set, include)?;
    let b = mean_of(set, exclude)?;
    Ok(a.iter().zip(&b).map(|(x, y)| x - y).collect())
}

/// Dense exclusion baseline: each label's population is the top `k_extract`
/// images retrieved with its dense label embedding; the query is the
/// difference of the two population means.
pub fn avg_emb_pipeline(
    images: &DenseEmbeddingSet,
    label_embeddings: &DenseEmbeddingSet,
    include: &str,
    exclude: &str,
    params: &ExclusionParams,
) -> Result<RankedList> {
    params.validate()?;
    let population = |label: &str| -> Result<RankedList> {
        let q = label_embeddings
            .get(label)
            .ok_or_else(|| Error::MissingId(label.to_owned()))?;
        dense_search(images, &linalg::to_f64(q), params.k_extract)
    };
    let a = population(include)?;
    let b = population(exclude)?;
    if a.is_empty() || b.is_empty() {
        return Ok(RankedList::empty(params.k_return));
    }
    let q = avg_emb_query(images, &a.ids(), &b.ids())?;
    if linalg::norm(&q) == 0.0 {
        return Ok(RankedList::empty(params.k_return));
    }
    dense_search(images, &q, params.k_return)
}
