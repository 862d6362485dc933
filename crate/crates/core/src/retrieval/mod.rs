//! Sparse inverted-index search, exclusion retrieval by dimension-set
//! subtraction, and the dense average-embedding baseline.

mod dense;
mod exclusion;
mod index;

pub use dense::{avg_emb_pipeline, avg_emb_query, dense_search};
pub use exclusion::{
    exclude_pipeline, exclusion_search, extract_dims, select_by_mass, DimSet, ExclusionParams,
    ExclusionResult, QueryEncoder,
};
pub use index::{rank_order, top_k, InvertedIndex, RankedList};
