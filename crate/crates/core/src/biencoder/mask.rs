use crate::embedding::SparseVector;
use crate::error::{Error, Result};

/// A set of latent indices in `[0, dim)`, kept sorted and unique.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMask {
    dim: usize,
    members: Vec<u32>,
}

impl IndexMask {
    pub fn empty(dim: usize) -> Self {
        IndexMask {
            dim,
            members: Vec::new(),
        }
    }

    pub fn full(dim: usize) -> Self {
        IndexMask {
            dim,
            members: (0..dim as u32).collect(),
        }
    }

    pub fn from_indices(dim: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut members = Vec::new();
        for i in indices {
            if i >= dim {
                return Err(Error::Invalid(format!(
                    "mask index {i} out of range for dim {dim}"
                )));
            }
            members.push(i as u32);
        }
        members.sort_unstable();
        members.dedup();
        Ok(IndexMask { dim, members })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[u32] {
        &self.members
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&(i as u32)).is_ok()
    }

    /// Dense 0/1 indicator.
    pub fn indicator(&self) -> Vec<bool> {
        let mut out = vec![false; self.dim];
        for &m in &self.members {
            out[m as usize] = true;
        }
        out
    }
}

/// Indices of the `t` largest strictly positive values, ties to the lower index.
pub fn topt_mask(latent: &[f64], t: usize) -> IndexMask {
    let mut order: Vec<usize> = (0..latent.len()).filter(|&i| latent[i] > 0.0).collect();
    order.sort_by(|&a, &b| latent[b].total_cmp(&latent[a]).then(a.cmp(&b)));
    order.truncate(t);
    order.sort_unstable();
    IndexMask {
        dim: latent.len(),
        members: order.into_iter().map(|i| i as u32).collect(),
    }
}

/// Indices whose value is at least `threshold`.
pub fn active_mask(z: &SparseVector, threshold: f64) -> IndexMask {
    let members = z
        .iter()
        .filter(|&(_, v)| v as f64 >= threshold)
        .map(|(i, _)| i as u32)
        .collect();
    IndexMask {
        dim: z.dim(),
        members,
    }
}

pub fn union_mask(a: &IndexMask, b: &IndexMask) -> Result<IndexMask> {
    if a.dim != b.dim {
        return Err(Error::DimMismatch {
            expected: a.dim,
            found: b.dim,
        });
    }
    let mut members = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.members.len() || j < b.members.len() {
        let next = match (a.members.get(i), b.members.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                x
            }
            (Some(_), Some(&y)) => {
                j += 1;
                y
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        members.push(next);
    }
    Ok(IndexMask {
        dim: a.dim,
        members,
    })
}

/// Keeps the latent values at mask positions, dropping zeros.
pub fn sparsify(latent: &[f64], mask: &IndexMask) -> Result<SparseVector> {
    if latent.len() != mask.dim {
        return Err(Error::DimMismatch {
            expected: mask.dim,
            found: latent.len(),
        });
    }
    let mut masked = vec![0.0; latent.len()];
    for &m in &mask.members {
        masked[m as usize] = latent[m as usize];
    }
    Ok(SparseVector::from_dense(&masked))
}
