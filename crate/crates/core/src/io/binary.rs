//! DEMB and SEMB containers.
//!
//! ```text
//! DEMB: "DEMB" | version u8 = 1 | count u32 | dim u32 | count × [id_len u16 | id | dim × f32]
//! SEMB: "SEMB" | version u8 = 1 | count u32 | dim u32 | count × [id_len u16 | id | nnz u32 | nnz × (u32, f32)]
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use crate::embedding::{DenseEmbeddingSet, SparseEmbeddingSet, SparseVector};
use crate::error::{Error, Result};

pub const DENSE_MAGIC: &[u8; 4] = b"DEMB";
pub const SPARSE_MAGIC: &[u8; 4] = b"SEMB";
pub const FORMAT_VERSION: u8 = 1;

/// Bounds-checked little-endian reader over a byte slice.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    pub(crate) fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    pub(crate) fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    pub(crate) fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f32(&mut self) -> Option<f32> {
        self.take(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

pub(crate) fn check_magic(r: &mut ByteReader<'_>, magic: &[u8; 4]) -> Result<u8> {
    match r.take(4) {
        Some(m) if m == magic => {}
        Some(_) => return Err(Error::format("bad magic")),
        None => return Err(Error::format("truncated header")),
    }
    let version = r.u8().ok_or_else(|| Error::format("truncated header"))?;
    Ok(version)
}

fn header(r: &mut ByteReader<'_>, magic: &[u8; 4]) -> Result<(usize, usize)> {
    let version = check_magic(r, magic)?;
    if version != FORMAT_VERSION {
        return Err(Error::format(format!("unsupported version {version}")));
    }
    let count = r.u32().ok_or_else(|| Error::format("truncated header"))? as usize;
    let dim = r.u32().ok_or_else(|| Error::format("truncated header"))? as usize;
    if dim == 0 {
        return Err(Error::format("dimension must be positive"));
    }
    Ok((count, dim))
}

fn read_id(r: &mut ByteReader<'_>, record: usize) -> Result<String> {
    let truncated = || Error::format(format!("truncated at record {record}"));
    let len = r.u16().ok_or_else(truncated)? as usize;
    let bytes = r.take(len).ok_or_else(truncated)?;
    let id = std::str::from_utf8(bytes)
        .map_err(|_| Error::format(format!("record {record}: id is not UTF-8")))?;
    if id.is_empty() {
        return Err(Error::format(format!("record {record}: empty id")));
    }
    Ok(id.to_owned())
}

fn put_id(out: &mut Vec<u8>, id: &str) -> Result<()> {
    let len = u16::try_from(id.len())
        .map_err(|_| Error::Invalid(format!("id longer than 65535 bytes: {id:.32}...")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(id.as_bytes());
    Ok(())
}

fn put_header(out: &mut Vec<u8>, magic: &[u8; 4], count: usize, dim: usize) -> Result<()> {
    let count = u32::try_from(count).map_err(|_| Error::Invalid("too many records".into()))?;
    let dim = u32::try_from(dim).map_err(|_| Error::Invalid("dimension too large".into()))?;
    out.extend_from_slice(magic);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    Ok(())
}

fn map_set_err(record: usize, e: Error) -> Error {
    match e {
        Error::DuplicateId(id) => Error::format(format!("record {record}: duplicate id {id:?}")),
        other => Error::format(format!("record {record}: {other}")),
    }
}

pub fn encode_dense(set: &DenseEmbeddingSet) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(13 + set.len() * (set.dim() * 4 + 8));
    put_header(&mut out, DENSE_MAGIC, set.len(), set.dim())?;
    for (id, v) in set.iter() {
        put_id(&mut out, id)?;
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_dense(bytes: &[u8]) -> Result<DenseEmbeddingSet> {
    let mut r = ByteReader::new(bytes);
    let (count, dim) = header(&mut r, DENSE_MAGIC)?;
    let mut set = DenseEmbeddingSet::new(dim);
    let mut vector = Vec::with_capacity(dim.min(1 << 16));
    for record in 1..=count {
        let id = read_id(&mut r, record)?;
        vector.clear();
        for _ in 0..dim {
            vector.push(
                r.f32()
                    .ok_or_else(|| Error::format(format!("truncated at record {record}")))?,
            );
        }
        set.push(id, &vector).map_err(|e| map_set_err(record, e))?;
    }
    if r.remaining() > 0 {
        return Err(Error::format(format!(
            "{} trailing bytes after {count} records",
            r.remaining()
        )));
    }
    Ok(set)
}

pub fn encode_sparse(set: &SparseEmbeddingSet) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    put_header(&mut out, SPARSE_MAGIC, set.len(), set.dim())?;
    for (id, v) in set.iter() {
        put_id(&mut out, id)?;
        out.extend_from_slice(&(v.nnz() as u32).to_le_bytes());
        for (i, x) in v.iter() {
            out.extend_from_slice(&(i as u32).to_le_bytes());
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_sparse(bytes: &[u8]) -> Result<SparseEmbeddingSet> {
    let mut r = ByteReader::new(bytes);
    let (count, dim) = header(&mut r, SPARSE_MAGIC)?;
    let mut set = SparseEmbeddingSet::new(dim);
    for record in 1..=count {
        let truncated = || Error::format(format!("truncated at record {record}"));
        let id = read_id(&mut r, record)?;
        let nnz = r.u32().ok_or_else(truncated)? as usize;
        if nnz > dim {
            return Err(Error::format(format!(
                "record {record}: nnz {nnz} exceeds dimension {dim}"
            )));
        }
        if nnz.checked_mul(8).is_none_or(|n| n > r.remaining()) {
            return Err(truncated());
        }
        let mut entries = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let i = r.u32().ok_or_else(truncated)?;
            let v = r.f32().ok_or_else(truncated)?;
            entries.push((i, v));
        }
        let v = SparseVector::new(dim, entries).map_err(|e| map_set_err(record, e))?;
        set.push(id, v).map_err(|e| map_set_err(record, e))?;
    }
    if r.remaining() > 0 {
        return Err(Error::format(format!(
            "{} trailing bytes after {count} records",
            r.remaining()
        )));
    }
    Ok(set)
}

pub fn read_dense_set(path: &Path) -> Result<DenseEmbeddingSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dense(&bytes).map_err(|e| prefix(path, e))
}

pub fn write_dense_set(set: &DenseEmbeddingSet, path: &Path) -> Result<()> {
    std::fs::write(path, encode_dense(set)?).map_err(|e| Error::io(path, e))
}

pub fn read_sparse_set(path: &Path) -> Result<SparseEmbeddingSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_sparse(&bytes).map_err(|e| prefix(path, e))
}

pub fn write_sparse_set(set: &SparseEmbeddingSet, path: &Path) -> Result<()> {
    std::fs::write(path, encode_sparse(set)?).map_err(|e| Error::io(path, e))
}

pub(crate) fn prefix(path: &Path, e: Error) -> Error {
    match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    }
}
