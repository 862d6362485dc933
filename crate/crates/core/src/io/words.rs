//! Whitespace-separated text word vectors (`token v1 v2 ... vm` per line).

use std::fmt::Write as _;
use std::path::Path;

use crate::embedding::WordEmbeddingTable;
use crate::error::{Error, Result};

pub fn read_word_vectors(path: &Path) -> Result<WordEmbeddingTable> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let table = parse_word_vectors(&bytes)?;
    if table.duplicates() > 0 {
        log::warn!(
            "{}: {} duplicate tokens ignored",
            path.display(),
            table.duplicates()
        );
    }
    Ok(table)
}

/// Parses a word-vector table. The dimension is taken from the first data line.
pub fn parse_word_vectors(bytes: &[u8]) -> Result<WordEmbeddingTable> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::format(format!("word vectors are not UTF-8: {e}")))?;
    let mut table: Option<WordEmbeddingTable> = None;
    let mut values = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        let mut fields = line.split_ascii_whitespace();
        let Some(token) = fields.next() else { continue };
        values.clear();
        for f in fields {
            let v: f32 = f
                .parse()
                .map_err(|_| Error::line(lineno, format!("invalid number {f:?}")))?;
            if !v.is_finite() {
                return Err(Error::line(lineno, format!("non-finite value {f:?}")));
            }
            values.push(v);
        }
        let table = match &mut table {
            Some(t) => t,
            None => {
                if values.is_empty() {
                    return Err(Error::line(lineno, "expected at least one value"));
                }
                table.insert(WordEmbeddingTable::new(values.len()))
            }
        };
        if values.len() != table.dim() {
            return Err(Error::line(
                lineno,
                format!("expected {} values, found {}", table.dim(), values.len()),
            ));
        }
        table
            .insert(token, &values)
            .map_err(|e| Error::line(lineno, e.to_string()))?;
    }
    table.ok_or(Error::Empty("word vector file"))
}

pub fn encode_word_vectors(table: &WordEmbeddingTable) -> String {
    let mut out = String::new();
    for (token, v) in table.iter() {
        out.push_str(token);
        for x in v {
            let _ = write!(out, " {x}");
        }
        out.push('\n');
    }
    out
}
