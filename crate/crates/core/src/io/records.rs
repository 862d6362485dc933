//! Line-delimited JSON records: captions, image labels and exclusion queries.

use std::collections::BTreeSet;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::eval::ExclusionQuery;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CaptionRecord {
    pub image_id: String,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabeledImage {
    pub image_id: String,
    pub labels: BTreeSet<String>,
}

fn each_object<T>(
    bytes: &[u8],
    mut f: impl FnMut(&Map<String, Value>, usize) -> Result<T>,
) -> Result<Vec<T>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::format(format!("records are not UTF-8: {e}")))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line)
            .map_err(|e| Error::line(lineno, format!("malformed record: {e}")))?;
        let Value::Object(obj) = value else {
            return Err(Error::line(lineno, "record is not an object"));
        };
        out.push(f(&obj, lineno)?);
    }
    Ok(out)
}

fn string_field(obj: &Map<String, Value>, name: &str, line: usize) -> Result<String> {
    match obj.get(name) {
        None => Err(Error::line(line, format!("missing field {name}"))),
        Some(Value::String(s)) if !s.is_empty() => Ok(s.clone()),
        Some(_) => Err(Error::line(
            line,
            format!("field {name} must be a non-empty string"),
        )),
    }
}

fn string_list(obj: &Map<String, Value>, name: &str, line: usize) -> Result<BTreeSet<String>> {
    let Some(value) = obj.get(name) else {
        return Err(Error::line(line, format!("missing field {name}")));
    };
    let Value::Array(items) = value else {
        return Err(Error::line(
            line,
            format!("field {name} must be a list of strings"),
        ));
    };
    items
        .iter()
        .map(|item| match item {
            Value::String(s) if !s.is_empty() => Ok(s.clone()),
            _ => Err(Error::line(
                line,
                format!("field {name} must hold non-empty strings"),
            )),
        })
        .collect()
}

pub fn parse_captions(bytes: &[u8]) -> Result<Vec<CaptionRecord>> {
    each_object(bytes, |obj, line| {
        Ok(CaptionRecord {
            image_id: string_field(obj, "image_id", line)?,
            caption: string_field(obj, "caption", line)?,
        })
    })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<LabeledImage>> {
    each_object(bytes, |obj, line| {
        Ok(LabeledImage {
            image_id: string_field(obj, "image_id", line)?,
            labels: string_list(obj, "labels", line)?,
        })
    })
}

pub fn parse_queries(bytes: &[u8]) -> Result<Vec<ExclusionQuery>> {
    each_object(bytes, |obj, line| {
        let include = string_field(obj, "include", line)?;
        let exclude = string_field(obj, "exclude", line)?;
        let relevant = string_list(obj, "relevant", line)?;
        ExclusionQuery::new(include, exclude, relevant)
            .map_err(|e| Error::line(line, e.to_string()))
    })
}

fn encode_lines<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        // Serialization of these plain structs cannot fail.
        out.push_str(&serde_json::to_string(item).expect("record serialization"));
        out.push('\n');
    }
    out
}

pub fn encode_captions(records: &[CaptionRecord]) -> String {
    encode_lines(records)
}

pub fn encode_labels(records: &[LabeledImage]) -> String {
    encode_lines(records)
}

pub fn encode_queries(queries: &[ExclusionQuery]) -> String {
    encode_lines(queries)
}

fn read_with<T>(path: &Path, parse: impl Fn(&[u8]) -> Result<T>) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(&bytes).map_err(|e| match e {
        Error::Line { line, msg } => Error::Line {
            line,
            msg: format!("{msg} ({})", path.display()),
        },
        other => other,
    })
}

pub fn read_captions(path: &Path) -> Result<Vec<CaptionRecord>> {
    read_with(path, parse_captions)
}

pub fn read_labels(path: &Path) -> Result<Vec<LabeledImage>> {
    read_with(path, parse_labels)
}

pub fn read_queries(path: &Path) -> Result<Vec<ExclusionQuery>> {
    read_with(path, parse_queries)
}
