//! Ranked run files: one `query_id<TAB>rank<TAB>id<TAB>score` line per hit,
//! ranks 1-based and consecutive within a query, scores with six decimals.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::retrieval::RankedList;

fn check_field(s: &str, what: &str) -> Result<()> {
    if s.is_empty() || s.contains(['\t', '\n', '\r']) {
        return Err(Error::Invalid(format!(
            "{what} {s:?} cannot be written to a run file"
        )));
    }
    Ok(())
}

pub fn encode_run(run: &[(String, RankedList)]) -> Result<String> {
    let mut out = String::new();
    let mut seen = HashSet::new();
    for (qid, list) in run {
        check_field(qid, "query id")?;
        if !seen.insert(qid.as_str()) {
            return Err(Error::DuplicateId(qid.clone()));
        }
        for (rank, (id, score)) in list.entries.iter().enumerate() {
            check_field(id, "id")?;
            writeln!(out, "{qid}\t{}\t{id}\t{score:.6}", rank + 1).expect("writing to a String");
        }
    }
    Ok(out)
}

/// Parses a run file. Queries appear in order of first occurrence; each
/// query's lines must be contiguous.
pub fn parse_run(bytes: &[u8]) -> Result<Vec<(String, RankedList)>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::format(format!("run file is not UTF-8: {e}")))?;
    let mut run: Vec<(String, RankedList)> = Vec::new();
    let mut finished: HashSet<String> = HashSet::new();
    let mut ids: HashSet<String> = HashSet::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::line(
                line,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let (qid, rank, id, score) = (fields[0], fields[1], fields[2], fields[3]);
        if qid.is_empty() || id.is_empty() {
            return Err(Error::line(line, "empty query id or id"));
        }
        let rank: usize = rank
            .parse()
            .map_err(|_| Error::line(line, format!("invalid rank {rank:?}")))?;
        let score: f64 = score
            .parse()
            .map_err(|_| Error::line(line, format!("invalid score {score:?}")))?;
        if !score.is_finite() {
            return Err(Error::line(line, "non-finite score"));
        }
        let new_query = run.last().is_none_or(|(q, _)| q != qid);
        if new_query {
            if let Some((prev, _)) = run.last() {
                finished.insert(prev.clone());
            }
            if finished.contains(qid) {
                return Err(Error::line(
                    line,
                    format!("lines for query {qid:?} are not contiguous"),
                ));
            }
            run.push((qid.to_owned(), RankedList::default()));
            ids.clear();
        }
        let list = &mut run.last_mut().expect("pushed above").1;
        if rank != list.entries.len() + 1 {
            return Err(Error::line(
                line,
                format!("expected rank {}, found {rank}", list.entries.len() + 1),
            ));
        }
        if list.entries.last().is_some_and(|&(_, prev)| score > prev) {
            return Err(Error::line(line, "scores must be non-increasing"));
        }
        if !ids.insert(id.to_owned()) {
            return Err(Error::line(
                line,
                format!("duplicate id {id:?} within query"),
            ));
        }
        list.entries.push((id.to_owned(), score));
        list.cutoff = list.entries.len();
    }
    Ok(run)
}

pub fn read_run(path: &Path) -> Result<Vec<(String, RankedList)>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_run(&bytes).map_err(|e| match e {
        Error::Line { line, msg } => {
            Error::Format(format!("{}: line {line}: {msg}", path.display()))
        }
        other => other,
    })
}
