use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use super::queries::ExclusionQuery;
use crate::error::{Error, Result};
use crate::retrieval::RankedList;

/// Reciprocal rank of the first relevant id within the top `k`, or 0.
pub fn mrr_at_k<S: AsRef<str>>(ranked: &[S], relevant: &BTreeSet<String>, k: usize) -> f64 {
    ranked
        .iter()
        .take(k)
        .position(|id| relevant.contains(id.as_ref()))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Binary-gain NDCG over the top `k`.
pub fn ndcg_at_k<S: AsRef<str>>(
    ranked: &[S],
    relevant: &BTreeSet<String>,
    k: usize,
) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::Empty("relevant set"));
    }
    let dcg = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, id)| relevant.contains(id.as_ref()))
        .fold(0.0, |acc, (i, _)| acc + discount(i + 1));
    let ideal: f64 = (1..=relevant.len().min(k)).map(discount).sum();
    Ok(dcg / ideal)
}

/// Average precision over the top `k`, normalised by `min(|relevant|, k)`.
pub fn ap_at_k<S: AsRef<str>>(ranked: &[S], relevant: &BTreeSet<String>, k: usize) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::Empty("relevant set"));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, id) in ranked.iter().take(k).enumerate() {
        if relevant.contains(id.as_ref()) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / relevant.len().min(k) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    Mrr,
    Ndcg,
    Ap,
}

/// A metric at a cutoff, written `MRR@10`, `NDCG@10`, `AP@10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Metric {
    pub kind: MetricKind,
    pub k: usize,
}

impl Metric {
    pub fn score(&self, ranked: &[&str], relevant: &BTreeSet<String>) -> Result<f64> {
        match self.kind {
            MetricKind::Mrr => Ok(mrr_at_k(ranked, relevant, self.k)),
            MetricKind::Ndcg => ndcg_at_k(ranked, relevant, self.k),
            MetricKind::Ap => ap_at_k(ranked, relevant, self.k),
        }
    }

    /// MRR@1, MRR@10, NDCG@10, AP@10.
    pub fn defaults() -> Vec<Metric> {
        vec![
            Metric {
                kind: MetricKind::Mrr,
                k: 1,
            },
            Metric {
                kind: MetricKind::Mrr,
                k: 10,
            },
            Metric {
                kind: MetricKind::Ndcg,
                k: 10,
            },
            Metric {
                kind: MetricKind::Ap,
                k: 10,
            },
        ]
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            MetricKind::Mrr => "MRR",
            MetricKind::Ndcg => "NDCG",
            MetricKind::Ap => "AP",
        };
        write!(f, "{name}@{}", self.k)
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("metric {s:?}: expected MRR@k, NDCG@k or AP@k"));
        let (name, k) = s.split_once('@').ok_or_else(bad)?;
        let kind = match name.to_ascii_uppercase().as_str() {
            "MRR" => MetricKind::Mrr,
            "NDCG" => MetricKind::Ndcg,
            "AP" => MetricKind::Ap,
            _ => return Err(bad()),
        };
        let k: usize = k.parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(bad());
        }
        Ok(Metric { kind, k })
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryScores {
    pub query_id: String,
    /// No ranked list was supplied; every metric is 0.
    pub missing: bool,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub metrics: Vec<Metric>,
    pub query_count: usize,
    pub means: Vec<f64>,
    pub queries: Vec<QueryScores>,
}

impl MetricReport {
    pub fn column(&self, metric: Metric) -> Option<Vec<f64>> {
        let j = self.metrics.iter().position(|m| *m == metric)?;
        Some(self.queries.iter().map(|q| q.values[j]).collect())
    }

    pub fn mean(&self, metric: Metric) -> Option<f64> {
        let j = self.metrics.iter().position(|m| *m == metric)?;
        Some(self.means[j])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization") + "\n"
    }

    /// Human-readable table: one row per query, then the means.
    pub fn to_text(&self) -> String {
        let width = self
            .queries
            .iter()
            .map(|q| q.query_id.len())
            .max()
            .unwrap_or(0)
            .max(5);
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "query");
        for m in &self.metrics {
            let _ = write!(out, "  {:>8}", m.to_string());
        }
        out.push('\n');
        for q in &self.queries {
            let _ = write!(out, "{:<width$}", q.query_id);
            for v in &q.values {
                let _ = write!(out, "  {v:>8.4}");
            }
            if q.missing {
                out.push_str("  (no results)");
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<width$}", "mean");
        for v in &self.means {
            let _ = write!(out, "  {v:>8.4}");
        }
        let _ = writeln!(out, "\nqueries: {}", self.query_count);
        out
    }
}

/// Order-independent mean: values are summed in sorted order.
fn mean(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Scores every query against its ranked list (matched by query id). A query
/// without a list scores 0 on every metric and still counts.
pub fn evaluate_run(
    run: &[(String, RankedList)],
    queries: &[ExclusionQuery],
    metrics: &[Metric],
) -> Result<MetricReport> {
    let lists: HashMap<&str, &RankedList> = run.iter().map(|(q, l)| (q.as_str(), l)).collect();
    let mut rows = Vec::with_capacity(queries.len());
    for query in queries {
        let id = query.id();
        let (missing, values) = match lists.get(id.as_str()) {
            Some(list) => {
                let ranked = list.ids();
                let values = metrics
                    .iter()
                    .map(|m| m.score(&ranked, query.relevant()))
                    .collect::<Result<Vec<_>>>()?;
                (false, values)
            }
            None => (true, vec![0.0; metrics.len()]),
        };
        rows.push(QueryScores {
            query_id: id,
            missing,
            values,
        });
    }
    let means = (0..metrics.len())
        .map(|j| mean(&mut rows.iter().map(|r| r.values[j]).collect::<Vec<_>>()))
        .collect();
    Ok(MetricReport {
        metrics: metrics.to_vec(),
        query_count: rows.len(),
        means,
        queries: rows,
    })
}
