use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::LabeledImage;

/// "images labeled `include` but not `exclude`", with its ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExclusionQuery {
    include: String,
    exclude: String,
    relevant: BTreeSet<String>,
}

impl ExclusionQuery {
    pub fn new(include: String, exclude: String, relevant: BTreeSet<String>) -> Result<Self> {
        if include.is_empty() || exclude.is_empty() {
            return Err(Error::Invalid("query labels must be non-empty".into()));
        }
        if include == exclude {
            return Err(Error::Invalid(format!(
                "include and exclude are both {include:?}"
            )));
        }
        if relevant.is_empty() {
            return Err(Error::Invalid("relevant set is empty".into()));
        }
        Ok(ExclusionQuery {
            include,
            exclude,
            relevant,
        })
    }

    pub fn include(&self) -> &str {
        &self.include
    }

    pub fn exclude(&self) -> &str {
        &self.exclude
    }

    pub fn relevant(&self) -> &BTreeSet<String> {
        &self.relevant
    }

    /// Identifier used in run files: `include|exclude`.
    pub fn id(&self) -> String {
        format!("{}|{}", self.include, self.exclude)
    }
}

/// All ordered label pairs `(A, B)` with at least `min_co` images holding
/// both and at least `min_excl` holding `A` without `B`, sorted by `(A, B)`.
/// Records sharing an image id have their label sets merged.
pub fn build_exclusion_queries(
    labeled: &[LabeledImage],
    min_co: usize,
    min_excl: usize,
) -> Result<Vec<ExclusionQuery>> {
    if min_co == 0 || min_excl == 0 {
        return Err(Error::Invalid(
            "eval.min_co and eval.min_excl must be at least 1".into(),
        ));
    }
    let mut per_image: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for rec in labeled {
        per_image
            .entry(rec.image_id.as_str())
            .or_default()
            .extend(rec.labels.iter().map(String::as_str));
    }
    let mut images: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (&image, labels) in &per_image {
        for &label in labels {
            images.entry(label).or_default().insert(image);
        }
    }
    let mut out = Vec::new();
    for (&a, with_a) in &images {
        for (&b, with_b) in &images {
            if a == b {
                continue;
            }
            let co = with_a.intersection(with_b).count();
            if co < min_co {
                continue;
            }
            let relevant: BTreeSet<String> =
                with_a.difference(with_b).map(|s| s.to_string()).collect();
            if relevant.len() >= min_excl {
                out.push(ExclusionQuery::new(a.to_owned(), b.to_owned(), relevant)?);
            }
        }
    }
    Ok(out)
}
