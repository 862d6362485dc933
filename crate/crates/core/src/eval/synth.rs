//! Synthetic labeled image/caption corpus with known latent structure.
//!
//! `factors` orthonormal directions span a subspace of the `k`-dimensional
//! embedding space. Each label's direction is a random unit-norm mixture of
//! those factors, so labels overlap as real categories do. An image holds one
//! primary label and, with probability `co_occurrence`, one extra label drawn
//! uniformly from the rest. Its dense vector is the sum of its label
//! directions plus Gaussian noise; its caption's dense vector is the same sum
//! with independent noise.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embedding::{DenseEmbeddingSet, WordEmbeddingTable};
use crate::error::{Error, Result};
use crate::io::{CaptionRecord, LabeledImage};

/// Word vectors are scaled to roughly the mean norm of public 50-d GloVe
/// vectors; unit-norm inputs leave the word autoencoder's reconstruction term
/// too weak to keep any latent alive.
const WORD_NORM: f64 = 3.5;

const NAMES: [&str; 24] = [
    "person", "bicycle", "car", "dog", "cat", "horse", "sheep", "cow", "bird", "boat", "train",
    "truck", "bench", "kite", "bottle", "cup", "chair", "couch", "bed", "clock", "vase", "book",
    "pizza", "cake",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub labels: usize,
    pub images_per_label: usize,
    /// Dense embedding dimension.
    pub k: usize,
    /// Number of ground-truth latent factors.
    pub factors: usize,
    pub sigma: f64,
    pub co_occurrence: f64,
    /// Extra vocabulary entries (random label mixtures) in the word table.
    pub filler_words: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            labels: 8,
            images_per_label: 50,
            k: 16,
            factors: 8,
            sigma: 0.05,
            co_occurrence: 0.3,
            filler_words: 200,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(m.to_string()));
        if self.labels < 2 {
            return bad("synth.labels must be at least 2");
        }
        if self.images_per_label == 0 || self.k == 0 || self.factors == 0 {
            return bad("synth.images_per_label, synth.k and synth.factors must be positive");
        }
        if self.factors > self.k {
            return Err(Error::Invalid(format!(
                "synth.factors ({}) exceeds synth.k ({})",
                self.factors, self.k
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("synth.sigma must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.co_occurrence) {
            return bad("synth.co_occurrence must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub images: DenseEmbeddingSet,
    /// Keyed `image_id#0`, one caption per image.
    pub texts: DenseEmbeddingSet,
    pub captions: Vec<CaptionRecord>,
    pub labels: Vec<LabeledImage>,
    /// Dense text-side embedding of each label name.
    pub label_embeddings: DenseEmbeddingSet,
    /// Word vectors (`m = k`) for label names and filler tokens.
    pub words: WordEmbeddingTable,
}

pub fn label_name(i: usize) -> String {
    match NAMES.get(i) {
        Some(n) => (*n).to_owned(),
        None => format!("label{i}"),
    }
}

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Gram-Schmidt on Gaussian draws; redraws a vector that collapses.
fn orthonormal_factors(k: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        if v.iter().map(|x| x * x).sum::<f64>().sqrt() > 1e-6 {
            normalize(&mut v);
            basis.push(v);
        }
    }
    basis
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

fn scaled(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| (x * WORD_NORM) as f32).collect()
}

fn noisy(base: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    base.iter()
        .map(|&x| {
            let n: f64 = rng.sample(StandardNormal);
            x + sigma * n
        })
        .collect()
}

pub fn synth_corpus(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let k = config.k;
    let mut geometry = stream(config.seed, 0);
    let mut assign = stream(config.seed, 1);
    let mut image_noise = stream(config.seed, 2);
    let mut text_noise = stream(config.seed, 3);
    let mut fillers = stream(config.seed, 4);

    let factors = orthonormal_factors(k, config.factors, &mut geometry);
    let mut directions = Vec::with_capacity(config.labels);
    for _ in 0..config.labels {
        let mut dir = vec![0.0; k];
        loop {
            let mix: Vec<f64> = (0..config.factors)
                .map(|_| geometry.sample(StandardNormal))
                .collect();
            dir.iter_mut().for_each(|x| *x = 0.0);
            for (c, f) in mix.iter().zip(&factors) {
                dir.iter_mut().zip(f).for_each(|(x, y)| *x += c * y);
            }
            if dir.iter().map(|x| x * x).sum::<f64>() > 1e-12 {
                break;
            }
        }
        normalize(&mut dir);
        directions.push(dir);
    }
    let names: Vec<String> = (0..config.labels).map(label_name).collect();

    let total = config.labels * config.images_per_label;
    let width = total.saturating_sub(1).to_string().len().max(4);
    let mut images = DenseEmbeddingSet::new(k);
    let mut texts = DenseEmbeddingSet::new(k);
    let mut captions = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for n in 0..total {
        let primary = n / config.images_per_label;
        let mut held = BTreeSet::from([primary]);
        if assign.random::<f64>() < config.co_occurrence {
            let mut extra = assign.random_range(0..config.labels - 1);
            if extra >= primary {
                extra += 1;
            }
            held.insert(extra);
        }
        let mut base = vec![0.0; k];
        for &l in &held {
            base.iter_mut()
                .zip(&directions[l])
                .for_each(|(x, y)| *x += y);
        }
        let id = format!("img{n:0width$}");
        images.push(
            id.clone(),
            &to_f32(&noisy(&base, config.sigma, &mut image_noise)),
        )?;
        texts.push(
            format!("{id}#0"),
            &to_f32(&noisy(&base, config.sigma, &mut text_noise)),
        )?;
        let label_set: BTreeSet<String> = held.iter().map(|&l| names[l].clone()).collect();
        let caption = label_set.iter().cloned().collect::<Vec<_>>().join(" ");
        captions.push(CaptionRecord {
            image_id: id.clone(),
            caption,
        });
        labels.push(LabeledImage {
            image_id: id,
            labels: label_set,
        });
    }

    let mut label_embeddings = DenseEmbeddingSet::new(k);
    let mut words = WordEmbeddingTable::new(k);
    for (name, dir) in names.iter().zip(&directions) {
        label_embeddings.push(name.clone(), &to_f32(dir))?;
        words.insert(name, &scaled(dir))?;
    }
    for f in 0..config.filler_words {
        let mut v = vec![0.0; k];
        let parts = fillers.random_range(1..=3usize);
        for _ in 0..parts {
            let l = fillers.random_range(0..config.labels);
            let w: f64 = fillers.random_range(0.2..1.0);
            v.iter_mut()
                .zip(&directions[l])
                .for_each(|(x, y)| *x += w * y);
        }
        let v = noisy(&v, config.sigma, &mut fillers);
        words.insert(&format!("w{f:04}"), &scaled(&v))?;
    }

    Ok(SynthCorpus {
        images,
        texts,
        captions,
        labels,
        label_embeddings,
        words,
    })
}
