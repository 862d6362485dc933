use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::loss::{contrastive_with_grad, loss_contrastive, Pairing};
use super::mask::{active_mask, topt_mask, union_mask, IndexMask};
use super::{BiEncoderModel, BiTrainConfig, Branch, ContrastiveOn, Modality};
use crate::caption::mean_pool;
use crate::embedding::{DenseEmbeddingSet, SparseEmbeddingSet, SparseVector};
use crate::error::{Error, Result};
use crate::linalg::{self, squared_distance};

/// One aligned training example: dense image and text embeddings plus the
/// caption embedding that guides both masks.
#[derive(Debug, Clone, PartialEq)]
pub struct PairExample {
    pub image: Vec<f64>,
    pub text: Vec<f64>,
    pub caption: SparseVector,
}

/// Identifiers tying an image, its caption text embedding and its caption
/// sparse embedding together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingPair {
    pub image_id: String,
    /// Key into the text embeddings and caption sparse embeddings.
    pub text_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct BiLoss {
    pub rl: f64,
    pub cl: f64,
    pub total: f64,
}

/// Masks for every pair of a batch, held fixed through the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchMasks {
    pub image: Vec<IndexMask>,
    pub text: Vec<IndexMask>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiGradient {
    pub image: Branch,
    pub text: Branch,
}

fn mask_for(latent: &[f64], caption: &SparseVector, config: &BiTrainConfig) -> Result<IndexMask> {
    union_mask(
        &topt_mask(latent, config.top_t),
        &active_mask(caption, config.eps_active),
    )
}

pub fn batch_masks(
    model: &BiEncoderModel,
    batch: &[&PairExample],
    config: &BiTrainConfig,
) -> Result<BatchMasks> {
    let mut masks = BatchMasks {
        image: Vec::with_capacity(batch.len()),
        text: Vec::with_capacity(batch.len()),
    };
    for ex in batch {
        masks.image.push(mask_for(
            &model.image.encode(&ex.image)?,
            &ex.caption,
            config,
        )?);
        masks.text.push(mask_for(
            &model.text.encode(&ex.text)?,
            &ex.caption,
            config,
        )?);
    }
    Ok(masks)
}

struct Forward {
    image_pre: Vec<Vec<f64>>,
    text_pre: Vec<Vec<f64>>,
    image_latent: Vec<Vec<f64>>,
    text_latent: Vec<Vec<f64>>,
    image_hat: Vec<Vec<f64>>,
    text_hat: Vec<Vec<f64>>,
    image_rep: Vec<Vec<f64>>,
    text_rep: Vec<Vec<f64>>,
}

fn apply_mask(latent: &[f64], mask: &IndexMask) -> Vec<f64> {
    let mut out = vec![0.0; latent.len()];
    for &m in mask.members() {
        out[m as usize] = latent[m as usize];
    }
    out
}

fn forward(
    model: &BiEncoderModel,
    batch: &[&PairExample],
    masks: &BatchMasks,
    config: &BiTrainConfig,
) -> Result<Forward> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if masks.image.len() != batch.len() || masks.text.len() != batch.len() {
        return Err(Error::DimMismatch {
            expected: batch.len(),
            found: masks.image.len(),
        });
    }
    let image_pre = batch
        .iter()
        .map(|ex| model.image.pre_activation(&ex.image))
        .collect::<Result<Vec<_>>>()?;
    let text_pre = batch
        .iter()
        .map(|ex| model.text.pre_activation(&ex.text))
        .collect::<Result<Vec<_>>>()?;
    let relu = |p: &Vec<f64>| p.iter().map(|v| v.max(0.0)).collect::<Vec<f64>>();
    let image_latent: Vec<Vec<f64>> = image_pre.iter().map(relu).collect();
    let text_latent: Vec<Vec<f64>> = text_pre.iter().map(relu).collect();
    let image_hat = image_latent
        .iter()
        .map(|z| model.image.decode(z))
        .collect::<Result<Vec<_>>>()?;
    let text_hat = text_latent
        .iter()
        .map(|z| model.text.decode(z))
        .collect::<Result<Vec<_>>>()?;
    let (image_rep, text_rep) = match config.contrastive_on {
        ContrastiveOn::Sr => (
            image_latent
                .iter()
                .zip(&masks.image)
                .map(|(z, m)| apply_mask(z, m))
                .collect(),
            text_latent
                .iter()
                .zip(&masks.text)
                .map(|(z, m)| apply_mask(z, m))
                .collect(),
        ),
        ContrastiveOn::Latent => (image_latent.clone(), text_latent.clone()),
    };
    Ok(Forward {
        image_pre,
        text_pre,
        image_latent,
        text_latent,
        image_hat,
        text_hat,
        image_rep,
        text_rep,
    })
}

fn recon_mean(batch: &[&PairExample], fwd: &Forward, pairing: Pairing) -> f64 {
    let mut total = 0.0;
    for (i, ex) in batch.iter().enumerate() {
        total += match pairing {
            Pairing::Cross => {
                squared_distance(&ex.image, &fwd.text_hat[i])
                    + squared_distance(&ex.text, &fwd.image_hat[i])
            }
            Pairing::Same => {
                squared_distance(&ex.image, &fwd.image_hat[i])
                    + squared_distance(&ex.text, &fwd.text_hat[i])
            }
        };
    }
    total / batch.len() as f64
}

fn checked(loss: BiLoss) -> Result<BiLoss> {
    if !loss.rl.is_finite() {
        return Err(Error::NonFinite { term: "rl" });
    }
    if !loss.cl.is_finite() {
        return Err(Error::NonFinite { term: "cl" });
    }
    Ok(loss)
}

/// `RL + λ·CL` under the given (frozen) masks.
pub fn bi_loss(
    model: &BiEncoderModel,
    batch: &[&PairExample],
    masks: &BatchMasks,
    config: &BiTrainConfig,
) -> Result<BiLoss> {
    let fwd = forward(model, batch, masks, config)?;
    let rl = recon_mean(batch, &fwd, config.pairing);
    let cl = loss_contrastive(&fwd.image_rep, &fwd.text_rep, config.tau)?;
    checked(BiLoss {
        rl,
        cl,
        total: rl + config.lambda * cl,
    })
}

fn backprop_branch(
    grad: &mut Branch,
    branch: &Branch,
    input: &[f64],
    pre: &[f64],
    latent: &[f64],
    g_hat: &[f64],
    mut g_latent: Vec<f64>,
) {
    grad.dec_w.add_outer(g_hat, latent);
    for (b, g) in grad.dec_b.iter_mut().zip(g_hat) {
        *b += g;
    }
    for (gl, d) in g_latent.iter_mut().zip(branch.dec_w.transpose_mul(g_hat)) {
        *gl += d;
    }
    for (gl, &p) in g_latent.iter_mut().zip(pre) {
        if p <= 0.0 {
            *gl = 0.0;
        }
    }
    grad.enc_w.add_outer(&g_latent, input);
    for (b, g) in grad.enc_b.iter_mut().zip(&g_latent) {
        *b += g;
    }
}

/// Analytic gradient of `RL + λ·CL` with the masks treated as constants.
pub fn bi_grad(
    model: &BiEncoderModel,
    batch: &[&PairExample],
    masks: &BatchMasks,
    config: &BiTrainConfig,
) -> Result<(BiGradient, BiLoss)> {
    let fwd = forward(model, batch, masks, config)?;
    let n = batch.len() as f64;
    let rl = recon_mean(batch, &fwd, config.pairing);
    let (cl, g_img_rep, g_txt_rep) =
        contrastive_with_grad(&fwd.image_rep, &fwd.text_rep, config.tau)?;
    let loss = checked(BiLoss {
        rl,
        cl,
        total: rl + config.lambda * cl,
    })?;

    let mut grad = BiGradient {
        image: model.image.zeros_like(),
        text: model.text.zeros_like(),
    };
    let d = model.latent_dim();
    for (i, ex) in batch.iter().enumerate() {
        let diff = |hat: &[f64], target: &[f64]| -> Vec<f64> {
            hat.iter()
                .zip(target)
                .map(|(h, t)| 2.0 * (h - t) / n)
                .collect()
        };
        let (g_image_hat, g_text_hat) = match config.pairing {
            Pairing::Cross => (
                diff(&fwd.image_hat[i], &ex.text),
                diff(&fwd.text_hat[i], &ex.image),
            ),
            Pairing::Same => (
                diff(&fwd.image_hat[i], &ex.image),
                diff(&fwd.text_hat[i], &ex.text),
            ),
        };

        let mut g_image_latent = vec![0.0; d];
        let mut g_text_latent = vec![0.0; d];
        if config.lambda != 0.0 {
            match config.contrastive_on {
                ContrastiveOn::Sr => {
                    for &m in masks.image[i].members() {
                        g_image_latent[m as usize] = config.lambda * g_img_rep[i][m as usize];
                    }
                    for &m in masks.text[i].members() {
                        g_text_latent[m as usize] = config.lambda * g_txt_rep[i][m as usize];
                    }
                }
                ContrastiveOn::Latent => {
                    for h in 0..d {
                        g_image_latent[h] = config.lambda * g_img_rep[i][h];
                        g_text_latent[h] = config.lambda * g_txt_rep[i][h];
                    }
                }
            }
        }
        backprop_branch(
            &mut grad.image,
            &model.image,
            &ex.image,
            &fwd.image_pre[i],
            &fwd.image_latent[i],
            &g_image_hat,
            g_image_latent,
        );
        backprop_branch(
            &mut grad.text,
            &model.text,
            &ex.text,
            &fwd.text_pre[i],
            &fwd.text_latent[i],
            &g_text_hat,
            g_text_latent,
        );
    }
    Ok((grad, loss))
}

fn apply(model: &mut BiEncoderModel, grad: &BiGradient, lr: f64) {
    for (branch, g) in [
        (&mut model.image, &grad.image),
        (&mut model.text, &grad.text),
    ] {
        for (p, gp) in branch.params_mut().into_iter().zip(g.params()) {
            linalg::sgd_step(p, gp, lr);
        }
    }
}

/// One SGD step: masks from the current model, gradient, update.
pub fn bi_train_step(
    model: &BiEncoderModel,
    batch: &[&PairExample],
    config: &BiTrainConfig,
) -> Result<(BiEncoderModel, BiLoss)> {
    let masks = batch_masks(model, batch, config)?;
    let (grad, loss) = bi_grad(model, batch, &masks, config)?;
    let mut next = model.clone();
    apply(&mut next, &grad, config.learning_rate);
    if !next.is_finite() {
        return Err(Error::NonFinite { term: "parameters" });
    }
    Ok((next, loss))
}

/// Resolves training pairs against the embedding sets. Reports up to ten
/// unmatched identifiers.
fn resolve_pairs(
    images: &DenseEmbeddingSet,
    texts: &DenseEmbeddingSet,
    captions: Option<&SparseEmbeddingSet>,
    pairs: &[TrainingPair],
    latent_dim: usize,
) -> Result<Vec<PairExample>> {
    if images.dim() != texts.dim() {
        return Err(Error::DimMismatch {
            expected: images.dim(),
            found: texts.dim(),
        });
    }
    if let Some(c) = captions {
        if c.dim() != latent_dim {
            return Err(Error::DimMismatch {
                expected: latent_dim,
                found: c.dim(),
            });
        }
    }
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let image = images.get(&pair.image_id);
        let text = texts.get(&pair.text_id);
        let caption = match captions {
            Some(c) => c.get(&pair.text_id).cloned(),
            None => Some(SparseVector::empty(latent_dim)),
        };
        if image.is_none() {
            missing.push(pair.image_id.clone());
        }
        if text.is_none() {
            missing.push(pair.text_id.clone());
        } else if caption.is_none() {
            missing.push(format!("{} (caption embedding)", pair.text_id));
        }
        if let (Some(image), Some(text), Some(caption)) = (image, text, caption) {
            out.push(PairExample {
                image: linalg::to_f64(image),
                text: linalg::to_f64(text),
                caption,
            });
        }
    }
    if !missing.is_empty() {
        missing.truncate(10);
        return Err(Error::UnmatchedIds(missing));
    }
    Ok(out)
}

/// Batch boundaries of size `n`, folding a trailing singleton into the
/// previous batch (the contrastive loss needs two pairs).
fn batch_bounds(len: usize, n: usize) -> Vec<(usize, usize)> {
    let mut bounds: Vec<(usize, usize)> =
        (0..len).step_by(n).map(|s| (s, (s + n).min(len))).collect();
    if bounds.len() > 1 {
        if let Some(&(s, e)) = bounds.last() {
            if e - s < 2 {
                bounds.pop();
                bounds.last_mut().expect("previous batch").1 = e;
            }
        }
    }
    bounds
}

/// Full training run. Returns the model and the per-epoch pair-weighted
/// mean losses.
pub fn bi_train(
    images: &DenseEmbeddingSet,
    texts: &DenseEmbeddingSet,
    captions: Option<&SparseEmbeddingSet>,
    pairs: &[TrainingPair],
    config: &BiTrainConfig,
) -> Result<(BiEncoderModel, Vec<BiLoss>)> {
    config.validate()?;
    let examples = resolve_pairs(images, texts, captions, pairs, config.latent_dim)?;
    if examples.len() < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 training pairs, got {}",
            examples.len()
        )));
    }
    let mut model = BiEncoderModel::init(images.dim(), config.latent_dim, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(2);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut sum = BiLoss::default();
        for (s, e) in batch_bounds(order.len(), config.batch_size) {
            let batch: Vec<&PairExample> = order[s..e].iter().map(|&i| &examples[i]).collect();
            let (next, loss) = bi_train_step(&model, &batch, config).map_err(|err| match err {
                Error::NonFinite { term } => Error::Diverged { epoch, term },
                other => other,
            })?;
            model = next;
            let w = (e - s) as f64;
            sum.rl += loss.rl * w;
            sum.cl += loss.cl * w;
        }
        let n = examples.len() as f64;
        let loss = BiLoss {
            rl: sum.rl / n,
            cl: sum.cl / n,
            total: (sum.rl + config.lambda * sum.cl) / n,
        };
        log::debug!(
            "biencoder epoch {epoch}: rl={:.5} cl={:.5} total={:.5}",
            loss.rl,
            loss.cl,
            loss.total
        );
        trace.push(loss);
    }
    Ok((model, trace))
}

/// Sparse representations for a whole corpus. Records with a guide vector in
/// `guides` use `top_t ∪ active(guide)`; the rest fall back to `top_t`.
pub fn encode_corpus(
    model: &BiEncoderModel,
    corpus: &DenseEmbeddingSet,
    modality: Modality,
    guides: Option<&SparseEmbeddingSet>,
    config: &BiTrainConfig,
) -> Result<SparseEmbeddingSet> {
    if corpus.dim() != model.input_dim() {
        return Err(Error::DimMismatch {
            expected: model.input_dim(),
            found: corpus.dim(),
        });
    }
    if let Some(g) = guides {
        if g.dim() != model.latent_dim() {
            return Err(Error::DimMismatch {
                expected: model.latent_dim(),
                found: g.dim(),
            });
        }
    }
    let mut out = SparseEmbeddingSet::new(model.latent_dim());
    for (id, v) in corpus.iter() {
        let guide = guides.and_then(|g| g.get(id));
        let sr = model.sparse_representation(
            modality,
            &linalg::to_f64(v),
            guide,
            config.top_t,
            config.eps_active,
        )?;
        out.push(id, sr)?;
    }
    Ok(out)
}

/// Per-image guide vectors: the mean of the image's caption embeddings,
/// whose keys have the form `imageid#k`.
pub fn image_guidance(captions: &SparseEmbeddingSet) -> Result<SparseEmbeddingSet> {
    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (key, _) in captions.iter() {
        let image = key.rsplit_once('#').map_or(key, |(img, _)| img);
        groups.entry(image).or_default().push(key);
    }
    let mut out = SparseEmbeddingSet::new(captions.dim());
    for (image, keys) in groups {
        let keys: Vec<String> = keys.into_iter().map(str::to_owned).collect();
        let (pooled, _) = mean_pool(&keys, captions);
        out.push(image, pooled)?;
    }
    Ok(out)
}
