//! Sparse word autoencoder.
//!
//! Maps `m`-dimensional pretrained word vectors to `d`-dimensional latents in
//! `[0, 1]` through a capped ReLU, decodes them linearly, and trains on the sum
//! of a reconstruction loss, an average-sparsity hinge and a partial-sparsity
//! penalty `z(1 - z)`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{SparseEmbeddingSet, SparseVector, WordEmbeddingTable};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SaeModel {
    /// d × m
    pub enc_w: Matrix,
    pub enc_b: Vec<f64>,
    /// m × d
    pub dec_w: Matrix,
    pub dec_b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaeTrainConfig {
    pub latent_dim: usize,
    pub target_sparsity: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SaeTrainConfig {
    fn default() -> Self {
        SaeTrainConfig {
            latent_dim: 1000,
            target_sparsity: 0.15,
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl SaeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Invalid("sae.latent_dim must be positive".into()));
        }
        if !(self.target_sparsity > 0.0 && self.target_sparsity < 1.0) {
            return Err(Error::Invalid(
                "sae.target_sparsity must lie in (0, 1)".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid("sae.learning_rate must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Invalid(
                "sae.epochs and sae.batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossBreakdown {
    pub rl: f64,
    pub asl: f64,
    pub psl: f64,
    pub total: f64,
}

/// Gradient of the total loss with respect to every model parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeGradient {
    pub enc_w: Matrix,
    pub enc_b: Vec<f64>,
    pub dec_w: Matrix,
    pub dec_b: Vec<f64>,
}

impl SaeModel {
    /// Seeded uniform initialization with zero biases.
    pub fn init(input_dim: usize, latent_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || latent_dim == 0 {
            return Err(Error::Invalid("sae dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc_w = Matrix::uniform(
            latent_dim,
            input_dim,
            1.0 / (input_dim as f64).sqrt(),
            &mut rng,
        );
        let dec_w = Matrix::uniform(
            input_dim,
            latent_dim,
            1.0 / (latent_dim as f64).sqrt(),
            &mut rng,
        );
        Ok(SaeModel {
            enc_w,
            enc_b: vec![0.0; latent_dim],
            dec_w,
            dec_b: vec![0.0; input_dim],
        })
    }

    pub fn input_dim(&self) -> usize {
        self.enc_w.cols()
    }

    pub fn latent_dim(&self) -> usize {
        self.enc_w.rows()
    }

    pub fn is_finite(&self) -> bool {
        self.enc_w.is_finite()
            && self.dec_w.is_finite()
            && self.enc_b.iter().chain(&self.dec_b).all(|v| v.is_finite())
    }

    fn pre_activation(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.input_dim() {
            return Err(Error::DimMismatch {
                expected: self.input_dim(),
                found: w.len(),
            });
        }
        Ok(self.enc_w.affine(w, &self.enc_b))
    }

    /// Dense latent `clamp(W_enc·w + b_enc, 0, 1)`.
    pub fn encode_dense(&self, w: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .pre_activation(w)?
            .into_iter()
            .map(|p| p.clamp(0.0, 1.0))
            .collect())
    }

    pub fn encode(&self, w: &[f64]) -> Result<SparseVector> {
        Ok(SparseVector::from_dense(&self.encode_dense(w)?))
    }

    pub fn decode_dense(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.latent_dim() {
            return Err(Error::DimMismatch {
                expected: self.latent_dim(),
                found: z.len(),
            });
        }
        Ok(self.dec_w.affine(z, &self.dec_b))
    }

    pub fn decode(&self, z: &SparseVector) -> Result<Vec<f64>> {
        if z.dim() != self.latent_dim() {
            return Err(Error::DimMismatch {
                expected: self.latent_dim(),
                found: z.dim(),
            });
        }
        let mut out = self.dec_b.clone();
        for (h, v) in z.iter() {
            for (r, o) in out.iter_mut().enumerate() {
                *o += self.dec_w.get(r, h) * v as f64;
            }
        }
        Ok(out)
    }
}

/// Mean squared reconstruction error over the batch.
pub fn loss_rl(inputs: &[Vec<f64>], reconstructions: &[Vec<f64>]) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if inputs.len() != reconstructions.len() {
        return Err(Error::DimMismatch {
            expected: inputs.len(),
            found: reconstructions.len(),
        });
    }
    let mut total = 0.0;
    for (w, r) in inputs.iter().zip(reconstructions) {
        if w.len() != r.len() {
            return Err(Error::DimMismatch {
                expected: w.len(),
                found: r.len(),
            });
        }
        total += linalg::squared_distance(r, w);
    }
    Ok(total / inputs.len() as f64)
}

/// Batch-mean activation of every latent dimension.
fn mean_activation(latents: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = latents.first() else {
        return Err(Error::Empty("batch"));
    };
    let mut rho = vec![0.0; first.len()];
    for z in latents {
        if z.len() != rho.len() {
            return Err(Error::DimMismatch {
                expected: rho.len(),
                found: z.len(),
            });
        }
        for (r, v) in rho.iter_mut().zip(z) {
            *r += v;
        }
    }
    let n = latents.len() as f64;
    rho.iter_mut().for_each(|r| *r /= n);
    Ok(rho)
}

/// `Σ_h max(0, ρ_h − ρ*)²` with `ρ_h` the batch mean of latent `h`.
pub fn loss_asl(latents: &[Vec<f64>], target: f64) -> Result<f64> {
    let rho = mean_activation(latents)?;
    Ok(rho.iter().map(|&r| (r - target).max(0.0).powi(2)).sum())
}

/// Batch mean of `Σ_h z_h (1 − z_h)`. Latents must lie in `[0, 1]`.
pub fn loss_psl(latents: &[Vec<f64>]) -> Result<f64> {
    if latents.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut total = 0.0;
    for z in latents {
        for &v in z {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Invalid(format!("latent value {v} outside [0, 1]")));
            }
            total += v * (1.0 - v);
        }
    }
    Ok(total / latents.len() as f64)
}

fn finite(value: f64, term: &'static str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { term })
    }
}

/// Forward pass over a batch: all three losses and their sum.
pub fn sae_loss(model: &SaeModel, batch: &[Vec<f64>], target: f64) -> Result<LossBreakdown> {
    let latents = batch
        .iter()
        .map(|w| model.encode_dense(w))
        .collect::<Result<Vec<_>>>()?;
    let recons = latents
        .iter()
        .map(|z| model.decode_dense(z))
        .collect::<Result<Vec<_>>>()?;
    let rl = finite(loss_rl(batch, &recons)?, "rl")?;
    let asl = finite(loss_asl(&latents, target)?, "asl")?;
    let psl = finite(loss_psl(&latents)?, "psl")?;
    Ok(LossBreakdown {
        rl,
        asl,
        psl,
        total: rl + asl + psl,
    })
}

/// Analytic gradient of `RL + ASL + PSL`.
///
/// The clamp passes gradient only where the pre-activation lies strictly
/// inside `(0, 1)`.
pub fn sae_grad(
    model: &SaeModel,
    batch: &[Vec<f64>],
    target: f64,
) -> Result<(SaeGradient, LossBreakdown)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let n = batch.len() as f64;
    let pre = batch
        .iter()
        .map(|w| model.pre_activation(w))
        .collect::<Result<Vec<_>>>()?;
    let latents: Vec<Vec<f64>> = pre
        .iter()
        .map(|p| p.iter().map(|v| v.clamp(0.0, 1.0)).collect())
        .collect();
    let recons: Vec<Vec<f64>> = latents
        .iter()
        .map(|z| model.dec_w.affine(z, &model.dec_b))
        .collect();

    let rl = finite(loss_rl(batch, &recons)?, "rl")?;
    let asl = finite(loss_asl(&latents, target)?, "asl")?;
    let psl = finite(loss_psl(&latents)?, "psl")?;
    let rho = mean_activation(&latents)?;
    let asl_slope: Vec<f64> = rho
        .iter()
        .map(|&r| 2.0 * (r - target).max(0.0) / n)
        .collect();

    let mut grad = SaeGradient {
        enc_w: Matrix::zeros(model.enc_w.rows(), model.enc_w.cols()),
        enc_b: vec![0.0; model.enc_b.len()],
        dec_w: Matrix::zeros(model.dec_w.rows(), model.dec_w.cols()),
        dec_b: vec![0.0; model.dec_b.len()],
    };
    for (((w, p), z), r) in batch.iter().zip(&pre).zip(&latents).zip(&recons) {
        let g_out: Vec<f64> = r.iter().zip(w).map(|(r, w)| 2.0 * (r - w) / n).collect();
        grad.dec_w.add_outer(&g_out, z);
        for (b, g) in grad.dec_b.iter_mut().zip(&g_out) {
            *b += g;
        }
        let mut g_z = model.dec_w.transpose_mul(&g_out);
        for (h, gz) in g_z.iter_mut().enumerate() {
            let inside = p[h] > 0.0 && p[h] < 1.0;
            *gz = if inside {
                *gz + (1.0 - 2.0 * z[h]) / n + asl_slope[h]
            } else {
                0.0
            };
        }
        grad.enc_w.add_outer(&g_z, w);
        for (b, g) in grad.enc_b.iter_mut().zip(&g_z) {
            *b += g;
        }
    }
    Ok((
        grad,
        LossBreakdown {
            rl,
            asl,
            psl,
            total: rl + asl + psl,
        },
    ))
}

pub fn apply_gradient(model: &mut SaeModel, grad: &SaeGradient, lr: f64) {
    linalg::sgd_step(model.enc_w.as_mut_slice(), grad.enc_w.as_slice(), lr);
    linalg::sgd_step(&mut model.enc_b, &grad.enc_b, lr);
    linalg::sgd_step(model.dec_w.as_mut_slice(), grad.dec_w.as_slice(), lr);
    linalg::sgd_step(&mut model.dec_b, &grad.dec_b, lr);
}

/// Mini-batch SGD over the whole table. Returns the model and the per-epoch
/// sample-weighted mean losses.
pub fn sae_train(
    table: &WordEmbeddingTable,
    config: &SaeTrainConfig,
) -> Result<(SaeModel, Vec<LossBreakdown>)> {
    config.validate()?;
    if table.len() < config.batch_size {
        return Err(Error::Invalid(format!(
            "batch size {} exceeds table size {}",
            config.batch_size,
            table.len()
        )));
    }
    let data: Vec<Vec<f64>> = table.iter().map(|(_, v)| linalg::to_f64(v)).collect();
    let mut model = SaeModel::init(table.dim(), config.latent_dim, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    let mut batch = Vec::with_capacity(config.batch_size);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossBreakdown::default();
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i].clone()));
            let (grad, loss) =
                sae_grad(&model, &batch, config.target_sparsity).map_err(|e| match e {
                    Error::NonFinite { term } => Error::Diverged { epoch, term },
                    other => other,
                })?;
            let w = chunk.len() as f64;
            sum.rl += loss.rl * w;
            sum.asl += loss.asl * w;
            sum.psl += loss.psl * w;
            apply_gradient(&mut model, &grad, config.learning_rate);
        }
        let n = data.len() as f64;
        let epoch_loss = LossBreakdown {
            rl: sum.rl / n,
            asl: sum.asl / n,
            psl: sum.psl / n,
            total: (sum.rl + sum.asl + sum.psl) / n,
        };
        if !epoch_loss.total.is_finite() || !model.is_finite() {
            return Err(Error::Diverged {
                epoch,
                term: "total",
            });
        }
        log::debug!(
            "sae epoch {epoch}: rl={:.5} asl={:.5} psl={:.5} total={:.5}",
            epoch_loss.rl,
            epoch_loss.asl,
            epoch_loss.psl,
            epoch_loss.total
        );
        trace.push(epoch_loss);
    }
    Ok((model, trace))
}

/// Sparse word embeddings for every token of the table.
pub fn export_word_sparse(
    model: &SaeModel,
    table: &WordEmbeddingTable,
) -> Result<SparseEmbeddingSet> {
    let mut set = SparseEmbeddingSet::new(model.latent_dim());
    for (token, v) in table.iter() {
        set.push(token, model.encode(&linalg::to_f64(v))?)?;
    }
    Ok(set)
}
