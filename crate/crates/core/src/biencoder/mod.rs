//! Paired image/text encoder-decoders producing masked sparse representations.
//!
//! Each modality has an affine ReLU encoder from the `k`-dimensional dense
//! embedding to a `d`-dimensional latent (`d > k`) and a linear decoder back.
//! The sparse representation of an item keeps the latent values on the union
//! of its top-`t` dimensions and the active dimensions of the caption
//! embedding that guides it.

mod loss;
mod mask;
mod train;

pub use loss::{contrastive_with_grad, cosine, loss_contrastive, loss_recon_pair, Pairing};
pub use mask::{active_mask, sparsify, topt_mask, union_mask, IndexMask};
pub use train::{
    batch_masks, bi_grad, bi_loss, bi_train, bi_train_step, encode_corpus, image_guidance,
    BatchMasks, BiGradient, BiLoss, PairExample, TrainingPair,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::SparseVector;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// One modality's encoder and decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    /// d × k
    pub enc_w: Matrix,
    pub enc_b: Vec<f64>,
    /// k × d
    pub dec_w: Matrix,
    pub dec_b: Vec<f64>,
}

impl Branch {
    fn init(k: usize, d: usize, rng: &mut ChaCha8Rng) -> Self {
        let enc_w = Matrix::uniform(d, k, 1.0 / (k as f64).sqrt(), rng);
        let dec_w = Matrix::uniform(k, d, 1.0 / (d as f64).sqrt(), rng);
        Branch {
            enc_w,
            enc_b: vec![0.0; d],
            dec_w,
            dec_b: vec![0.0; k],
        }
    }

    pub(crate) fn zeros_like(&self) -> Self {
        Branch {
            enc_w: Matrix::zeros(self.enc_w.rows(), self.enc_w.cols()),
            enc_b: vec![0.0; self.enc_b.len()],
            dec_w: Matrix::zeros(self.dec_w.rows(), self.dec_w.cols()),
            dec_b: vec![0.0; self.dec_b.len()],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.enc_w.cols()
    }

    pub fn latent_dim(&self) -> usize {
        self.enc_w.rows()
    }

    /// All parameter blocks, in checkpoint order.
    pub fn params_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.enc_w.as_mut_slice(),
            &mut self.enc_b,
            self.dec_w.as_mut_slice(),
            &mut self.dec_b,
        ]
    }

    pub fn params(&self) -> [&[f64]; 4] {
        [
            self.enc_w.as_slice(),
            &self.enc_b,
            self.dec_w.as_slice(),
            &self.dec_b,
        ]
    }

    pub(crate) fn pre_activation(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::DimMismatch {
                expected: self.input_dim(),
                found: input.len(),
            });
        }
        Ok(self.enc_w.affine(input, &self.enc_b))
    }

    /// `ReLU(W_enc·x + b_enc)`
    pub fn encode(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .pre_activation(input)?
            .into_iter()
            .map(|v| v.max(0.0))
            .collect())
    }

    /// `W_dec·z + b_dec`
    pub fn decode(&self, latent: &[f64]) -> Result<Vec<f64>> {
        if latent.len() != self.latent_dim() {
            return Err(Error::DimMismatch {
                expected: self.latent_dim(),
                found: latent.len(),
            });
        }
        Ok(self.dec_w.affine(latent, &self.dec_b))
    }

    pub fn is_finite(&self) -> bool {
        self.params()
            .iter()
            .all(|p| p.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Text,
}

impl std::str::FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "image" => Ok(Modality::Image),
            "text" => Ok(Modality::Text),
            other => Err(format!("expected image or text, found {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiEncoderModel {
    pub image: Branch,
    pub text: Branch,
}

impl BiEncoderModel {
    /// Seeded init; the two branches draw from independent streams.
    pub fn init(k: usize, d: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::Invalid("k must be positive".into()));
        }
        if d <= k {
            return Err(Error::Invalid("d must exceed k".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let image = Branch::init(k, d, &mut rng);
        rng.set_stream(1);
        rng.set_word_pos(0);
        let text = Branch::init(k, d, &mut rng);
        Ok(BiEncoderModel { image, text })
    }

    pub fn input_dim(&self) -> usize {
        self.image.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.image.latent_dim()
    }

    pub fn branch(&self, modality: Modality) -> &Branch {
        match modality {
            Modality::Image => &self.image,
            Modality::Text => &self.text,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.image.is_finite() && self.text.is_finite()
    }

    /// Sparse representation of one dense embedding: latent values kept on
    /// `top_t(latent) ∪ active(guide)`.
    pub fn sparse_representation(
        &self,
        modality: Modality,
        input: &[f64],
        guide: Option<&SparseVector>,
        top_t: usize,
        eps_active: f64,
    ) -> Result<SparseVector> {
        let latent = self.branch(modality).encode(input)?;
        let mut mask = topt_mask(&latent, top_t);
        if let Some(g) = guide {
            mask = union_mask(&mask, &active_mask(g, eps_active))?;
        }
        sparsify(&latent, &mask)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ContrastiveOn {
    /// Masked sparse representations.
    #[default]
    Sr,
    /// Unmasked latents.
    Latent,
}

impl std::str::FromStr for ContrastiveOn {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sr" => Ok(ContrastiveOn::Sr),
            "latent" => Ok(ContrastiveOn::Latent),
            other => Err(format!("expected sr or latent, found {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiTrainConfig {
    pub latent_dim: usize,
    pub top_t: usize,
    pub eps_active: f64,
    pub lambda: f64,
    pub tau: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub pairing: Pairing,
    pub contrastive_on: ContrastiveOn,
}

impl Default for BiTrainConfig {
    fn default() -> Self {
        BiTrainConfig {
            latent_dim: 1000,
            top_t: 64,
            eps_active: 0.1,
            lambda: 1.0,
            tau: 0.07,
            learning_rate: 0.05,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            pairing: Pairing::Cross,
            contrastive_on: ContrastiveOn::Sr,
        }
    }
}

impl BiTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(m.to_string()));
        if self.latent_dim == 0 {
            return bad("bi.latent_dim must be positive");
        }
        if self.top_t == 0 || self.top_t > self.latent_dim {
            return bad("bi.top_t must lie in [1, latent_dim]");
        }
        if !(self.eps_active > 0.0 && self.eps_active < 1.0) {
            return bad("bi.eps_active must lie in (0, 1)");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("bi.lambda must be non-negative");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("bi.tau must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("bi.learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("bi.epochs must be positive");
        }
        if self.batch_size < 2 {
            return bad("bi.batch_size must be at least 2");
        }
        Ok(())
    }
}
