//! Central finite-difference checks of the analytic gradients.
//!
//! Parameters are perturbed one at a time by ±STEP in f64 and the loss
//! difference is compared with the analytic component. Points where any
//! pre-activation sits within KINK_MARGIN of a ReLU or clamp corner are
//! redrawn, since a ±STEP move could cross the corner and the difference
//! would then measure a different branch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spex::biencoder::{
    batch_masks, bi_grad, bi_loss, BiEncoderModel, BiTrainConfig, ContrastiveOn, PairExample,
    Pairing,
};
use spex::sae::{sae_grad, sae_loss, SaeModel};
use spex::SparseVector;

pub const STEP: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor for the relative error, so components that are
/// zero up to rounding are judged on absolute error instead.
pub const FLOOR: f64 = 1e-6;
pub const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, Default)]
pub struct GradReport {
    pub points: usize,
    pub components: usize,
    pub redrawn: usize,
    pub max_relative_error: f64,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < TOLERANCE
    }

    fn compare(&mut self, analytic: f64, numeric: f64) {
        let denom = analytic.abs().max(numeric.abs()).max(FLOOR);
        let rel = (analytic - numeric).abs() / denom;
        self.max_relative_error = self.max_relative_error.max(rel);
        self.components += 1;
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| rng.random_range(-1.0..1.0) * scale)
        .collect()
}

fn near_kink(pre: &[f64], corners: &[f64]) -> bool {
    pre.iter()
        .any(|p| corners.iter().any(|c| (p - c).abs() < KINK_MARGIN))
}

fn sae_point(rng: &mut ChaCha8Rng) -> Option<(SaeModel, Vec<Vec<f64>>, f64)> {
    let m = rng.random_range(3..=6);
    let d = rng.random_range(4..=10);
    let mut model = SaeModel::init(m, d, rng.random()).ok()?;
    for b in model.enc_b.iter_mut() {
        *b = rng.random_range(0.0..0.6);
    }
    for b in model.dec_b.iter_mut() {
        *b = rng.random_range(-0.2..0.2);
    }
    let n = rng.random_range(2..=6);
    let batch: Vec<Vec<f64>> = (0..n).map(|_| gaussian_vec(rng, m, 1.5)).collect();
    for w in &batch {
        let pre = model.enc_w.affine(w, &model.enc_b);
        if near_kink(&pre, &[0.0, 1.0]) {
            return None;
        }
    }
    let target = rng.random_range(0.01..0.3);
    // ASL has its own corner at ρ_h = ρ*.
    let latents: Vec<Vec<f64>> = batch
        .iter()
        .map(|w| model.encode_dense(w).unwrap())
        .collect();
    for h in 0..d {
        let rho = latents.iter().map(|z| z[h]).sum::<f64>() / n as f64;
        if (rho - target).abs() < KINK_MARGIN {
            return None;
        }
    }
    Some((model, batch, target))
}

/// Checks the word autoencoder's total-loss gradient at `points` seeded
/// random (model, batch) points.
pub fn check_sae(points: usize, seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradReport::default();
    while report.points < points {
        let Some((model, batch, target)) = sae_point(&mut rng) else {
            report.redrawn += 1;
            continue;
        };
        let (grad, _) = sae_grad(&model, &batch, target).unwrap();
        let analytic = [
            grad.enc_w.as_slice(),
            &grad.enc_b,
            grad.dec_w.as_slice(),
            &grad.dec_b,
        ];
        for (block, g_block) in analytic.iter().enumerate() {
            for (i, &g) in g_block.iter().enumerate() {
                let loss_at = |delta: f64| {
                    let mut m = model.clone();
                    let p = match block {
                        0 => &mut m.enc_w.as_mut_slice()[i],
                        1 => &mut m.enc_b[i],
                        2 => &mut m.dec_w.as_mut_slice()[i],
                        _ => &mut m.dec_b[i],
                    };
                    *p += delta;
                    sae_loss(&m, &batch, target).unwrap().total
                };
                let numeric = (loss_at(STEP) - loss_at(-STEP)) / (2.0 * STEP);
                report.compare(g, numeric);
            }
        }
        report.points += 1;
    }
    report
}

fn bi_point(
    rng: &mut ChaCha8Rng,
    index: usize,
) -> Option<(BiEncoderModel, Vec<PairExample>, BiTrainConfig)> {
    let k = rng.random_range(3..=5);
    let d = k + rng.random_range(2..=5);
    let model = BiEncoderModel::init(k, d, rng.random()).ok()?;
    let n = rng.random_range(2..=4);
    let config = BiTrainConfig {
        latent_dim: d,
        top_t: rng.random_range(1..=d),
        eps_active: 0.1,
        lambda: rng.random_range(0.1..2.0),
        tau: rng.random_range(0.1..1.0),
        pairing: if index.is_multiple_of(2) {
            Pairing::Cross
        } else {
            Pairing::Same
        },
        contrastive_on: if index % 4 < 2 {
            ContrastiveOn::Sr
        } else {
            ContrastiveOn::Latent
        },
        ..Default::default()
    };
    let mut examples = Vec::with_capacity(n);
    for _ in 0..n {
        let image = gaussian_vec(rng, k, 1.0);
        let text = gaussian_vec(rng, k, 1.0);
        let dense: Vec<f64> = (0..d)
            .map(|_| {
                if rng.random::<f64>() < 0.3 {
                    rng.random_range(0.2..1.0)
                } else {
                    0.0
                }
            })
            .collect();
        for input in [&image, &text] {
            let pre = model.image.enc_w.affine(input, &model.image.enc_b);
            let pre_t = model.text.enc_w.affine(input, &model.text.enc_b);
            if near_kink(&pre, &[0.0]) || near_kink(&pre_t, &[0.0]) {
                return None;
            }
        }
        examples.push(PairExample {
            image,
            text,
            caption: SparseVector::from_dense(&dense),
        });
    }
    Some((model, examples, config))
}

/// Same check for the encoder pair's `RL + λ·CL`, masks computed once at the
/// unperturbed point and then held fixed. Points alternate between the two
/// pairings and the two contrastive inputs.
pub fn check_biencoder(points: usize, seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradReport::default();
    while report.points < points {
        let Some((model, examples, config)) = bi_point(&mut rng, report.points) else {
            report.redrawn += 1;
            continue;
        };
        let batch: Vec<&PairExample> = examples.iter().collect();
        let masks = batch_masks(&model, &batch, &config).unwrap();
        let Ok((grad, _)) = bi_grad(&model, &batch, &masks, &config) else {
            report.redrawn += 1;
            continue;
        };
        for side in 0..2 {
            let g_branch = if side == 0 { &grad.image } else { &grad.text };
            for (block, g_block) in g_branch.params().iter().enumerate() {
                for (i, &g) in g_block.iter().enumerate() {
                    let loss_at = |delta: f64| {
                        let mut m = model.clone();
                        let branch = if side == 0 { &mut m.image } else { &mut m.text };
                        branch.params_mut()[block][i] += delta;
                        bi_loss(&m, &batch, &masks, &config).unwrap().total
                    };
                    let numeric = (loss_at(STEP) - loss_at(-STEP)) / (2.0 * STEP);
                    report.compare(g, numeric);
                }
            }
        }
        report.points += 1;
    }
    report
}
