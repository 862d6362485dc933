use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, squared_distance};

/// Which reconstruction each modality's input is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Pairing {
    /// Image input against the text reconstruction and vice versa.
    #[default]
    Cross,
    /// Each input against its own reconstruction.
    Same,
}

impl std::str::FromStr for Pairing {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cross" => Ok(Pairing::Cross),
            "same" => Ok(Pairing::Same),
            other => Err(format!("expected cross or same, found {other:?}")),
        }
    }
}

fn check_len(expected: usize, v: &[f64]) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimMismatch {
            expected,
            found: v.len(),
        });
    }
    Ok(())
}

/// Reconstruction loss of a single image/text pair.
pub fn loss_recon_pair(
    image: &[f64],
    text: &[f64],
    image_hat: &[f64],
    text_hat: &[f64],
    pairing: Pairing,
) -> Result<f64> {
    let k = image.len();
    check_len(k, text)?;
    check_len(k, image_hat)?;
    check_len(k, text_hat)?;
    Ok(match pairing {
        Pairing::Cross => squared_distance(image, text_hat) + squared_distance(text, image_hat),
        Pairing::Same => squared_distance(image, image_hat) + squared_distance(text, text_hat),
    })
}

/// Cosine similarity, defined as 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn similarity_matrix(images: &[Vec<f64>], texts: &[Vec<f64>], tau: f64) -> Result<Vec<Vec<f64>>> {
    if images.len() != texts.len() {
        return Err(Error::DimMismatch {
            expected: images.len(),
            found: texts.len(),
        });
    }
    if images.len() < 2 {
        return Err(Error::Invalid(format!(
            "contrastive loss needs at least 2 pairs, got {}",
            images.len()
        )));
    }
    // Also rejects NaN.
    if tau.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::Invalid("temperature must be positive".into()));
    }
    Ok(images
        .iter()
        .map(|u| texts.iter().map(|v| cosine(u, v) / tau).collect())
        .collect())
}

/// Symmetric contrastive loss over aligned image/text vectors.
///
/// `S_ij = cos(image_i, text_j) / tau`; the loss averages the negative log
/// softmax of each diagonal entry taken along its row and along its column.
pub fn loss_contrastive(images: &[Vec<f64>], texts: &[Vec<f64>], tau: f64) -> Result<f64> {
    let s = similarity_matrix(images, texts, tau)?;
    let n = s.len();
    let mut total = 0.0;
    for (i, row) in s.iter().enumerate() {
        total += row[i] - log_sum_exp(row.iter().copied());
        total += row[i] - log_sum_exp(s.iter().map(|r| r[i]));
    }
    Ok(-total / (2.0 * n as f64))
}

/// Loss, then its gradient with respect to every image and every text vector.
pub type ContrastiveGrad = (f64, Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Loss and its gradient with respect to every image and text vector.
pub fn contrastive_with_grad(
    images: &[Vec<f64>],
    texts: &[Vec<f64>],
    tau: f64,
) -> Result<ContrastiveGrad> {
    let s = similarity_matrix(images, texts, tau)?;
    let n = s.len();
    let row_lse: Vec<f64> = s
        .iter()
        .map(|row| log_sum_exp(row.iter().copied()))
        .collect();
    let col_lse: Vec<f64> = (0..n)
        .map(|j| log_sum_exp((0..n).map(|i| s[i][j])))
        .collect();
    let mut total = 0.0;
    for i in 0..n {
        total += 2.0 * s[i][i] - row_lse[i] - col_lse[i];
    }
    let loss = -total / (2.0 * n as f64);

    // dL/dS_ij = (P_ij + Q_ij - 2 δ_ij) / 2n, P row softmax, Q column softmax.
    let scale = 1.0 / (2.0 * n as f64);
    let dim = images.first().map_or(0, |v| v.len());
    let mut g_img = vec![vec![0.0; dim]; n];
    let mut g_txt = vec![vec![0.0; texts.first().map_or(0, |v| v.len())]; n];
    let img_norm: Vec<f64> = images.iter().map(|v| norm(v)).collect();
    let txt_norm: Vec<f64> = texts.iter().map(|v| norm(v)).collect();
    for i in 0..n {
        for j in 0..n {
            let p = (s[i][j] - row_lse[i]).exp();
            let q = (s[i][j] - col_lse[j]).exp();
            let delta = if i == j { 2.0 } else { 0.0 };
            let g = scale * (p + q - delta) / tau;
            if g == 0.0 || img_norm[i] == 0.0 || txt_norm[j] == 0.0 {
                continue;
            }
            let u = &images[i];
            let v = &texts[j];
            let c = dot(u, v) / (img_norm[i] * txt_norm[j]);
            let inv = 1.0 / (img_norm[i] * txt_norm[j]);
            let cu = c / (img_norm[i] * img_norm[i]);
            let cv = c / (txt_norm[j] * txt_norm[j]);
            for d in 0..u.len() {
                g_img[i][d] += g * (v[d] * inv - cu * u[d]);
                g_txt[j][d] += g * (u[d] * inv - cv * v[d]);
            }
        }
    }
    Ok((loss, g_img, g_txt))
}
