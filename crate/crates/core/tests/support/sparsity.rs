//! Word autoencoder trained on the 2,000 x 50 GloVe slice.

use std::path::Path;
use std::time::{Duration, Instant};

use spex::io;
use spex::sae::{export_word_sparse, sae_train, SaeTrainConfig};

pub const MAX_DENSITY: f64 = 0.20;

#[derive(Debug, Clone, Copy)]
pub struct SparsityReport {
    pub density: f64,
    pub first_rl: f64,
    pub final_rl: f64,
    pub elapsed: Duration,
}

impl SparsityReport {
    pub fn passed(&self) -> bool {
        self.density <= MAX_DENSITY && self.final_rl < self.first_rl
    }
}

/// `path` is the GloVe slice; the caller resolves it since this module is
/// shared between packages.
pub fn glove_sparsity(path: &Path) -> Result<SparsityReport, String> {
    let start = Instant::now();
    let table = io::read_word_vectors(path).map_err(|e| e.to_string())?;
    let config = SaeTrainConfig {
        latent_dim: 200,
        target_sparsity: 0.15,
        epochs: 30,
        batch_size: 64,
        ..Default::default()
    };
    let (model, trace) = sae_train(&table, &config).map_err(|e| e.to_string())?;
    let sparse = export_word_sparse(&model, &table).map_err(|e| e.to_string())?;
    Ok(SparsityReport {
        density: sparse.mean_density(),
        first_rl: trace[0].rl,
        final_rl: trace[trace.len() - 1].rl,
        elapsed: start.elapsed(),
    })
}
