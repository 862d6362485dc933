//! Model checkpoints.
//!
//! ```text
//! SAE1 | version u8 = 1 | m u32 | d u32 | enc_w (d×m) | enc_b (d) | dec_w (m×d) | dec_b (m) | config
//! BIE1 | version u8 = 1 | k u32 | d u32 | image branch | text branch | config
//! branch: enc_w (d×k) | enc_b (d) | dec_w (k×d) | dec_b (k)
//! config: len u32 | TOML text
//! ```
//!
//! Matrices are row-major little-endian `f32`.

use std::path::Path;

use super::binary::{check_magic, prefix, ByteReader, FORMAT_VERSION};
use crate::biencoder::{BiEncoderModel, BiTrainConfig, Branch};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::sae::{SaeModel, SaeTrainConfig};

pub const SAE_MAGIC: &[u8; 4] = b"SAE1";
pub const BIENCODER_MAGIC: &[u8; 4] = b"BIE1";

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Sae {
        model: SaeModel,
        config: SaeTrainConfig,
    },
    BiEncoder {
        model: BiEncoderModel,
        config: BiTrainConfig,
    },
}

impl Checkpoint {
    pub fn kind(&self) -> &'static str {
        match self {
            Checkpoint::Sae { .. } => "sae",
            Checkpoint::BiEncoder { .. } => "biencoder",
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Invalid("shape too large".into()))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_floats(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn put_config(out: &mut Vec<u8>, text: &str) -> Result<()> {
    put_u32(out, text.len())?;
    out.extend_from_slice(text.as_bytes());
    Ok(())
}

fn put_branch(out: &mut Vec<u8>, b: &Branch) {
    put_floats(out, b.enc_w.as_slice());
    put_floats(out, &b.enc_b);
    put_floats(out, b.dec_w.as_slice());
    put_floats(out, &b.dec_b);
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match ckpt {
        Checkpoint::Sae { model, config } => {
            out.extend_from_slice(SAE_MAGIC);
            out.push(FORMAT_VERSION);
            put_u32(&mut out, model.input_dim())?;
            put_u32(&mut out, model.latent_dim())?;
            put_floats(&mut out, model.enc_w.as_slice());
            put_floats(&mut out, &model.enc_b);
            put_floats(&mut out, model.dec_w.as_slice());
            put_floats(&mut out, &model.dec_b);
            let text =
                toml::to_string(config).map_err(|e| Error::Invalid(format!("config: {e}")))?;
            put_config(&mut out, &text)?;
        }
        Checkpoint::BiEncoder { model, config } => {
            out.extend_from_slice(BIENCODER_MAGIC);
            out.push(FORMAT_VERSION);
            put_u32(&mut out, model.input_dim())?;
            put_u32(&mut out, model.latent_dim())?;
            put_branch(&mut out, &model.image);
            put_branch(&mut out, &model.text);
            let text =
                toml::to_string(config).map_err(|e| Error::Invalid(format!("config: {e}")))?;
            put_config(&mut out, &text)?;
        }
    }
    Ok(out)
}

struct Decoder<'a> {
    r: ByteReader<'a>,
}

impl Decoder<'_> {
    fn shape(&mut self) -> Result<(usize, usize)> {
        let a = self
            .r
            .u32()
            .ok_or_else(|| Error::format("truncated header"))? as usize;
        let b = self
            .r
            .u32()
            .ok_or_else(|| Error::format("truncated header"))? as usize;
        if a == 0 || b == 0 {
            return Err(Error::format("shape dimensions must be positive"));
        }
        Ok((a, b))
    }

    /// Fails before allocating when the payload cannot hold `floats` values.
    fn reserve(&self, floats: usize) -> Result<()> {
        match floats.checked_mul(4) {
            Some(n) if n <= self.r.remaining() => Ok(()),
            _ => Err(Error::format("truncated parameters")),
        }
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        self.reserve(n)?;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let v = self
                .r
                .f32()
                .ok_or_else(|| Error::format("truncated parameters"))?;
            if !v.is_finite() {
                return Err(Error::format("non-finite parameter"));
            }
            out.push(v as f64);
        }
        Ok(out)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::format("shape overflow"))?;
        Ok(Matrix::from_vec(rows, cols, self.floats(n)?))
    }

    fn config<T: serde::de::DeserializeOwned>(&mut self) -> Result<T> {
        let len = self
            .r
            .u32()
            .ok_or_else(|| Error::format("truncated config"))? as usize;
        let bytes = self
            .r
            .take(len)
            .ok_or_else(|| Error::format("truncated config"))?;
        if self.r.remaining() > 0 {
            return Err(Error::format(format!(
                "{} trailing bytes after config",
                self.r.remaining()
            )));
        }
        let text = std::str::from_utf8(bytes).map_err(|_| Error::format("config is not UTF-8"))?;
        toml::from_str(text).map_err(|e| Error::format(format!("config: {}", e.message())))
    }

    fn branch(&mut self, k: usize, d: usize) -> Result<Branch> {
        Ok(Branch {
            enc_w: self.matrix(d, k)?,
            enc_b: self.floats(d)?,
            dec_w: self.matrix(k, d)?,
            dec_b: self.floats(k)?,
        })
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let kind = bytes
        .get(..4)
        .ok_or_else(|| Error::format("truncated header"))?;
    let magic = if kind == SAE_MAGIC {
        SAE_MAGIC
    } else if kind == BIENCODER_MAGIC {
        BIENCODER_MAGIC
    } else {
        return Err(Error::format("bad magic"));
    };
    let mut dec = Decoder {
        r: ByteReader::new(bytes),
    };
    let version = check_magic(&mut dec.r, magic)?;
    if version != FORMAT_VERSION {
        return Err(Error::format(format!("unsupported version {version}")));
    }
    let (input, latent) = dec.shape()?;
    if magic == SAE_MAGIC {
        let (m, d) = (input, latent);
        let model = SaeModel {
            enc_w: dec.matrix(d, m)?,
            enc_b: dec.floats(d)?,
            dec_w: dec.matrix(m, d)?,
            dec_b: dec.floats(m)?,
        };
        let config: SaeTrainConfig = dec.config()?;
        config
            .validate()
            .map_err(|e| Error::format(format!("config: {e}")))?;
        if config.latent_dim != d {
            return Err(Error::format(format!(
                "config latent_dim {} disagrees with shape {d}",
                config.latent_dim
            )));
        }
        Ok(Checkpoint::Sae { model, config })
    } else {
        let (k, d) = (input, latent);
        if d <= k {
            return Err(Error::format(format!(
                "latent dimension {d} must exceed input dimension {k}"
            )));
        }
        let image = dec.branch(k, d)?;
        let text = dec.branch(k, d)?;
        let config: BiTrainConfig = dec.config()?;
        config
            .validate()
            .map_err(|e| Error::format(format!("config: {e}")))?;
        if config.latent_dim != d {
            return Err(Error::format(format!(
                "config latent_dim {} disagrees with shape {d}",
                config.latent_dim
            )));
        }
        Ok(Checkpoint::BiEncoder {
            model: BiEncoderModel { image, text },
            config,
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ckpt)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| prefix(path, e))
}

pub fn load_sae(path: &Path) -> Result<(SaeModel, SaeTrainConfig)> {
    match load_checkpoint(path)? {
        Checkpoint::Sae { model, config } => Ok((model, config)),
        other => Err(Error::Format(format!(
            "{}: expected an sae checkpoint, found {}",
            path.display(),
            other.kind()
        ))),
    }
}

pub fn load_biencoder(path: &Path) -> Result<(BiEncoderModel, BiTrainConfig)> {
    match load_checkpoint(path)? {
        Checkpoint::BiEncoder { model, config } => Ok((model, config)),
        other => Err(Error::Format(format!(
            "{}: expected a biencoder checkpoint, found {}",
            path.display(),
            other.kind()
        ))),
    }
}
