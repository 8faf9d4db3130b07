//! Hashed-average → linear → tanh text encoder.
//!
//! `encode(t) = tanh(W · a + bias)` where `a` is the weight-averaged
//! embedding-table row of every hashed n-gram of `t`.
//!
//! # Serialized layout (`RENC`, version 1, little-endian)
//!
//! ```text
//! magic "RENC" | u32 version | u64 config hash
//! u64 buckets | u32 embed_dim | u32 out_dim
//! u32 n_orders | n_orders × u32 | u32 lowercase | u32 max_tokens
//! buckets×embed_dim f32 table (row-major) | out_dim×embed_dim f32 W (row-major) | out_dim f32 bias
//! u64 FNV-1a of every preceding byte
//! ```

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DenseError, EmbeddingVector};
use crate::binio::{ByteReader, ByteWriter, FormatError};
use crate::text::{fnv1a64, hash_features, tokenize, Fnv1a, HashedFeatureVector, TokenizerConfig};

pub const ENCODER_MAGIC: &[u8; 4] = b"RENC";
pub const ENCODER_VERSION: u32 = 1;

const INIT_RANGE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Rows of the embedding table (hash buckets).
    pub buckets: usize,
    pub embed_dim: usize,
    pub out_dim: usize,
    pub ngram_orders: Vec<usize>,
    pub tokenizer: TokenizerConfig,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            buckets: 1 << 15,
            embed_dim: 256,
            out_dim: 256,
            ngram_orders: vec![1, 2],
            tokenizer: TokenizerConfig::default(),
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), DenseError> {
        let bad = |m: &str| Err(DenseError::InvalidConfig(m.to_string()));
        if self.buckets < 2 || self.buckets > u32::MAX as usize {
            return bad("buckets must be in [2, 2^32)");
        }
        if self.embed_dim == 0 || self.out_dim == 0 {
            return bad("dimensions must be positive");
        }
        if self.ngram_orders.is_empty() || self.ngram_orders.contains(&0) {
            return bad("ngram orders must be non-empty and positive");
        }
        if self.tokenizer.max_tokens == 0 {
            return bad("max_tokens must be at least 1");
        }
        Ok(())
    }

    pub fn config_hash(&self) -> u64 {
        let mut h = Fnv1a::default();
        h.write(ENCODER_MAGIC);
        h.write(&(self.buckets as u64).to_le_bytes());
        h.write(&(self.embed_dim as u64).to_le_bytes());
        h.write(&(self.out_dim as u64).to_le_bytes());
        for &n in &self.ngram_orders {
            h.write(&(n as u64).to_le_bytes());
        }
        h.write(&[self.tokenizer.lowercase as u8]);
        h.write(&(self.tokenizer.max_tokens as u64).to_le_bytes());
        h.finish()
    }

    /// Hashed features of `text`, or `EmptyText` if it has no tokens.
    pub fn features(&self, text: &str) -> Result<HashedFeatureVector, DenseError> {
        let tokens = tokenize(text, &self.tokenizer);
        if tokens.is_empty() {
            return Err(DenseError::EmptyText(text.to_string()));
        }
        Ok(hash_features(&tokens, self.buckets, &self.ngram_orders))
    }
}

/// Parameters of one encoder. Values are kept in f64 for training and
/// rounded to f32 whenever they are persisted.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    /// `buckets × embed_dim`, row-major.
    pub embedding_table: Vec<f64>,
    /// `out_dim × embed_dim`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub(crate) struct Forward {
    /// `(bucket, weight / total weight)`.
    pub features: Vec<(u32, f64)>,
    pub averaged: Vec<f64>,
    pub output: Vec<f64>,
}

impl EncoderParams {
    pub fn zeros(config: EncoderConfig) -> Result<Self, DenseError> {
        config.validate()?;
        Ok(Self {
            embedding_table: vec![0.0; config.buckets * config.embed_dim],
            weight: vec![0.0; config.out_dim * config.embed_dim],
            bias: vec![0.0; config.out_dim],
            config,
        })
    }

    /// Table and weight uniform in (-0.05, 0.05) at f32 precision, bias zero.
    pub fn init<R: Rng>(config: EncoderConfig, rng: &mut R) -> Result<Self, DenseError> {
        let mut p = Self::zeros(config)?;
        for x in p.embedding_table.iter_mut().chain(p.weight.iter_mut()) {
            *x = f64::from(rng.gen_range(-INIT_RANGE..INIT_RANGE) as f32);
        }
        Ok(p)
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    pub fn out_dim(&self) -> usize {
        self.config.out_dim
    }

    pub fn num_params(&self) -> usize {
        self.embedding_table.len() + self.weight.len() + self.bias.len()
    }

    pub fn is_finite(&self) -> bool {
        self.embedding_table
            .iter()
            .chain(&self.weight)
            .chain(&self.bias)
            .all(|x| x.is_finite())
    }

    /// Rounds every value to the nearest f32.
    pub fn round_to_f32(&mut self) {
        for x in self
            .embedding_table
            .iter_mut()
            .chain(self.weight.iter_mut())
            .chain(self.bias.iter_mut())
        {
            *x = f64::from(*x as f32);
        }
    }

    pub(crate) fn forward_features(&self, feats: &HashedFeatureVector) -> Forward {
        let de = self.embed_dim();
        let total = feats.total_weight();
        let features: Vec<(u32, f64)> = feats.entries.iter().map(|&(b, w)| (b, w / total)).collect();
        let mut averaged = vec![0.0; de];
        for &(bucket, w) in &features {
            let row = &self.embedding_table[bucket as usize * de..][..de];
            for (a, e) in averaged.iter_mut().zip(row) {
                *a += w * e;
            }
        }
        let output = self
            .weight
            .chunks_exact(de)
            .zip(&self.bias)
            .map(|(w_row, b)| (super::dot_f64(w_row, &averaged) + b).tanh())
            .collect();
        Forward {
            features,
            averaged,
            output,
        }
    }

    pub(crate) fn forward(&self, text: &str) -> Result<Forward, DenseError> {
        Ok(self.forward_features(&self.config.features(text)?))
    }

    pub fn encode(&self, text: &str) -> Result<EmbeddingVector, DenseError> {
        let fwd = self.forward(text)?;
        Ok(EmbeddingVector {
            values: fwd.output.iter().map(|&x| x as f32).collect(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut w = ByteWriter::with_header(ENCODER_MAGIC, ENCODER_VERSION);
        w.u64(c.config_hash());
        w.u64(c.buckets as u64);
        w.u32(c.embed_dim as u32);
        w.u32(c.out_dim as u32);
        w.u32(c.ngram_orders.len() as u32);
        for &n in &c.ngram_orders {
            w.u32(n as u32);
        }
        w.u32(c.tokenizer.lowercase as u32);
        w.u32(c.tokenizer.max_tokens as u32);
        for &x in self.embedding_table.iter().chain(&self.weight).chain(&self.bias) {
            w.f32(x as f32);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DenseError> {
        let mut r = ByteReader::open(bytes, ENCODER_MAGIC, ENCODER_VERSION)?;
        let stored_hash = r.u64()?;
        let buckets = r.u64()? as usize;
        let embed_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let n_orders = r.u32()? as usize;
        if n_orders > 16 {
            return Err(FormatError::Invalid(format!("{n_orders} n-gram orders")).into());
        }
        let ngram_orders = (0..n_orders).map(|_| r.u32().map(|n| n as usize)).collect::<Result<Vec<_>, _>>()?;
        let tokenizer = TokenizerConfig {
            lowercase: r.u32()? != 0,
            max_tokens: r.u32()? as usize,
        };
        let config = EncoderConfig {
            buckets,
            embed_dim,
            out_dim,
            ngram_orders,
            tokenizer,
        };
        if config.config_hash() != stored_hash {
            return Err(FormatError::Invalid("config hash does not match header fields".into()).into());
        }
        config.validate()?;
        let expected = buckets
            .checked_mul(embed_dim)
            .and_then(|t| t.checked_add(out_dim.checked_mul(embed_dim)?))
            .and_then(|t| t.checked_add(out_dim))
            .and_then(|t| t.checked_mul(4));
        if expected.is_none_or(|n| bytes.len() < n) {
            return Err(FormatError::Truncated(bytes.len()).into());
        }
        let mut read = |n: usize| -> Result<Vec<f64>, FormatError> { (0..n).map(|_| r.f32().map(f64::from)).collect() };
        let embedding_table = read(buckets * embed_dim)?;
        let weight = read(out_dim * embed_dim)?;
        let bias = read(out_dim)?;
        r.expect_end()?;
        let params = EncoderParams {
            config,
            embedding_table,
            weight,
            bias,
        };
        if !params.is_finite() {
            return Err(FormatError::Invalid("non-finite parameter".into()).into());
        }
        Ok(params)
    }

    /// FNV-1a of the serialized form; identifies the f32-rounded parameters.
    pub fn fingerprint(&self) -> u64 {
        fnv1a64(&self.to_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<(), DenseError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DenseError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> EncoderConfig {
        EncoderConfig {
            buckets: 64,
            embed_dim: 8,
            out_dim: 6,
            ..EncoderConfig::default()
        }
    }

    #[test]
    fn zero_params_encode_to_zero() {
        let p = EncoderParams::zeros(small()).unwrap();
        let v = p.encode("a group of kids are dancing").unwrap();
        assert_eq!(v.values, vec![0.0; 6]);
    }

    #[test]
    fn deterministic_encoding() {
        let p = EncoderParams::init(small(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(p.encode("kid dance").unwrap(), p.encode("kid dance").unwrap());
        let q = EncoderParams::init(small(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn identity_composition() {
        // One-hot table rows, W = I, bias = 0: output is tanh of the token's row.
        let cfg = EncoderConfig {
            buckets: 64,
            embed_dim: 4,
            out_dim: 4,
            ngram_orders: vec![1],
            ..EncoderConfig::default()
        };
        let mut p = EncoderParams::zeros(cfg).unwrap();
        let bucket = (fnv1a64(b"kid") % 64) as usize;
        let row = [0.0, 1.0, 0.0, 0.0];
        p.embedding_table[bucket * 4..bucket * 4 + 4].copy_from_slice(&row);
        for i in 0..4 {
            p.weight[i * 4 + i] = 1.0;
        }
        let v = p.encode("kid").unwrap();
        let expected: Vec<f32> = row.iter().map(|x: &f64| x.tanh() as f32).collect();
        assert_eq!(v.values, expected);
    }

    #[test]
    fn empty_text_rejected() {
        let p = EncoderParams::zeros(small()).unwrap();
        assert!(matches!(p.encode("?!"), Err(DenseError::EmptyText(_))));
    }

    #[test]
    fn init_range_and_bias() {
        let p = EncoderParams::init(small(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(p.embedding_table.iter().chain(&p.weight).all(|x| x.abs() < 0.05));
        assert!(p.bias.iter().all(|&b| b == 0.0));
        // stored values are already f32-exact
        let mut r = p.clone();
        r.round_to_f32();
        assert_eq!(r, p);
    }

    #[test]
    fn serialization_roundtrip_and_fingerprint() {
        let p = EncoderParams::init(small(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let bytes = p.to_bytes();
        assert_eq!(&bytes[..4], b"RENC");
        let back = EncoderParams::from_bytes(&bytes).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.fingerprint(), p.fingerprint());
        let mut changed = p.clone();
        changed.bias[0] = 0.25;
        assert_ne!(changed.fingerprint(), p.fingerprint());
        assert!(EncoderParams::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn invalid_configs() {
        assert!(EncoderParams::zeros(EncoderConfig { buckets: 1, ..small() }).is_err());
        assert!(EncoderParams::zeros(EncoderConfig {
            ngram_orders: vec![],
            ..small()
        })
        .is_err());
        assert!(EncoderParams::zeros(EncoderConfig { out_dim: 0, ..small() }).is_err());
    }
}
