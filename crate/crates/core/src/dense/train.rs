//! Seeded, single-threaded Adam training of the two encoders.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{EncoderConfig, EncoderParams};
use super::loss::{loss_and_sparse_grads, SparseGrad};
use super::DenseError;
use crate::pairs::TrainingPair;
use crate::text::{Fnv1a, HashedFeatureVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 40,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            encoder: EncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DenseError> {
        if self.batch_size < 2 {
            return Err(DenseError::InvalidConfig("batch_size must be at least 2".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(DenseError::InvalidConfig("learning_rate must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return Err(DenseError::InvalidConfig("Adam constants out of range".into()));
        }
        self.encoder.validate()
    }

    pub fn config_hash(&self) -> u64 {
        let mut h = Fnv1a::default();
        h.write(serde_json::to_string(self).expect("config serializes").as_bytes());
        h.finish()
    }
}

/// The query encoder and the document encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEncoder {
    pub query: EncoderParams,
    pub doc: EncoderParams,
}

impl DualEncoder {
    /// Query encoder first, then document encoder, from one seeded stream.
    pub fn init(config: &EncoderConfig, seed: u64) -> Result<Self, DenseError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let query = EncoderParams::init(config.clone(), &mut rng)?;
        let doc = EncoderParams::init(config.clone(), &mut rng)?;
        Ok(DualEncoder { query, doc })
    }
}

/// Adam moments for one encoder. Table rows get moment storage on their
/// first non-zero gradient; a row that has never been hit has zero moments
/// and its exact Adam update is zero, so it is skipped.
#[derive(Debug, Clone)]
pub struct AdamState {
    step: u64,
    row_slot: HashMap<u32, usize>,
    /// `(bucket, slot)` in bucket order, for a deterministic sweep.
    active_rows: Vec<(u32, usize)>,
    table_m: Vec<f64>,
    table_v: Vec<f64>,
    weight_m: Vec<f64>,
    weight_v: Vec<f64>,
    bias_m: Vec<f64>,
    bias_v: Vec<f64>,
}

impl AdamState {
    pub fn new(params: &EncoderParams) -> Self {
        AdamState {
            step: 0,
            row_slot: HashMap::new(),
            active_rows: Vec::new(),
            table_m: Vec::new(),
            table_v: Vec::new(),
            weight_m: vec![0.0; params.weight.len()],
            weight_v: vec![0.0; params.weight.len()],
            bias_m: vec![0.0; params.bias.len()],
            bias_v: vec![0.0; params.bias.len()],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub(crate) fn apply(&mut self, params: &mut EncoderParams, grad: &SparseGrad, cfg: &TrainConfig) {
        let de = params.embed_dim();
        for (bucket, _) in &grad.rows {
            if !self.row_slot.contains_key(bucket) {
                let slot = self.table_m.len() / de;
                self.row_slot.insert(*bucket, slot);
                let pos = self.active_rows.partition_point(|(b, _)| b < bucket);
                self.active_rows.insert(pos, (*bucket, slot));
                self.table_m.resize(self.table_m.len() + de, 0.0);
                self.table_v.resize(self.table_v.len() + de, 0.0);
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let hp = AdamStep {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
            bias1: 1.0 - cfg.beta1.powi(t),
            bias2: 1.0 - cfg.beta2.powi(t),
        };

        let zeros = vec![0.0; de];
        let mut grad_rows = grad.rows.iter().peekable();
        for &(bucket, slot) in &self.active_rows {
            let g = match grad_rows.peek() {
                Some((b, row)) if *b == bucket => {
                    grad_rows.next();
                    row.as_slice()
                }
                _ => zeros.as_slice(),
            };
            hp.update(
                &mut params.embedding_table[bucket as usize * de..][..de],
                g,
                &mut self.table_m[slot * de..][..de],
                &mut self.table_v[slot * de..][..de],
            );
        }
        hp.update(&mut params.weight, &grad.weight, &mut self.weight_m, &mut self.weight_v);
        hp.update(&mut params.bias, &grad.bias, &mut self.bias_m, &mut self.bias_v);
    }
}

struct AdamStep {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bias1: f64,
    bias2: f64,
}

impl AdamStep {
    #[inline]
    fn update(&self, p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]) {
        for i in 0..p.len() {
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let m_hat = m[i] / self.bias1;
            let v_hat = v[i] / self.bias2;
            p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DualEncoder,
    /// Batch loss before each update, in step order.
    pub losses: Vec<f64>,
    pub steps_per_epoch: usize,
}

impl TrainOutcome {
    pub fn epoch_mean_losses(&self) -> Vec<f64> {
        if self.steps_per_epoch == 0 {
            return Vec::new();
        }
        self.losses
            .chunks(self.steps_per_epoch)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }
}

/// Trains both encoders for `epochs · ⌊|pairs| / B⌋` Adam steps over
/// per-epoch shuffles. The last partial batch of each epoch is dropped.
/// Returned parameters are rounded to f32, matching what gets persisted.
pub fn train(pairs: &[TrainingPair], cfg: &TrainConfig) -> Result<TrainOutcome, DenseError> {
    cfg.validate()?;
    if pairs.len() < cfg.batch_size {
        return Err(DenseError::InsufficientPairs {
            needed: cfg.batch_size,
            got: pairs.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut query = EncoderParams::init(cfg.encoder.clone(), &mut rng)?;
    let mut doc = EncoderParams::init(cfg.encoder.clone(), &mut rng)?;

    let query_feats: Vec<HashedFeatureVector> = pairs.iter().map(|p| cfg.encoder.features(&p.query)).collect::<Result<_, _>>()?;
    let doc_feats: Vec<HashedFeatureVector> = pairs.iter().map(|p| cfg.encoder.features(&p.positive)).collect::<Result<_, _>>()?;

    let steps_per_epoch = pairs.len() / cfg.batch_size;
    let mut q_state = AdamState::new(&query);
    let mut d_state = AdamState::new(&doc);
    let mut losses = Vec::with_capacity(cfg.epochs * steps_per_epoch);
    let mut order: Vec<usize> = (0..pairs.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks_exact(cfg.batch_size) {
            let qf: Vec<&HashedFeatureVector> = batch.iter().map(|&i| &query_feats[i]).collect();
            let df: Vec<&HashedFeatureVector> = batch.iter().map(|&i| &doc_feats[i]).collect();
            let (loss, gq, gd) = loss_and_sparse_grads(&query, &doc, &qf, &df)?;
            q_state.apply(&mut query, &gq, cfg);
            d_state.apply(&mut doc, &gd, cfg);
            losses.push(loss);
        }
        log::debug!(
            "epoch {epoch}: mean loss {:.6}",
            losses[losses.len() - steps_per_epoch..].iter().sum::<f64>() / steps_per_epoch as f64
        );
    }

    query.round_to_f32();
    doc.round_to_f32();
    Ok(TrainOutcome {
        model: DualEncoder { query, doc },
        losses,
        steps_per_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairs::Strategy;

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 4,
            epochs: 3,
            learning_rate: 1e-2,
            seed: 17,
            encoder: EncoderConfig {
                buckets: 256,
                embed_dim: 8,
                out_dim: 8,
                ..EncoderConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    fn pairs(n: usize) -> Vec<TrainingPair> {
        (0..n)
            .map(|i| TrainingPair {
                query: format!("query about topic {i}"),
                positive: format!("document on subject {i}"),
                strategy: Strategy::GroundTruth,
                dataset: "toy".into(),
            })
            .collect()
    }

    #[test]
    fn zero_epochs_returns_init() {
        let cfg = TrainConfig { epochs: 0, ..tiny_cfg() };
        let out = train(&pairs(8), &cfg).unwrap();
        assert!(out.losses.is_empty());
        assert_eq!(out.model, DualEncoder::init(&cfg.encoder, cfg.seed).unwrap());
    }

    #[test]
    fn same_seed_same_params() {
        let a = train(&pairs(10), &tiny_cfg()).unwrap();
        let b = train(&pairs(10), &tiny_cfg()).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.steps_per_epoch, 2);
        assert_eq!(a.losses.len(), 6);
    }

    #[test]
    fn different_seed_differs() {
        let a = train(&pairs(8), &tiny_cfg()).unwrap();
        let b = train(&pairs(8), &TrainConfig { seed: 18, ..tiny_cfg() }).unwrap();
        assert_ne!(a.model, b.model);
    }

    #[test]
    fn insufficient_pairs() {
        assert!(matches!(
            train(&pairs(3), &tiny_cfg()),
            Err(DenseError::InsufficientPairs { needed: 4, got: 3 })
        ));
        assert!(train(
            &pairs(8),
            &TrainConfig {
                batch_size: 1,
                ..tiny_cfg()
            }
        )
        .is_err());
    }

    #[test]
    fn zero_learning_rate_leaves_params() {
        let cfg = tiny_cfg();
        let init = DualEncoder::init(&cfg.encoder, cfg.seed).unwrap();
        let mut params = init.query.clone();
        let mut state = AdamState::new(&params);
        let p = pairs(4);
        let qf: Vec<_> = p.iter().map(|x| cfg.encoder.features(&x.query).unwrap()).collect();
        let df: Vec<_> = p.iter().map(|x| cfg.encoder.features(&x.positive).unwrap()).collect();
        let (_, gq, _) = loss_and_sparse_grads(
            &init.query,
            &init.doc,
            &qf.iter().collect::<Vec<_>>(),
            &df.iter().collect::<Vec<_>>(),
        )
        .unwrap();
        let zero_lr = TrainConfig { learning_rate: 0.0, ..cfg };
        state.apply(&mut params, &gq, &zero_lr);
        assert_eq!(params, init.query);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn loss_decreases_on_separable_toy() {
        let cfg = TrainConfig { epochs: 30, ..tiny_cfg() };
        let out = train(&pairs(16), &cfg).unwrap();
        let means = out.epoch_mean_losses();
        assert!(means.last().unwrap() < means.first().unwrap());
    }
}
