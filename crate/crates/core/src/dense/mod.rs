//! Dual-encoder dense retrieval.
//!
//! Two independent encoders map queries and documents to vectors of the same
//! dimension; relevance is their raw dot product. Training minimizes softmax
//! cross-entropy over the in-batch similarity matrix, where every other
//! pair's positive acts as a negative.

mod encoder;
mod index;
mod loss;
mod train;

pub use encoder::{EncoderConfig, EncoderParams, ENCODER_MAGIC, ENCODER_VERSION};
pub use index::{DenseIndex, DENSE_INDEX_MAGIC, DENSE_INDEX_VERSION};
pub use loss::{in_batch_loss, in_batch_loss_from_scores, loss_gradients, EncoderGradients, Gradients};
pub use train::{train, AdamState, DualEncoder, TrainConfig, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::binio::FormatError;

#[derive(Debug, thiserror::Error)]
pub enum DenseError {
    #[error("text has no tokens: {0:?}")]
    EmptyText(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("need at least {needed} pairs, got {got}")]
    InsufficientPairs { needed: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("encoder fingerprint {found:016x} does not match index fingerprint {expected:016x}")]
    FingerprintMismatch { expected: u64, found: u64 },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Output of one encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Raw dot product, accumulated in f64 in coordinate order.
pub fn similarity(q: &EmbeddingVector, d: &EmbeddingVector) -> Result<f64, DenseError> {
    if q.dim() != d.dim() {
        return Err(DenseError::DimensionMismatch {
            left: q.dim(),
            right: d.dim(),
        });
    }
    Ok(dot_f32(&q.values, &d.values))
}

#[inline]
pub(crate) fn dot_f32(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc += f64::from(*x) * f64::from(*y);
    }
    acc
}

#[inline]
pub(crate) fn dot_f64(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f32]) -> EmbeddingVector {
        EmbeddingVector { values: x.to_vec() }
    }

    #[test]
    fn similarity_examples() {
        assert_eq!(similarity(&v(&[1.0, 2.0, -1.0]), &v(&[2.0, 0.0, 3.0])).unwrap(), -1.0);
        assert_eq!(similarity(&v(&[0.3, -7.0]), &v(&[0.0, 0.0])).unwrap(), 0.0);
        assert_eq!(similarity(&v(&[0.5, 0.5]), &v(&[0.5, 0.5])).unwrap(), 0.5);
        assert!(matches!(
            similarity(&v(&[1.0]), &v(&[1.0, 2.0])),
            Err(DenseError::DimensionMismatch { left: 1, right: 2 })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn similarity_symmetric(pairs in proptest::collection::vec((-10.0f32..10.0, -10.0f32..10.0), 1..64)) {
                let (a, b): (Vec<f32>, Vec<f32>) = pairs.into_iter().unzip();
                prop_assert_eq!(similarity(&v(&a), &v(&b)).unwrap(), similarity(&v(&b), &v(&a)).unwrap());
            }
        }
    }
}
