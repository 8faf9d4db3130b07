//! In-batch-negative softmax cross-entropy and its analytic gradient.
//!
//! For a batch of `B` pairs with `S[i][j] = q_i · d_j`,
//! `L = -(1/B) Σ_i (S[i][i] - logsumexp_j S[i][j])`.

use super::encoder::{EncoderParams, Forward};
use super::{dot_f64, DenseError};
use crate::pairs::TrainingPair;
use crate::text::HashedFeatureVector;

/// Gradient buffers shaped like [`EncoderParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGradients {
    pub embedding_table: Vec<f64>,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub query: EncoderGradients,
    pub doc: EncoderGradients,
}

/// Row-sparse gradient of one encoder: only table rows that were hit.
#[derive(Debug, Clone)]
pub(crate) struct SparseGrad {
    /// Sorted by bucket, no repeats.
    pub rows: Vec<(u32, Vec<f64>)>,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl SparseGrad {
    pub fn to_dense(&self, params: &EncoderParams) -> EncoderGradients {
        let de = params.embed_dim();
        let mut table = vec![0.0; params.embedding_table.len()];
        for (bucket, row) in &self.rows {
            table[*bucket as usize * de..][..de].copy_from_slice(row);
        }
        EncoderGradients {
            embedding_table: table,
            weight: self.weight.clone(),
            bias: self.bias.clone(),
        }
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|&s| (s - max).exp()).sum();
    max + sum.ln()
}

/// Loss of a precomputed `B × B` similarity matrix, diagonal = positives.
pub fn in_batch_loss_from_scores(scores: &[Vec<f64>]) -> f64 {
    let b = scores.len();
    let mut total = 0.0;
    for (i, row) in scores.iter().enumerate() {
        assert_eq!(row.len(), b, "similarity matrix must be square");
        total += log_sum_exp(row) - row[i];
    }
    total / b as f64
}

fn check_batch(batch_len: usize) -> Result<(), DenseError> {
    if batch_len < 2 {
        return Err(DenseError::InsufficientPairs { needed: 2, got: batch_len });
    }
    Ok(())
}

fn check_dims(qp: &EncoderParams, dp: &EncoderParams) -> Result<(), DenseError> {
    if qp.out_dim() != dp.out_dim() {
        return Err(DenseError::DimensionMismatch {
            left: qp.out_dim(),
            right: dp.out_dim(),
        });
    }
    Ok(())
}

fn score_matrix(queries: &[Forward], docs: &[Forward]) -> Vec<Vec<f64>> {
    queries
        .iter()
        .map(|q| docs.iter().map(|d| dot_f64(&q.output, &d.output)).collect())
        .collect()
}

pub fn in_batch_loss(qp: &EncoderParams, dp: &EncoderParams, batch: &[TrainingPair]) -> Result<f64, DenseError> {
    check_batch(batch.len())?;
    check_dims(qp, dp)?;
    let queries = batch.iter().map(|p| qp.forward(&p.query)).collect::<Result<Vec<_>, _>>()?;
    let docs = batch.iter().map(|p| dp.forward(&p.positive)).collect::<Result<Vec<_>, _>>()?;
    Ok(in_batch_loss_from_scores(&score_matrix(&queries, &docs)))
}

/// Loss and exact gradient with respect to every parameter of both encoders.
pub fn loss_gradients(qp: &EncoderParams, dp: &EncoderParams, batch: &[TrainingPair]) -> Result<(f64, Gradients), DenseError> {
    check_batch(batch.len())?;
    let qf = batch.iter().map(|p| qp.config.features(&p.query)).collect::<Result<Vec<_>, _>>()?;
    let df = batch
        .iter()
        .map(|p| dp.config.features(&p.positive))
        .collect::<Result<Vec<_>, _>>()?;
    let (qr, dr): (Vec<_>, Vec<_>) = (qf.iter().collect(), df.iter().collect());
    let (loss, gq, gd) = loss_and_sparse_grads(qp, dp, &qr, &dr)?;
    Ok((
        loss,
        Gradients {
            query: gq.to_dense(qp),
            doc: gd.to_dense(dp),
        },
    ))
}

/// Works on pre-hashed features so the trainer hashes each text once.
pub(crate) fn loss_and_sparse_grads(
    qp: &EncoderParams,
    dp: &EncoderParams,
    query_feats: &[&HashedFeatureVector],
    doc_feats: &[&HashedFeatureVector],
) -> Result<(f64, SparseGrad, SparseGrad), DenseError> {
    check_batch(query_feats.len())?;
    check_dims(qp, dp)?;
    let b = query_feats.len();
    let queries: Vec<Forward> = query_feats.iter().map(|f| qp.forward_features(f)).collect();
    let docs: Vec<Forward> = doc_feats.iter().map(|f| dp.forward_features(f)).collect();
    let scores = score_matrix(&queries, &docs);
    let loss = in_batch_loss_from_scores(&scores);

    // dL/dS[i][j] = (softmax_i(S)[j] - [i == j]) / B
    let mut coupling = vec![vec![0.0; b]; b];
    for i in 0..b {
        let lse = log_sum_exp(&scores[i]);
        for j in 0..b {
            let p = (scores[i][j] - lse).exp();
            coupling[i][j] = (p - if i == j { 1.0 } else { 0.0 }) / b as f64;
        }
    }

    let d = qp.out_dim();
    let mut grad_q_out = vec![vec![0.0; d]; b];
    let mut grad_d_out = vec![vec![0.0; d]; b];
    for i in 0..b {
        for j in 0..b {
            let g = coupling[i][j];
            for k in 0..d {
                grad_q_out[i][k] += g * docs[j].output[k];
                grad_d_out[j][k] += g * queries[i].output[k];
            }
        }
    }

    let gq = backward(qp, &queries, &grad_q_out);
    let gd = backward(dp, &docs, &grad_d_out);
    Ok((loss, gq, gd))
}

fn backward(params: &EncoderParams, forwards: &[Forward], grad_out: &[Vec<f64>]) -> SparseGrad {
    let de = params.embed_dim();
    let d = params.out_dim();
    let mut weight = vec![0.0; d * de];
    let mut bias = vec![0.0; d];
    let mut rows: Vec<(u32, Vec<f64>)> = Vec::new();

    for (fwd, g_out) in forwards.iter().zip(grad_out) {
        // through tanh
        let g_pre: Vec<f64> = g_out.iter().zip(&fwd.output).map(|(g, y)| g * (1.0 - y * y)).collect();
        let mut g_avg = vec![0.0; de];
        for r in 0..d {
            let gr = g_pre[r];
            bias[r] += gr;
            let w_row = &params.weight[r * de..][..de];
            let gw_row = &mut weight[r * de..][..de];
            for c in 0..de {
                gw_row[c] += gr * fwd.averaged[c];
                g_avg[c] += gr * w_row[c];
            }
        }
        for &(bucket, w) in &fwd.features {
            let row = match rows.binary_search_by_key(&bucket, |(b, _)| *b) {
                Ok(pos) => &mut rows[pos].1,
                Err(pos) => {
                    rows.insert(pos, (bucket, vec![0.0; de]));
                    &mut rows[pos].1
                }
            };
            for (x, g) in row.iter_mut().zip(&g_avg) {
                *x += w * g;
            }
        }
    }
    SparseGrad { rows, weight, bias }
}
