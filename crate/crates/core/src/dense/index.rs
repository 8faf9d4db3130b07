//! Exact maximum-inner-product index over document embeddings.
//!
//! # Serialized layout (`RDNX`, version 1, little-endian)
//!
//! ```text
//! magic "RDNX" | u32 version | u64 M | u32 D
//! M×D f32 matrix (row-major) | M × (u32 len, utf8 id)
//! u64 document-encoder fingerprint
//! u64 FNV-1a of every preceding byte
//! ```

use std::path::Path;

use super::encoder::EncoderParams;
use super::{dot_f32, DenseError, EmbeddingVector};
use crate::binio::{ByteReader, ByteWriter, FormatError};
use crate::corpus::Document;
use crate::rank::{id_ranks, ScoredDoc, TopK};

pub const DENSE_INDEX_MAGIC: &[u8; 4] = b"RDNX";
pub const DENSE_INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    dim: usize,
    /// `M × dim`, row-major.
    matrix: Vec<f32>,
    ids: Vec<String>,
    tie_ranks: Vec<u32>,
    encoder_fingerprint: u64,
}

impl DenseIndex {
    /// Row `i` is the document encoder's embedding of `docs[i]`.
    pub fn build(doc_encoder: &EncoderParams, docs: &[Document]) -> Result<Self, DenseError> {
        if docs.is_empty() {
            return Err(DenseError::EmptyCorpus);
        }
        let dim = doc_encoder.out_dim();
        let mut matrix = Vec::with_capacity(docs.len() * dim);
        for doc in docs {
            matrix.extend_from_slice(&doc_encoder.encode(&doc.text)?.values);
        }
        let ids = docs.iter().map(|d| d.id.clone()).collect();
        Self::from_parts(dim, matrix, ids, doc_encoder.fingerprint())
    }

    /// Assembles an index from precomputed rows.
    pub fn from_parts(dim: usize, matrix: Vec<f32>, ids: Vec<String>, encoder_fingerprint: u64) -> Result<Self, DenseError> {
        if ids.is_empty() {
            return Err(DenseError::EmptyCorpus);
        }
        if dim == 0 || matrix.len() != ids.len() * dim {
            return Err(DenseError::InvalidConfig(format!(
                "matrix of {} values does not hold {} rows of dimension {dim}",
                matrix.len(),
                ids.len()
            )));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(DenseError::InvalidConfig("non-finite embedding".into()));
        }
        Ok(DenseIndex {
            dim,
            matrix,
            tie_ranks: id_ranks(&ids),
            ids,
            encoder_fingerprint,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, ordinal: usize) -> &[f32] {
        &self.matrix[ordinal * self.dim..][..self.dim]
    }

    pub fn encoder_fingerprint(&self) -> u64 {
        self.encoder_fingerprint
    }

    /// Exact top-k by dot product; ties by ascending id; `min(k, M)` results.
    pub fn search_vector(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<ScoredDoc>, DenseError> {
        if k == 0 {
            return Err(DenseError::InvalidK);
        }
        if query.dim() != self.dim {
            return Err(DenseError::DimensionMismatch {
                left: query.dim(),
                right: self.dim,
            });
        }
        let q = &query.values;
        let mut top = TopK::new(k.min(self.len()));

        // Four rows at a time: each row keeps its own in-order f64 sum, the
        // interleaving only hides the add latency.
        const LANES: usize = 4;
        let full = self.len() / LANES * LANES;
        for base in (0..full).step_by(LANES) {
            let rows: [&[f32]; LANES] = std::array::from_fn(|r| self.row(base + r));
            let mut acc = [0.0f64; LANES];
            for (j, &qj) in q.iter().enumerate() {
                let qj = f64::from(qj);
                for r in 0..LANES {
                    acc[r] += qj * f64::from(rows[r][j]);
                }
            }
            for (r, &score) in acc.iter().enumerate() {
                top.push((base + r) as u32, score, self.tie_ranks[base + r]);
            }
        }
        for ord in full..self.len() {
            top.push(ord as u32, dot_f32(q, self.row(ord)), self.tie_ranks[ord]);
        }

        Ok(top
            .into_sorted()
            .into_iter()
            .map(|(ord, score)| ScoredDoc {
                id: self.ids[ord as usize].clone(),
                score,
            })
            .collect())
    }

    /// Encodes `query` with the query encoder, then searches.
    pub fn search(&self, query_encoder: &EncoderParams, query: &str, k: usize) -> Result<Vec<ScoredDoc>, DenseError> {
        if k == 0 {
            return Err(DenseError::InvalidK);
        }
        self.search_vector(&query_encoder.encode(query)?, k)
    }

    /// Errors unless `doc_encoder` is the encoder this index was built with.
    pub fn check_encoder(&self, doc_encoder: &EncoderParams) -> Result<(), DenseError> {
        let found = doc_encoder.fingerprint();
        if found != self.encoder_fingerprint {
            return Err(DenseError::FingerprintMismatch {
                expected: self.encoder_fingerprint,
                found,
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_header(DENSE_INDEX_MAGIC, DENSE_INDEX_VERSION);
        w.u64(self.len() as u64);
        w.u32(self.dim as u32);
        for &x in &self.matrix {
            w.f32(x);
        }
        for id in &self.ids {
            w.str(id);
        }
        w.u64(self.encoder_fingerprint);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DenseError> {
        let mut r = ByteReader::open(bytes, DENSE_INDEX_MAGIC, DENSE_INDEX_VERSION)?;
        let m = r.u64()? as usize;
        let dim = r.u32()? as usize;
        let cells = m
            .checked_mul(dim)
            .filter(|&c| c.saturating_mul(4) <= bytes.len())
            .ok_or(FormatError::Truncated(bytes.len()))?;
        let matrix = (0..cells).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
        let ids = (0..m).map(|_| r.str()).collect::<Result<Vec<_>, _>>()?;
        let fingerprint = r.u64()?;
        r.expect_end()?;
        Self::from_parts(dim, matrix, ids, fingerprint)
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
    use crate::corpus::Source;
    use crate::dense::EncoderConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_encoder(seed: u64) -> EncoderParams {
        let cfg = EncoderConfig {
            buckets: 128,
            embed_dim: 8,
            out_dim: 8,
            ..EncoderConfig::default()
        };
        EncoderParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn doc(id: &str, text: &str) -> Document {
        Document::new(id, text, Source::Custom, "")
    }

    #[test]
    fn single_document() {
        let enc = small_encoder(1);
        let idx = DenseIndex::build(&enc, &[doc("only", "goat has four legs")]).unwrap();
        assert_eq!(idx.row(0), enc.encode("goat has four legs").unwrap().values.as_slice());
        let hits = idx.search(&enc, "anything at all", 1).unwrap();
        assert_eq!(hits[0].id, "only");
        assert_eq!(idx.search(&enc, "x", 5).unwrap().len(), 1);
    }

    #[test]
    fn rebuild_is_identical_and_fingerprint_tracks_params() {
        let enc = small_encoder(2);
        let docs = [doc("a", "kid dance"), doc("b", "sun dry")];
        let a = DenseIndex::build(&enc, &docs).unwrap();
        assert_eq!(a, DenseIndex::build(&enc, &docs).unwrap());
        let mut changed = enc.clone();
        changed.weight[0] += 0.5;
        let b = DenseIndex::build(&changed, &docs).unwrap();
        assert_ne!(a.encoder_fingerprint(), b.encoder_fingerprint());
        assert!(a.check_encoder(&enc).is_ok());
        assert!(matches!(a.check_encoder(&changed), Err(DenseError::FingerprintMismatch { .. })));
    }

    #[test]
    fn tie_broken_by_id() {
        let idx = DenseIndex::from_parts(
            2,
            vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0],
            vec!["r1".into(), "r2".into(), "r3".into()],
            0,
        )
        .unwrap();
        let q = EmbeddingVector { values: vec![1.0, 0.0] };
        let hits = idx.search_vector(&q, 3).unwrap();
        let ids: Vec<&str> = hits.iter().map(|h| h.id.as_str()).collect();
        assert_eq!(ids, ["r1", "r3", "r2"]);
        assert_eq!(hits[0].score, 1.0);
        assert_eq!(hits[2].score, 0.0);

        let idx = DenseIndex::from_parts(2, vec![1.0, 1.0, 1.0, 0.0], vec!["b".into(), "a".into()], 0).unwrap();
        assert_eq!(idx.search_vector(&q, 1).unwrap()[0].id, "a");
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let dim = 16;
        let m = 100;
        let matrix: Vec<f32> = (0..m * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ids: Vec<String> = (0..m).map(|i| format!("doc{i:03}")).collect();
        let idx = DenseIndex::from_parts(dim, matrix.clone(), ids.clone(), 0).unwrap();
        let q: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut all: Vec<(String, f64)> = (0..m)
            .map(|i| {
                let s: f64 = (0..dim)
                    .map(|j| f64::from(q[j]) * f64::from(matrix[i * dim + j]))
                    .fold(0.0, |a, b| a + b);
                (ids[i].clone(), s)
            })
            .collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

        let hits = idx.search_vector(&EmbeddingVector { values: q }, 10).unwrap();
        for (hit, (id, s)) in hits.iter().zip(&all) {
            assert_eq!(&hit.id, id);
            assert_eq!(hit.score, *s);
        }
    }

    #[test]
    fn errors() {
        let idx = DenseIndex::from_parts(2, vec![1.0, 0.0], vec!["a".into()], 0).unwrap();
        assert!(matches!(
            idx.search_vector(&EmbeddingVector { values: vec![1.0] }, 1),
            Err(DenseError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            idx.search_vector(&EmbeddingVector { values: vec![1.0, 0.0] }, 0),
            Err(DenseError::InvalidK)
        ));
        assert!(matches!(DenseIndex::build(&small_encoder(1), &[]), Err(DenseError::EmptyCorpus)));
        assert!(DenseIndex::from_parts(2, vec![1.0], vec!["a".into()], 0).is_err());
        let enc = small_encoder(1);
        assert!(matches!(DenseIndex::build(&enc, &[doc("a", "...")]), Err(DenseError::EmptyText(_))));
    }

    #[test]
    fn serialization_roundtrip() {
        let enc = small_encoder(4);
        let idx = DenseIndex::build(&enc, &[doc("a", "kid dance"), doc("é", "sun dry clothes")]).unwrap();
        let bytes = idx.to_bytes();
        assert_eq!(&bytes[..4], b"RDNX");
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 8);
        assert_eq!(DenseIndex::from_bytes(&bytes).unwrap(), idx);
        let mut bad = bytes.clone();
        bad[3] = b'Y';
        assert!(DenseIndex::from_bytes(&bad).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::{prop_assert_eq, proptest};

        proptest! {
            #[test]
            fn power_of_two_scaling_keeps_order(seed in 0u64..1000, exp in -3i32..4) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let dim = 4;
                let m = 30;
                let matrix: Vec<f32> = (0..m * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let ids: Vec<String> = (0..m).map(|i| format!("{i:02}")).collect();
                let c = 2f32.powi(exp);
                let base = DenseIndex::from_parts(dim, matrix.clone(), ids.clone(), 0).unwrap();
                let scaled = DenseIndex::from_parts(dim, matrix.iter().map(|x| x * c).collect(), ids, 0).unwrap();
                let q = EmbeddingVector { values: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect() };
                let a = base.search_vector(&q, 10).unwrap();
                let b = scaled.search_vector(&q, 10).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    prop_assert_eq!(&x.id, &y.id);
                    prop_assert_eq!(x.score * f64::from(c), y.score);
                }
            }
        }
    }
}
