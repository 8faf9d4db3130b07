//! Retrieval over commonsense corpora: source-tagged document stores, a BM25
//! inverted index, a trainable dual-encoder dense retriever, training-pair
//! construction, and Hit@k evaluation.

mod binio;
pub mod corpus;
pub mod dense;
pub mod eval;
pub mod fixtures;
pub mod pairs;
mod rank;
pub mod retriever;
pub mod sparse;
pub mod text;

pub use binio::FormatError;
pub use corpus::{Corpus, CorpusError, CorpusStats, Document, IngestReport, NormalizationConfig, Source};
pub use dense::{DenseError, DenseIndex, DualEncoder, EmbeddingVector, EncoderConfig, EncoderParams, TrainConfig};
pub use eval::{EvalError, Qrel, ReaderError, RetrievalRun};
pub use pairs::{DatasetRecord, PairError, Strategy, TrainingPair};
pub use rank::ScoredDoc;
pub use retriever::{DenseSearcher, Retriever};
pub use sparse::{Bm25Params, InvertedIndex, SparseError};
pub use text::TokenizerConfig;

/// Version stamped into every persisted report, stats file and artifact.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Dense(#[from] DenseError),
    #[error(transparent)]
    Pair(#[from] PairError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Reader(#[from] ReaderError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable error name for machine-readable reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Corpus(e) => match e {
                CorpusError::EmptyAfterNormalization => "EmptyAfterNormalization",
                CorpusError::FileNotFound(_) => "FileNotFound",
                CorpusError::EmptyCorpus => "EmptyCorpus",
                CorpusError::NotFound(_) => "NotFound",
                CorpusError::DuplicateId(_) => "DuplicateId",
                CorpusError::UnknownSource(_) => "UnknownSource",
                CorpusError::Corrupt { .. } => "CorruptCorpus",
                CorpusError::Io(_) => "Io",
            },
            Error::Sparse(e) => match e {
                SparseError::EmptyCorpus => "EmptyCorpus",
                SparseError::OrdinalOutOfRange { .. } => "OrdinalOutOfRange",
                SparseError::EmptyQuery => "EmptyQuery",
                SparseError::InvalidK => "InvalidK",
                SparseError::InvalidParams(_) => "InvalidParams",
                SparseError::Format(f) => format_kind(f),
                SparseError::Io(_) => "Io",
            },
            Error::Dense(e) => match e {
                DenseError::EmptyText(_) => "EmptyText",
                DenseError::DimensionMismatch { .. } => "DimensionMismatch",
                DenseError::EmptyCorpus => "EmptyCorpus",
                DenseError::InsufficientPairs { .. } => "InsufficientPairs",
                DenseError::InvalidConfig(_) => "InvalidConfig",
                DenseError::InvalidK => "InvalidK",
                DenseError::FingerprintMismatch { .. } => "FingerprintMismatch",
                DenseError::Format(f) => format_kind(f),
                DenseError::Io(_) => "Io",
            },
            Error::Pair(e) => match e {
                PairError::InvalidFraction(_) => "InvalidFraction",
                PairError::MalformedRecord { .. } => "MalformedRecord",
                PairError::Io(_) => "Io",
            },
            Error::Eval(e) => match e {
                EvalError::MissingQrel(_) => "MissingQrel",
                EvalError::KTooLarge { .. } => "KTooLarge",
                EvalError::InvalidK => "InvalidK",
                EvalError::EmptyRun => "EmptyRun",
                EvalError::InvalidQrel(_) => "InvalidQrel",
                EvalError::EmptySubset => "EmptySubset",
                EvalError::NoKs => "NoKs",
            },
            Error::Reader(e) => match e {
                ReaderError::Timeout { .. } => "ReaderTimeout",
                ReaderError::HttpStatus(_) => "ReaderHttpStatus",
                ReaderError::SchemaMismatch(_) => "SchemaMismatch",
                ReaderError::Client(_) => "ReaderClient",
            },
            Error::Format(f) => format_kind(f),
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}

fn format_kind(e: &FormatError) -> &'static str {
    match e {
        FormatError::BadMagic { .. } => "BadMagic",
        FormatError::UnsupportedVersion { .. } => "UnsupportedVersion",
        FormatError::Truncated(_) => "Truncated",
        FormatError::ChecksumMismatch => "ChecksumMismatch",
        FormatError::Invalid(_) => "InvalidFormat",
    }
}
