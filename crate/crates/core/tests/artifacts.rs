//! Persisted artifacts: round trips, corruption and version checks.

use csret_core::dense::{DenseIndex, DualEncoder, EncoderParams};
use csret_core::fixtures::{generate, FixtureConfig};
use csret_core::{
    Bm25Params, Corpus, CorpusError, DenseError, Document, EncoderConfig, Error, FormatError, InvertedIndex, Source, SparseError,
    TokenizerConfig,
};

fn small_encoder() -> EncoderConfig {
    EncoderConfig {
        buckets: 1024,
        embed_dim: 8,
        out_dim: 8,
        ..EncoderConfig::default()
    }
}

fn docs() -> Vec<Document> {
    let task = generate(&FixtureConfig {
        slots: vec![4, 3, 2],
        train_pairs: 10,
        heldout_pairs: 4,
        ..FixtureConfig::default()
    });
    task.documents
}

fn assert_format_error(result: Result<impl std::fmt::Debug, Error>, kind: &str) {
    let err = result.unwrap_err();
    assert_eq!(err.kind(), kind, "{err}");
}

#[test]
fn sparse_index_file_roundtrip_and_damage() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.rspx");
    let index = InvertedIndex::build(&docs(), Bm25Params::default(), &TokenizerConfig::default()).unwrap();
    index.save(&path).unwrap();
    let loaded = InvertedIndex::load(&path).unwrap();
    assert_eq!(loaded.to_bytes(), index.to_bytes());
    let q = &docs()[0].text;
    assert_eq!(loaded.search(q, 5).unwrap(), index.search(q, 5).unwrap());

    let bytes = std::fs::read(&path).unwrap();
    let mut flipped = bytes.clone();
    flipped[bytes.len() / 2] ^= 0x40;
    assert_format_error(InvertedIndex::from_bytes(&flipped).map_err(Error::from), "ChecksumMismatch");
    assert_format_error(
        InvertedIndex::from_bytes(&bytes[..bytes.len() - 3]).map_err(Error::from),
        "ChecksumMismatch",
    );
    let mut future = bytes.clone();
    future[4] = 99;
    let err = InvertedIndex::from_bytes(&future).unwrap_err();
    assert!(
        matches!(
            err,
            SparseError::Format(FormatError::UnsupportedVersion { found: 99, .. }) | SparseError::Format(FormatError::ChecksumMismatch)
        ),
        "{err:?}"
    );
    assert!(matches!(InvertedIndex::load(&dir.path().join("absent")), Err(SparseError::Io(_))));
}

#[test]
fn encoder_and_dense_index_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let model = DualEncoder::init(&small_encoder(), 3).unwrap();
    let qpath = dir.path().join("q.renc");
    model.query.save(&qpath).unwrap();
    let loaded = EncoderParams::load(&qpath).unwrap();
    assert_eq!(loaded, model.query);
    assert_eq!(loaded.fingerprint(), model.query.fingerprint());

    let corpus = docs();
    let index = DenseIndex::build(&model.doc, &corpus).unwrap();
    let ipath = dir.path().join("d.rdnx");
    index.save(&ipath).unwrap();
    let back = DenseIndex::load(&ipath).unwrap();
    assert_eq!(back.to_bytes(), index.to_bytes());
    back.check_encoder(&model.doc).unwrap();
    assert!(matches!(
        back.check_encoder(&model.query),
        Err(DenseError::FingerprintMismatch { .. })
    ));
    assert_eq!(
        back.search(&model.query, &corpus[1].text, 4).unwrap(),
        index.search(&model.query, &corpus[1].text, 4).unwrap()
    );
}

#[test]
fn artifacts_reject_each_others_magic() {
    let model = DualEncoder::init(&small_encoder(), 3).unwrap();
    let enc = model.query.to_bytes();
    let idx = DenseIndex::build(&model.doc, &docs()).unwrap().to_bytes();
    assert_format_error(DenseIndex::from_bytes(&enc).map_err(Error::from), "BadMagic");
    assert_format_error(EncoderParams::from_bytes(&idx).map_err(Error::from), "BadMagic");
    assert_format_error(InvertedIndex::from_bytes(&enc).map_err(Error::from), "BadMagic");
    assert_format_error(EncoderParams::from_bytes(&enc[..10]).map_err(Error::from), "Truncated");
}

#[test]
fn corpus_store_roundtrip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    let corpus = Corpus::from_documents(docs()).unwrap();
    corpus.save(&path).unwrap();
    let back = Corpus::load(&path).unwrap();
    assert_eq!(back.documents(), corpus.documents());
    assert!(csret_core::corpus::stats_path(&path).exists());

    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("{not json}\n");
    std::fs::write(&path, text).unwrap();
    match Corpus::load(&path) {
        Err(CorpusError::Corrupt { line, .. }) => assert_eq!(line, corpus.len() + 1),
        other => panic!("expected corruption error, got {other:?}"),
    }
}

#[test]
fn ingest_tolerates_bad_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("in.jsonl");
    std::fs::write(
        &path,
        "{\"text\": \"Goat has Four legs\"}\n{\"oops\": 1}\n\n{\"text\": \"goat   has four legs\"}\n{\"id\": \"x\", \"text\": \"\\u0007 \"}\n{\"text\": \"sun dries clothes\", \"origin\": \"wiki\"}\n",
    )
    .unwrap();
    let mut corpus = Corpus::new();
    let report = corpus.ingest_jsonl(&path, Source::Crc, &Default::default()).unwrap();
    assert_eq!(report.accepted, 2);
    assert_eq!(report.deduped, 1);
    assert_eq!(report.rejected, 3);
    assert_eq!(report.total(), 6);
    assert_eq!(corpus.documents()[0].id, "CRC-1");
    assert_eq!(corpus.documents()[0].text, "goat has four legs");
    assert_eq!(corpus.documents()[1].origin, "wiki");
}
