//! One function per subcommand. Each validates its inputs before doing any
//! long-running work and returns the text destined for standard output.

use std::path::{Path, PathBuf};

use csret_core::dense::{train as train_encoders, DenseIndex, EncoderParams};
use csret_core::eval::{
    assemble_reader_contexts, call_external_reader, evaluate, export_reader_inputs, read_reader_inputs, run_corpus_ablation, run_k_sweep,
    run_retrieval, AblationConfig, Qrel, ReaderClientConfig, RetrievalRun,
};
use csret_core::fixtures::{generate, synthetic_train_config, FixtureConfig};
use csret_core::pairs::{
    merge_datasets, pairs_from_explanations, pairs_from_ground_truth, read_jsonl, split_pairs, write_jsonl, DatasetRecord, PairOptions,
    TrainingPair,
};
use csret_core::{Corpus, InvertedIndex, Source};
use serde::Serialize;
use serde_json::json;

use crate::config::{require, PipelineConfig};
use crate::engine::{Engine, RetrieverKind};
use crate::{
    AblateArgs, CliError, ContextsArgs, EvalArgs, FixtureArgs, IngestArgs, MakePairsArgs, ReadArgs, SearchArgs, ServeArgs, StatsArgs,
    StrategyArg, SweepArgs, TrainArgs,
};

fn pretty<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn write_report<T: Serialize>(path: &Path, value: &T) -> Result<String, CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let body = pretty(value)?;
    std::fs::write(path, &body)?;
    log::info!("wrote {}", path.display());
    Ok(body)
}

fn load_corpus(cfg: &PipelineConfig) -> Result<Corpus, CliError> {
    require(&cfg.paths.corpus)?;
    Ok(Corpus::load(&cfg.paths.corpus)?)
}

fn load_qrels(path: &Path) -> Result<Vec<Qrel>, CliError> {
    require(path)?;
    Ok(read_jsonl(path)?)
}

fn parse_input(spec: &str) -> Result<(Source, PathBuf), CliError> {
    let (source, path) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("expected SOURCE=PATH, got {spec:?}")))?;
    let source: Source = source.parse()?;
    Ok((source, PathBuf::from(path)))
}

pub fn ingest(cfg: &PipelineConfig, args: &IngestArgs) -> Result<String, CliError> {
    let inputs = args.inputs.iter().map(|s| parse_input(s)).collect::<Result<Vec<_>, _>>()?;
    for (_, path) in &inputs {
        require(path)?;
    }
    let mut corpus = if args.append && cfg.paths.corpus.exists() {
        Corpus::load(&cfg.paths.corpus)?
    } else {
        Corpus::new()
    };
    let mut reports = Vec::new();
    for (source, path) in &inputs {
        let report = corpus.ingest_jsonl(path, *source, &cfg.normalization)?;
        log::info!(
            "{}: accepted {} rejected {} deduped {}",
            path.display(),
            report.accepted,
            report.rejected,
            report.deduped
        );
        reports.push(json!({ "path": path, "source": source, "report": report }));
    }
    if let Some(dir) = cfg.paths.corpus.parent() {
        std::fs::create_dir_all(dir)?;
    }
    corpus.save(&cfg.paths.corpus)?;
    pretty(&json!({ "documents": corpus.len(), "inputs": reports }))
}

pub fn stats(cfg: &PipelineConfig, args: &StatsArgs) -> Result<String, CliError> {
    let stats = load_corpus(cfg)?.compute_stats()?;
    if args.json {
        pretty(&stats)
    } else {
        Ok(stats.to_table())
    }
}

pub fn build_sparse(cfg: &PipelineConfig) -> Result<String, CliError> {
    let corpus = load_corpus(cfg)?;
    let index = InvertedIndex::build(corpus.documents(), cfg.bm25, &cfg.tokenizer)?;
    index.save(&cfg.paths.sparse_index)?;
    pretty(&json!({
        "documents": index.len(),
        "terms": index.term_count(),
        "path": cfg.paths.sparse_index,
    }))
}

pub fn build_dense(cfg: &PipelineConfig) -> Result<String, CliError> {
    require(&cfg.paths.doc_encoder)?;
    let corpus = load_corpus(cfg)?;
    let encoder = EncoderParams::load(&cfg.paths.doc_encoder)?;
    let index = DenseIndex::build(&encoder, corpus.documents())?;
    index.save(&cfg.paths.dense_index)?;
    pretty(&json!({
        "documents": index.len(),
        "dim": index.dim(),
        "encoder_fingerprint": format!("{:016x}", index.encoder_fingerprint()),
        "path": cfg.paths.dense_index,
    }))
}

pub fn make_pairs(cfg: &PipelineConfig, args: &MakePairsArgs) -> Result<String, CliError> {
    if let Some(f) = args.dev_fraction {
        if !(0.0..1.0).contains(&f) {
            return Err(CliError::Usage(format!("dev fraction {f} is outside [0, 1)")));
        }
    }
    for path in &args.inputs {
        require(path)?;
    }
    let opts = PairOptions {
        normalization: cfg.normalization,
        all_references: !args.first_reference_only,
    };
    let mut lists = Vec::new();
    let mut skipped = 0;
    for path in &args.inputs {
        let records: Vec<DatasetRecord> = read_jsonl(path)?;
        let report = match args.strategy {
            StrategyArg::Explanation => pairs_from_explanations(&records, &opts),
            StrategyArg::GroundTruth => pairs_from_ground_truth(&records, &opts),
        };
        log::info!("{}: {} pairs, {} skipped", path.display(), report.pairs.len(), report.skipped);
        skipped += report.skipped;
        lists.push(report.pairs);
    }
    let merged = merge_datasets(&lists, cfg.train.seed);
    let (train, dev) = match args.dev_fraction {
        Some(f) => split_pairs(&merged.pairs, f, cfg.train.seed)?,
        None => (merged.pairs.clone(), Vec::new()),
    };
    write_jsonl(&cfg.paths.pairs, &train)?;
    let dev_path = args.dev_fraction.map(|_| cfg.paths.pairs.with_extension("dev.jsonl"));
    if let Some(p) = &dev_path {
        write_jsonl(p, &dev)?;
    }
    pretty(&json!({
        "pairs": train.len(),
        "dev": dev.len(),
        "skipped": skipped,
        "per_dataset": merged.per_dataset,
        "path": cfg.paths.pairs,
        "dev_path": dev_path,
    }))
}

pub fn train(cfg: &PipelineConfig, args: &TrainArgs) -> Result<String, CliError> {
    let mut tc = cfg.train.clone();
    if let Some(e) = args.epochs {
        tc.epochs = e;
    }
    if let Some(s) = args.seed {
        tc.seed = s;
    }
    if let Some(lr) = args.learning_rate {
        tc.learning_rate = lr;
    }
    if let Some(b) = args.batch_size {
        tc.batch_size = b;
    }
    tc.validate().map_err(|e| CliError::Config(e.to_string()))?;
    require(&cfg.paths.pairs)?;
    let pairs: Vec<TrainingPair> = read_jsonl(&cfg.paths.pairs)?;
    log::info!(
        "training on {} pairs, train_config_hash={:016x} seed={}",
        pairs.len(),
        tc.config_hash(),
        tc.seed
    );
    let outcome = train_encoders(&pairs, &tc)?;
    outcome.model.query.save(&cfg.paths.query_encoder)?;
    outcome.model.doc.save(&cfg.paths.doc_encoder)?;
    let report = json!({
        "format_version": csret_core::FORMAT_VERSION,
        "train_config_hash": format!("{:016x}", tc.config_hash()),
        "seed": tc.seed,
        "pairs": pairs.len(),
        "steps": outcome.losses.len(),
        "epoch_mean_losses": outcome.epoch_mean_losses(),
        "query_encoder": format!("{:016x}", outcome.model.query.fingerprint()),
        "doc_encoder": format!("{:016x}", outcome.model.doc.fingerprint()),
    });
    write_report(&cfg.paths.reports.join("train.json"), &report)
}

pub fn search(cfg: &PipelineConfig, args: &SearchArgs) -> Result<String, CliError> {
    let k = args.k.unwrap_or(cfg.k);
    if k == 0 {
        return Err(CliError::Usage("k must be at least 1".into()));
    }
    let qrels = args.queries.as_deref().map(load_qrels).transpose()?;
    let engine = Engine::load(cfg, &[args.retriever])?;
    match (&args.q, qrels) {
        (Some(q), _) => pretty(&engine.search(args.retriever, q, k)?),
        (None, Some(qrels)) => {
            let mut run = run_retrieval(engine.retriever(args.retriever)?, &qrels, k)?;
            run.retriever = args.retriever.as_str().to_string();
            match &args.out {
                Some(path) => {
                    write_report(path, &run)?;
                    pretty(&json!({ "queries": run.results.len(), "k_max": k, "path": path }))
                }
                None => pretty(&run),
            }
        }
        (None, None) => Err(CliError::Usage("give --q or --queries".into())),
    }
}

fn load_run(path: &Path) -> Result<RetrievalRun, CliError> {
    require(path)?;
    let run: RetrievalRun = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if run.format_version != csret_core::FORMAT_VERSION {
        return Err(CliError::Config(format!(
            "{} has format version {}, expected {}",
            path.display(),
            run.format_version,
            csret_core::FORMAT_VERSION
        )));
    }
    Ok(run)
}

pub fn eval(cfg: &PipelineConfig, args: &EvalArgs) -> Result<String, CliError> {
    let run = load_run(&args.run)?;
    let ks = if args.k.is_empty() { vec![cfg.k] } else { args.k.clone() };
    let qrels = load_qrels(&cfg.paths.qrels)?;
    let corpus = load_corpus(cfg)?;
    let report = evaluate(&run, &qrels, &ks, &corpus)?;
    if let Some(path) = &args.out {
        write_report(path, &report)?;
    }
    Ok(report.to_table())
}

fn parse_subset(spec: &str) -> Result<Vec<Source>, CliError> {
    spec.split([',', '+'])
        .filter(|s| !s.trim().is_empty())
        .map(|s| Ok(s.trim().parse::<Source>()?))
        .collect()
}

pub fn ablate(cfg: &PipelineConfig, args: &AblateArgs) -> Result<String, CliError> {
    let subsets = if args.subsets.is_empty() {
        vec![
            vec![Source::Haf],
            vec![Source::Haf, Source::Cbd],
            vec![Source::Haf, Source::Cbd, Source::Crc],
        ]
    } else {
        args.subsets.iter().map(|s| parse_subset(s)).collect::<Result<Vec<_>, _>>()?
    };
    let qrels = load_qrels(&cfg.paths.qrels)?;
    let pairs: Vec<TrainingPair> = if args.sparse_only {
        Vec::new()
    } else {
        require(&cfg.paths.pairs)?;
        read_jsonl(&cfg.paths.pairs)?
    };
    let corpus = load_corpus(cfg)?;
    let ab = AblationConfig {
        ks: args.k.clone(),
        bm25: cfg.bm25,
        tokenizer: cfg.tokenizer.clone(),
        train: cfg.train.clone(),
        include_positives: args.include_positives,
        contexts_dir: args.contexts_dir.clone(),
        context_k: cfg.k,
    };
    let report = run_corpus_ablation(&corpus, &subsets, &pairs, &qrels, &ab)?;
    write_report(&cfg.paths.reports.join("ablation.json"), &report)?;
    Ok(report.to_table())
}

pub fn sweep_k(cfg: &PipelineConfig, args: &SweepArgs) -> Result<String, CliError> {
    let qrels = load_qrels(&cfg.paths.qrels)?;
    let engine = Engine::load(cfg, &[args.retriever])?;
    let report = run_k_sweep(engine.retriever(args.retriever)?, &qrels, &args.ks, &engine.corpus)?;
    write_report(
        &cfg.paths.reports.join(format!("sweep_k_{}.json", args.retriever.as_str())),
        &report,
    )?;
    Ok(report.to_table())
}

pub fn contexts(cfg: &PipelineConfig, args: &ContextsArgs) -> Result<String, CliError> {
    let run = load_run(&args.run)?;
    let k = args.k.unwrap_or(cfg.k);
    if k == 0 {
        return Err(CliError::Usage("k must be at least 1".into()));
    }
    let qrels = load_qrels(&cfg.paths.qrels)?;
    let corpus = load_corpus(cfg)?;
    let mut inputs = Vec::new();
    for q in &qrels {
        let Some(ranked) = run.results.get(&q.query_id) else {
            continue;
        };
        let depth = ranked.len().min(k);
        inputs.push(assemble_reader_contexts(&q.query_id, &q.query, &ranked[..depth], &corpus)?);
    }
    export_reader_inputs(&inputs, &args.out)?;
    pretty(&json!({ "queries": inputs.len(), "path": args.out }))
}

pub fn read(cfg: &PipelineConfig, args: &ReadArgs) -> Result<String, CliError> {
    let endpoint = args
        .endpoint
        .clone()
        .or_else(|| cfg.reader_endpoint.clone())
        .ok_or_else(|| CliError::Config("no reader endpoint configured".into()))?;
    require(&args.inputs)?;
    let inputs = read_reader_inputs(&args.inputs)?;
    let client = ReaderClientConfig {
        timeout_ms: args.timeout_ms,
        retries: args.retries,
    };
    let outputs = call_external_reader(&endpoint, &inputs, &client)?;
    write_jsonl(&args.out, &outputs)?;
    pretty(&json!({ "outputs": outputs.len(), "path": args.out }))
}

pub fn serve(cfg: &PipelineConfig, args: &ServeArgs) -> Result<String, CliError> {
    let kinds = if args.retrievers.is_empty() {
        vec![RetrieverKind::Sparse]
    } else {
        args.retrievers.clone()
    };
    Engine::load_check(cfg, &kinds)?;
    let load_cfg = cfg.clone();
    crate::server::run(
        args.addr,
        cfg.k,
        move || Engine::load(&load_cfg, &kinds),
        |addr| {
            println!("listening on {addr}");
            log::info!("listening on {addr}");
        },
    )?;
    Ok(String::new())
}

pub fn fixture(args: &FixtureArgs) -> Result<String, CliError> {
    let fc = FixtureConfig {
        seed: args.seed,
        ..FixtureConfig::default()
    };
    let task = generate(&fc);
    let dir = &args.out;
    std::fs::create_dir_all(dir)?;
    for source in [Source::Haf, Source::Cbd, Source::Crc] {
        let docs: Vec<_> = task
            .documents
            .iter()
            .filter(|d| d.source == source)
            .map(|d| json!({ "id": d.id, "text": d.text, "origin": d.origin }))
            .collect();
        write_jsonl(&dir.join(format!("{}.jsonl", source.as_str().to_lowercase())), &docs)?;
    }
    write_jsonl(&dir.join("train_records.jsonl"), &task.train_records)?;
    write_jsonl(&dir.join("heldout_records.jsonl"), &task.heldout_records)?;
    write_jsonl(&dir.join("qrels.jsonl"), &task.paraphrase_qrels)?;
    write_jsonl(&dir.join("qrels_keyword.jsonl"), &task.keyword_qrels)?;
    let cfg = PipelineConfig {
        train: synthetic_train_config(),
        ..PipelineConfig::default()
    };
    std::fs::write(dir.join("config.json"), pretty(&cfg)?)?;
    log::info!(
        "config_hash={:016x} seed={} fixture_seed={}",
        cfg.config_hash(),
        cfg.train.seed,
        fc.seed
    );
    pretty(&json!({
        "documents": task.documents.len(),
        "train_records": task.train_records.len(),
        "heldout_records": task.heldout_records.len(),
        "dir": dir,
    }))
}
