//! Reader inputs: each retrieved document paired with the query, in rank
//! order, using the template `question: {query} context: {document}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::rank::ScoredDoc;
use crate::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReaderContext {
    pub query_id: String,
    pub query: String,
    pub contexts: Vec<String>,
}

pub fn assemble_reader_contexts(query_id: &str, query: &str, ranked: &[ScoredDoc], corpus: &Corpus) -> Result<ReaderContext, Error> {
    let contexts = ranked
        .iter()
        .map(|hit| {
            let doc = corpus.get_document(&hit.id)?;
            Ok(format!("question: {query} context: {}", doc.text))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(ReaderContext {
        query_id: query_id.to_string(),
        query: query.to_string(),
        contexts,
    })
}

/// One JSON object per line: `{"query_id","query","contexts"}`.
pub fn export_reader_inputs(inputs: &[ReaderContext], path: &Path) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    for input in inputs {
        serde_json::to_writer(&mut w, input)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_reader_inputs(path: &Path) -> Result<Vec<ReaderContext>, Error> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if !line.is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
