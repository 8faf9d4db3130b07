//! Blocking HTTP client for an external reader service.
//!
//! The request body is the JSON array of exported reader inputs; the reply
//! must be a JSON array of `{"query_id","output"}` covering every input.

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::ReaderContext;

#[derive(Debug, thiserror::Error)]
pub enum ReaderError {
    #[error("reader timed out after {attempts} attempt(s): {detail}")]
    Timeout { attempts: usize, detail: String },
    #[error("reader returned HTTP {0}")]
    HttpStatus(u16),
    #[error("reader response schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("reader client error: {0}")]
    Client(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReaderClientConfig {
    pub timeout_ms: u64,
    /// Extra attempts after the first on timeouts, connection failures and 5xx.
    pub retries: usize,
}

impl Default for ReaderClientConfig {
    fn default() -> Self {
        Self {
            timeout_ms: 30_000,
            retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReaderOutput {
    pub query_id: String,
    pub output: String,
}

/// Outputs in the order of `inputs`.
pub fn call_external_reader(endpoint: &str, inputs: &[ReaderContext], cfg: &ReaderClientConfig) -> Result<Vec<ReaderOutput>, ReaderError> {
    let timeout = Duration::from_millis(cfg.timeout_ms);
    let client = reqwest::blocking::Client::builder()
        .timeout(timeout)
        .connect_timeout(timeout)
        .build()
        .map_err(|e| ReaderError::Client(e.to_string()))?;

    let attempts = cfg.retries + 1;
    let mut last = String::new();
    for attempt in 1..=attempts {
        match client.post(endpoint).json(inputs).send() {
            Ok(resp) => {
                let status = resp.status();
                if status.is_server_error() && attempt < attempts {
                    log::warn!("reader attempt {attempt}: HTTP {status}");
                    continue;
                }
                if !status.is_success() {
                    return Err(ReaderError::HttpStatus(status.as_u16()));
                }
                let body = resp.text().map_err(|e| ReaderError::Timeout {
                    attempts: attempt,
                    detail: e.to_string(),
                })?;
                return match_outputs(inputs, &body);
            }
            Err(e) if e.is_timeout() || e.is_connect() || e.is_request() => {
                log::warn!("reader attempt {attempt}: {e}");
                last = e.to_string();
            }
            Err(e) => return Err(ReaderError::Client(e.to_string())),
        }
    }
    Err(ReaderError::Timeout { attempts, detail: last })
}

fn match_outputs(inputs: &[ReaderContext], body: &str) -> Result<Vec<ReaderOutput>, ReaderError> {
    let outputs: Vec<ReaderOutput> = serde_json::from_str(body).map_err(|e| ReaderError::SchemaMismatch(e.to_string()))?;
    let mut by_id: HashMap<String, String> = outputs.into_iter().map(|o| (o.query_id, o.output)).collect();
    inputs
        .iter()
        .map(|input| {
            by_id
                .remove(&input.query_id)
                .map(|output| ReaderOutput {
                    query_id: input.query_id.clone(),
                    output,
                })
                .ok_or_else(|| ReaderError::SchemaMismatch(format!("missing output for query_id {:?}", input.query_id)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(id: &str) -> ReaderContext {
        ReaderContext {
            query_id: id.into(),
            query: format!("query {id}"),
            contexts: vec![],
        }
    }

    #[test]
    fn matching_reorders_to_inputs() {
        let out = match_outputs(
            &[input("a"), input("b")],
            r#"[{"query_id":"b","output":"2"},{"query_id":"a","output":"1"}]"#,
        )
        .unwrap();
        assert_eq!(out[0].output, "1");
        assert_eq!(out[1].query_id, "b");
    }

    #[test]
    fn missing_id_is_named() {
        let err = match_outputs(&[input("a"), input("b")], r#"[{"query_id":"a","output":"1"}]"#).unwrap_err();
        assert!(matches!(&err, ReaderError::SchemaMismatch(m) if m.contains("\"b\"")));
        assert!(matches!(
            match_outputs(&[input("a")], r#"{"nope":1}"#),
            Err(ReaderError::SchemaMismatch(_))
        ));
    }
}
