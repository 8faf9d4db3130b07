//! Read-only HTTP search over immutable, shared indexes.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, OnceLock};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde_json::json;

use crate::engine::{Engine, RetrieverKind};
use crate::CliError;

/// Empty until loading finishes; requests meanwhile get 503.
#[derive(Clone)]
pub struct AppState {
    engine: Arc<OnceLock<Result<Engine, String>>>,
    default_k: usize,
}

impl AppState {
    pub fn loading(default_k: usize) -> Self {
        AppState {
            engine: Arc::new(OnceLock::new()),
            default_k,
        }
    }

    pub fn finish(&self, engine: Result<Engine, CliError>) {
        let _ = self.engine.set(engine.map_err(|e| e.to_string()));
    }
}

pub fn router(state: AppState) -> Router {
    Router::new().route("/search", get(search)).with_state(state)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

async fn search(State(state): State<AppState>, Query(params): Query<HashMap<String, String>>) -> Response {
    let engine = match state.engine.get() {
        None => return error(StatusCode::SERVICE_UNAVAILABLE, "indexes are loading"),
        Some(Err(e)) => return error(StatusCode::SERVICE_UNAVAILABLE, format!("indexes failed to load: {e}")),
        Some(Ok(engine)) => engine,
    };
    let Some(q) = params.get("q") else {
        return error(StatusCode::BAD_REQUEST, "missing q");
    };
    let k = match params.get("k").map(|k| k.parse::<usize>()) {
        None => state.default_k,
        Some(Ok(k)) if k > 0 => k,
        Some(_) => return error(StatusCode::BAD_REQUEST, "k must be a positive integer"),
    };
    let kind = match params.get("retriever").map(|r| r.parse::<RetrieverKind>()) {
        None => RetrieverKind::Sparse,
        Some(Ok(kind)) => kind,
        Some(Err(e)) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    match engine.search(kind, q, k) {
        Ok(body) => Json(body).into_response(),
        Err(e @ CliError::Usage(_)) => error(StatusCode::BAD_REQUEST, e.to_string()),
        Err(e) => match e.kind() {
            "EmptyQuery" | "EmptyText" => error(StatusCode::BAD_REQUEST, e.to_string()),
            _ => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        },
    }
}

/// Binds `addr`, reports the bound address through `on_bound`, then serves
/// while `load` runs on a blocking thread.
pub fn run(
    addr: SocketAddr,
    default_k: usize,
    load: impl FnOnce() -> Result<Engine, CliError> + Send + 'static,
    on_bound: impl FnOnce(SocketAddr),
) -> Result<(), CliError> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        on_bound(listener.local_addr()?);
        let state = AppState::loading(default_k);
        let loader = state.clone();
        tokio::task::spawn_blocking(move || {
            let result = load();
            match &result {
                Ok(_) => log::info!("indexes loaded"),
                Err(e) => log::error!("loading failed: {e}"),
            }
            loader.finish(result);
        });
        axum::serve(listener, router(state)).await?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use csret_core::{Bm25Params, Corpus, Document, InvertedIndex, Source, TokenizerConfig};
    use std::io::{Read, Write};

    fn get(addr: SocketAddr, path: &str) -> (u16, String) {
        let mut s = std::net::TcpStream::connect(addr).unwrap();
        write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").unwrap();
        let mut raw = String::new();
        s.read_to_string(&mut raw).unwrap();
        let status = raw[9..12].parse().unwrap();
        let body = raw.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
        (status, body)
    }

    fn toy_engine() -> Engine {
        let corpus = Corpus::from_documents([
            Document::new("d1", "kid dance room", Source::Haf, ""),
            Document::new("d2", "kid kid dance", Source::Haf, ""),
            Document::new("d3", "sun dry clothes", Source::Crc, ""),
        ])
        .unwrap();
        let sparse = InvertedIndex::build(corpus.documents(), Bm25Params::default(), &TokenizerConfig::default()).unwrap();
        Engine {
            corpus,
            sparse: Some(sparse),
            dense: None,
        }
    }

    fn start(state: AppState) -> SocketAddr {
        let (tx, rx) = std::sync::mpsc::channel();
        std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, router(state)).await.unwrap();
            });
        });
        rx.recv().unwrap()
    }

    #[test]
    fn loading_then_ready() {
        let state = AppState::loading(10);
        let addr = start(state.clone());
        assert_eq!(get(addr, "/search?q=kid").0, 503);
        state.finish(Ok(toy_engine()));
        let (status, body) = get(addr, "/search?q=kid%20dance&k=2&retriever=sparse");
        assert_eq!(status, 200);
        let v: serde_json::Value = serde_json::from_str(&body).unwrap();
        assert_eq!(v["results"][0]["id"], "d2");
        assert_eq!(v["results"][1]["id"], "d1");
        assert_eq!(v["k"], 2);
        assert_eq!(v["retriever"], "sparse");
    }

    #[test]
    fn bad_requests() {
        let state = AppState::loading(10);
        state.finish(Ok(toy_engine()));
        let addr = start(state);
        assert_eq!(get(addr, "/search?k=2").0, 400);
        assert_eq!(get(addr, "/search?q=kid&k=0").0, 400);
        assert_eq!(get(addr, "/search?q=kid&k=two").0, 400);
        assert_eq!(get(addr, "/search?q=kid&retriever=neural").0, 400);
        assert_eq!(get(addr, "/search?q=kid&retriever=dense").0, 400);
        assert_eq!(get(addr, "/search?q=%21%21").0, 400);
    }

    #[test]
    fn concurrent_identical_requests_agree() {
        let state = AppState::loading(10);
        state.finish(Ok(toy_engine()));
        let addr = start(state);
        let handles: Vec<_> = (0..8)
            .map(|_| std::thread::spawn(move || get(addr, "/search?q=kid%20dance")))
            .collect();
        let bodies: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        assert!(bodies.iter().all(|b| b == &bodies[0] && b.0 == 200));
    }
}
