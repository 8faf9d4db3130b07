use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use csret_core::eval::{call_external_reader, ReaderClientConfig, ReaderContext, ReaderError};
use serde_json::Value;

fn input(id: &str, query: &str) -> ReaderContext {
    ReaderContext {
        query_id: id.into(),
        query: query.into(),
        contexts: vec![format!("question: {query} context: something")],
    }
}

/// Answers each request with `respond(attempt, body) -> (status, reply)`.
fn stub(respond: impl Fn(usize, &str) -> (u16, String) + Send + 'static) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/generate", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let attempt = counter.fetch_add(1, Ordering::SeqCst) + 1;
            let (status, reply) = respond(attempt, std::str::from_utf8(&body).unwrap());
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            );
        }
    });
    (url, hits)
}

fn echo(body: &str) -> String {
    let inputs: Vec<Value> = serde_json::from_str(body).unwrap();
    let outs: Vec<Value> = inputs
        .iter()
        .map(|i| serde_json::json!({"query_id": i["query_id"], "output": i["query"]}))
        .collect();
    serde_json::to_string(&outs).unwrap()
}

fn fast() -> ReaderClientConfig {
    ReaderClientConfig {
        timeout_ms: 2_000,
        retries: 2,
    }
}

#[test]
fn echo_server_returns_queries_in_input_order() {
    let (url, _) = stub(|_, body| (200, echo(body)));
    let inputs = [input("a", "why is the sky blue?"), input("b", "what dries clothes?")];
    let out = call_external_reader(&url, &inputs, &fast()).unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(out[0].query_id, "a");
    assert_eq!(out[0].output, "why is the sky blue?");
    assert_eq!(out[1].output, "what dries clothes?");
}

#[test]
fn server_errors_are_retried() {
    let (url, hits) = stub(|attempt, body| if attempt < 3 { (503, "busy".into()) } else { (200, echo(body)) });
    let out = call_external_reader(&url, &[input("a", "q")], &fast()).unwrap();
    assert_eq!(out[0].output, "q");
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, hits) = stub(|_, _| (422, "{}".into()));
    let err = call_external_reader(&url, &[input("a", "q")], &fast()).unwrap_err();
    assert!(matches!(err, ReaderError::HttpStatus(422)), "{err:?}");
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn wrong_shape_is_schema_mismatch() {
    let (url, _) = stub(|_, _| (200, r#"{"answers": []}"#.into()));
    let err = call_external_reader(&url, &[input("a", "q")], &fast()).unwrap_err();
    assert!(matches!(err, ReaderError::SchemaMismatch(_)), "{err:?}");

    let (url, _) = stub(|_, _| (200, r#"[{"query_id": "other", "output": "x"}]"#.into()));
    let err = call_external_reader(&url, &[input("a", "q")], &fast()).unwrap_err();
    assert!(err.to_string().contains("\"a\""), "{err}");
}

#[test]
fn silent_endpoint_times_out_after_retries() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/generate", listener.local_addr().unwrap());
    let cfg = ReaderClientConfig {
        timeout_ms: 150,
        retries: 1,
    };
    let err = call_external_reader(&url, &[input("a", "q")], &cfg).unwrap_err();
    drop(listener);
    match err {
        ReaderError::Timeout { attempts, .. } => assert_eq!(attempts, 2),
        other => panic!("expected timeout, got {other:?}"),
    }
}

#[test]
fn unreachable_endpoint_times_out() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let cfg = ReaderClientConfig {
        timeout_ms: 200,
        retries: 0,
    };
    let err = call_external_reader(&format!("http://127.0.0.1:{port}/"), &[input("a", "q")], &cfg).unwrap_err();
    assert!(matches!(err, ReaderError::Timeout { attempts: 1, .. }), "{err:?}");
}
