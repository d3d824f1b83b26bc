use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use accmine_core::ingest::{
    IngestError, Language, RemoteConfig, SearchQuery, SnapshotStore, extension_set, ingest_directory, search_remote,
};
use base64::Engine;

type Handler = dyn Fn(&str, &str) -> (u16, Vec<(String, String)>, String) + Send + Sync;

/// Minimal HTTP/1.1 server; one request per connection. Returns the base URL
/// and a log of request targets.
fn serve(handler: Box<Handler>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let log = Arc::new(Mutex::new(Vec::new()));
    let (log2, base2) = (log.clone(), base.clone());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut first = String::new();
            if reader.read_line(&mut first).is_err() {
                continue;
            }
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
            }
            let target = first.split_whitespace().nth(1).unwrap_or("").to_string();
            log2.lock().unwrap().push(target.clone());
            let (status, headers, body) = handler(&base2, &target);
            let mut resp = format!("HTTP/1.1 {status} X\r\nContent-Length: {}\r\nConnection: close\r\n", body.len());
            for (k, v) in headers {
                resp.push_str(&format!("{k}: {v}\r\n"));
            }
            resp.push_str("\r\n");
            resp.push_str(&body);
            let _ = stream.write_all(resp.as_bytes());
        }
    });
    (base, log)
}

fn cfg(base: &str, page_size: usize) -> RemoteConfig {
    RemoteConfig {
        endpoint: format!("{base}/search/code"),
        page_size,
        max_retries: 3,
        initial_backoff_ms: 1,
        request_timeout_secs: 5,
        ..RemoteConfig::default()
    }
}

fn query(phrases: &[&str]) -> SearchQuery {
    SearchQuery {
        phrases: phrases.iter().map(|s| s.to_string()).collect(),
        languages: vec![Language::C],
    }
}

fn param<'a>(target: &'a str, key: &str) -> Option<&'a str> {
    target
        .split_once('?')?
        .1
        .split('&')
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
}

fn item(base: &str, repo: &str, path: &str) -> serde_json::Value {
    serde_json::json!({
        "path": path,
        "repository": {"full_name": repo},
        "url": format!("{base}/content/{repo}/{path}"),
    })
}

#[test]
fn pages_dedups_and_filters() {
    let files: BTreeMap<&str, &str> = [
        ("a.c", "#pragma acc loop\nfor(;;){}\n"),
        ("b.c", "#pragma acc parallel loop\nfor(i=0;i<n;i++) x[i]=0;\n"),
        ("c.c", "int main(void) { return 0; }\n"),
    ]
    .into_iter()
    .collect();
    let files2 = files.clone();
    let (base, log) = serve(Box::new(move |base, target| {
        if let Some(rest) = target.strip_prefix("/content/org/repo/") {
            let body = base64::engine::general_purpose::STANDARD.encode(files2[rest]);
            // Wrapped base64 as the real API returns it.
            let wrapped = format!("{}\n{}", &body[..4], &body[4..]);
            return (200, vec![], serde_json::json!({"content": wrapped, "encoding": "base64"}).to_string());
        }
        let page: usize = param(target, "page").unwrap().parse().unwrap();
        let parallel = param(target, "q").unwrap().contains("parallel");
        let items = match (parallel, page) {
            (false, 1) => vec![item(base, "org/repo", "a.c"), item(base, "org/repo", "c.c")],
            (false, 2) => vec![item(base, "org/repo", "b.c")],
            (true, 1) => vec![item(base, "org/repo", "b.c")],
            _ => panic!("unexpected page {target}"),
        };
        (200, vec![], serde_json::json!({"items": items}).to_string())
    }));
    let got = search_remote(&query(&["#pragma acc loop", "#pragma acc parallel loop"]), &cfg(&base, 2), "tok", 5).unwrap();
    let paths: Vec<&str> = got.iter().map(|f| f.path.as_str()).collect();
    assert_eq!(paths, ["a.c", "b.c"]);
    assert_eq!(got[0].text, files["a.c"]);
    assert!(got.iter().all(|f| f.repository.as_deref() == Some("org/repo")));
    let log = log.lock().unwrap();
    let content: Vec<&String> = log.iter().filter(|t| t.starts_with("/content/")).collect();
    assert_eq!(content.len(), 3, "each distinct file fetched once: {log:?}");
    let searches = log.iter().filter(|t| t.starts_with("/search/")).count();
    assert_eq!(searches, 3);
}

#[test]
fn page_limit_caps_requests() {
    let (base, log) = serve(Box::new(|base, target| {
        if target.starts_with("/content/") {
            return (200, vec![], serde_json::json!({"content": "#pragma acc loop\n", "encoding": "utf-8"}).to_string());
        }
        let page = param(target, "page").unwrap();
        let items = vec![item(base, "r/x", &format!("p{page}.c"))];
        (200, vec![], serde_json::json!({"items": items}).to_string())
    }));
    let got = search_remote(&query(&["#pragma acc loop"]), &cfg(&base, 1), "tok", 2).unwrap();
    assert_eq!(got.len(), 2);
    assert_eq!(log.lock().unwrap().iter().filter(|t| t.starts_with("/search/")).count(), 2);
}

#[test]
fn empty_token_is_auth_error_without_requests() {
    let (base, log) = serve(Box::new(|_, _| (200, vec![], "{}".into())));
    let err = search_remote(&query(&["#pragma acc loop"]), &cfg(&base, 10), "  ", 1).unwrap_err();
    assert!(matches!(err, IngestError::AuthError { .. }), "{err:?}");
    assert!(log.lock().unwrap().is_empty());
}

#[test]
fn unauthorized_is_not_retried() {
    let (base, log) = serve(Box::new(|_, _| (401, vec![], "{}".into())));
    let err = search_remote(&query(&["#pragma acc loop"]), &cfg(&base, 10), "tok", 1).unwrap_err();
    assert!(matches!(err, IngestError::AuthError { .. }), "{err:?}");
    assert_eq!(log.lock().unwrap().len(), 1);
}

#[test]
fn forbidden_with_quota_left_is_auth_error() {
    let (base, _) = serve(Box::new(|_, _| (403, vec![("X-RateLimit-Remaining".into(), "10".into())], "{}".into())));
    let err = search_remote(&query(&["#pragma acc loop"]), &cfg(&base, 10), "tok", 1).unwrap_err();
    assert!(matches!(err, IngestError::AuthError { .. }), "{err:?}");
}

#[test]
fn rate_limit_retries_then_gives_up() {
    let (base, log) = serve(Box::new(|_, _| (429, vec![], "{}".into())));
    let err = search_remote(&query(&["#pragma acc loop"]), &cfg(&base, 10), "tok", 1).unwrap_err();
    assert!(matches!(err, IngestError::RateLimited { .. }), "{err:?}");
    assert_eq!(log.lock().unwrap().len(), 4);

    let (base, log) = serve(Box::new(|_, _| (403, vec![("X-RateLimit-Remaining".into(), "0".into())], "{}".into())));
    let err = search_remote(&query(&["#pragma acc loop"]), &cfg(&base, 10), "tok", 1).unwrap_err();
    assert!(matches!(err, IngestError::RateLimited { .. }), "{err:?}");
    assert_eq!(log.lock().unwrap().len(), 4);
}

#[test]
fn rate_limit_recovers() {
    let calls = Arc::new(Mutex::new(0));
    let (base, _) = serve(Box::new(move |_, target| {
        if target.starts_with("/search/") {
            let mut n = calls.lock().unwrap();
            *n += 1;
            if *n <= 2 {
                return (429, vec![], "{}".into());
            }
        }
        (200, vec![], serde_json::json!({"items": []}).to_string())
    }));
    let got = search_remote(&query(&["#pragma acc loop"]), &cfg(&base, 10), "tok", 1).unwrap();
    assert!(got.is_empty());
}

#[test]
fn server_errors_become_network_error() {
    let (base, log) = serve(Box::new(|_, _| (503, vec![], "{}".into())));
    let err = search_remote(&query(&["#pragma acc loop"]), &cfg(&base, 10), "tok", 1).unwrap_err();
    assert!(matches!(err, IngestError::NetworkError { .. }), "{err:?}");
    assert_eq!(log.lock().unwrap().len(), 4);
}

#[test]
fn malformed_json_is_reported() {
    let (base, _) = serve(Box::new(|_, _| (200, vec![], "not json".into())));
    let err = search_remote(&query(&["#pragma acc loop"]), &cfg(&base, 10), "tok", 1).unwrap_err();
    assert!(matches!(err, IngestError::MalformedResponse { .. }), "{err:?}");
}

#[test]
fn directory_ingest_is_deterministic_and_snapshots_round_trip() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/corpus");
    let exts = extension_set(["c", "cpp"]);
    let a = ingest_directory(&root, &exts).unwrap();
    let b = ingest_directory(&root, &exts).unwrap();
    assert_eq!(a, b);
    let paths: Vec<&str> = a.files.iter().map(|f| f.path.as_str()).collect();
    let mut sorted = paths.clone();
    sorted.sort();
    assert_eq!(paths, sorted);
    assert_eq!(paths.iter().collect::<BTreeSet<_>>().len(), paths.len());
    assert!(paths.iter().all(|p| p.ends_with(".c") || p.ends_with(".cpp")));

    let dir = tempfile::tempdir().unwrap();
    let store = SnapshotStore::new(dir.path());
    let m1 = store.save(&a.files).unwrap();
    assert!(SnapshotStore::is_snapshot(dir.path()));
    assert_eq!(store.load().unwrap(), a.files);
    let m2 = store.save(&a.files).unwrap();
    let hashes = |m: &accmine_core::ingest::SnapshotManifest| m.entries.iter().map(|e| e.sha256.clone()).collect::<Vec<_>>();
    assert_eq!(hashes(&m2), hashes(&m1));
}

#[test]
fn missing_directory_is_an_error() {
    let err = ingest_directory(std::path::Path::new("/nonexistent/accmine"), &extension_set(["c"])).unwrap_err();
    assert!(matches!(err, IngestError::NotADirectory(_)));
}
