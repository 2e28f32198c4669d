//! Augmentation against a local stand-in for a chat-completions server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use affordance_vqa::augment::{request_grounding_tasks, HttpTransport, LlmEndpointConfig, Origin, TaskArtifact};
use serde_json::{json, Value};

struct Request {
    headers: Vec<(String, String)>,
    body: Value,
}

type Handler = dyn Fn(usize, &Request) -> (u16, String) + Send + Sync;

/// Serves every connection on its own thread; `handler` gets the request
/// number (0-based) and the parsed request.
fn serve(handler: Arc<Handler>) -> (String, Arc<Mutex<Vec<Request>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let counter = Arc::new(AtomicUsize::new(0));
    let log = seen.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            let (handler, counter, log) = (handler.clone(), counter.clone(), log.clone());
            std::thread::spawn(move || handle(stream, &*handler, &counter, &log));
        }
    });
    (addr, seen)
}

fn handle(stream: TcpStream, handler: &Handler, counter: &AtomicUsize, log: &Mutex<Vec<Request>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    let mut headers = Vec::new();
    let mut len = 0;
    loop {
        line.clear();
        reader.read_line(&mut line).unwrap();
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        let (k, v) = l.split_once(':').unwrap();
        let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
        if k == "content-length" {
            len = v.parse().unwrap();
        }
        headers.push((k, v));
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    let req = Request {
        headers,
        body: serde_json::from_slice(&body).unwrap_or(Value::Null),
    };
    let n = counter.fetch_add(1, Ordering::SeqCst);
    let (status, payload) = handler(n, &req);
    log.lock().unwrap().push(req);
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )
    .unwrap();
}

fn completion(content: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

fn object_of(req: &Request) -> String {
    let prompt = req.body["messages"][0]["content"].as_str().unwrap_or_default();
    prompt
        .lines()
        .find_map(|l| l.strip_prefix("OBJECT_NAME: "))
        .unwrap_or_default()
        .to_string()
}

fn cfg(url: &str) -> LlmEndpointConfig {
    LlmEndpointConfig {
        base_url: url.to_string(),
        api_key_env: "AVQA_TEST_STUB_KEY".into(),
        max_retries: 2,
        backoff_base_ms: 5,
        backoff_max_ms: 20,
        timeout_ms: 5_000,
        ..Default::default()
    }
}

#[test]
fn retries_then_filters_reply() {
    let handler: Arc<Handler> = Arc::new(|n, _req: &Request| {
        if n == 0 {
            (500, "{}".into())
        } else {
            let reply = r#"Sure: ```{"wrench": ["tighten a bolt", "hold the wrench", "loosen a rusty nut"]}```"#;
            (200, completion(reply))
        }
    });
    let (url, seen) = serve(handler);
    std::env::set_var("AVQA_TEST_STUB_KEY", "sk-test");
    let tasks = request_grounding_tasks("wrench", &[], &cfg(&url), &HttpTransport).unwrap();
    let got: Vec<&str> = tasks.iter().map(|t| t.description.as_str()).collect();
    assert_eq!(got, vec!["tighten a bolt", "loosen a rusty nut"]);
    assert!(tasks.iter().all(|t| t.origin == Origin::Llm));

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    let auth = seen[1]
        .headers
        .iter()
        .find(|(k, _)| k == "authorization")
        .map(|(_, v)| v.as_str());
    assert_eq!(auth, Some("Bearer sk-test"));
    assert_eq!(object_of(&seen[1]), "wrench");
}

#[test]
fn gives_up_after_retry_budget() {
    let handler: Arc<Handler> = Arc::new(|_, _req: &Request| (200, completion("no json here")));
    let (url, seen) = serve(handler);
    let err = request_grounding_tasks("hammer", &[], &cfg(&url), &HttpTransport).unwrap_err();
    assert!(err.to_string().contains("3 attempt"), "{err}");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn cli_augment_against_endpoint() {
    let handler: Arc<Handler> = Arc::new(|_, req: &Request| {
        let obj = object_of(req);
        let reply = json!({ obj.clone(): [format!("carry the {obj}"), "sort small parts", "prop open a window"] });
        (200, completion(&reply.to_string()))
    });
    let (url, _) = serve(handler);
    let dir = tempfile::tempdir().unwrap();
    let fixtures = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let store = dir.path().join("store.json");
    let tasks = dir.path().join("tasks.json");
    let run = |args: &[&str]| {
        std::process::Command::new(env!("CARGO_BIN_EXE_avqa"))
            .args(args)
            .status()
            .unwrap()
            .code()
    };
    let coco = format!("coco-detection:H={}", fixtures.join("coco").display());
    assert_eq!(
        run(&["ingest", "--corpus", &coco, "--out", store.to_str().unwrap()]),
        Some(0)
    );
    let code = run(&[
        "augment",
        "--store",
        store.to_str().unwrap(),
        "--endpoint",
        &url,
        "--max-retries",
        "0",
        "--out",
        tasks.to_str().unwrap(),
    ]);
    assert_eq!(code, Some(0));
    let art = TaskArtifact::read_json(&tasks).unwrap();
    let cats: Vec<&String> = art.tasks.keys().collect();
    assert_eq!(cats, ["hammer", "mug", "pan", "screwdriver"]);
    for (cat, entries) in &art.tasks {
        let d: Vec<&str> = entries.iter().map(|e| e.description.as_str()).collect();
        // "carry the <name>" leaks the name and is dropped
        assert_eq!(d, ["sort small parts", "prop open a window"], "{cat}");
    }
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("tasks.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["endpoint"], json!(url));
    assert_eq!(manifest["exit_code"], json!(0));
}
