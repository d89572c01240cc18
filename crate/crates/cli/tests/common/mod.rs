#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

pub const BIN: &str = env!("CARGO_BIN_EXE_iul");

pub fn iul(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("IUL_REVIEW_TOKEN")
        .output()
        .expect("binary runs")
}

/// Runs a stage and panics with its stderr on failure.
pub fn ok(out: &Path, args: &[&str]) -> String {
    let o = iul(out, args);
    assert!(o.status.success(), "iul {args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

pub fn synth(dir: &Path, sentences: usize) -> (PathBuf, PathBuf) {
    let o = Command::new(BIN)
        .args(["synth", "--dir"])
        .arg(dir)
        .args(["--sentences", &sentences.to_string()])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    (dir.join("annotated.jsonl"), dir.join("pool.jsonl"))
}

/// ingest through split.
pub fn prepare(out: &Path, annotated: &Path, pool: Option<&Path>) {
    let mut args = vec!["ingest", "--annotated", annotated.to_str().unwrap()];
    if let Some(p) = pool {
        args.extend(["--pool", p.to_str().unwrap()]);
    }
    ok(out, &args);
    ok(out, &["consolidate"]);
    ok(out, &["label"]);
    ok(out, &["split"]);
}

/// Every file under `dir` except the timestamped logs, relative path to bytes.
pub fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            let rel = path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
            if rel == "logs" || rel == "cache" {
                continue;
            }
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

pub fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let path = entry.unwrap().path();
        let target = to.join(path.file_name().unwrap());
        if path.is_dir() {
            copy_dir(&path, &target);
        } else {
            std::fs::copy(&path, &target).unwrap();
        }
    }
}

/// Minimal HTTP/1.1 server answering every POST through `handler(path, body)`.
pub struct Stub {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
}

pub fn stub_server(handler: fn(&str, &str) -> String) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let counter = counter.clone();
            std::thread::spawn(move || {
                let _ = respond(stream, handler, &counter);
            });
        }
    });
    Stub { url, hits }
}

fn respond(stream: TcpStream, handler: fn(&str, &str) -> String, hits: &AtomicUsize) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
    let mut length = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body)?;
    hits.fetch_add(1, Ordering::SeqCst);
    let reply = handler(&path, &String::from_utf8_lossy(&body));
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        reply.len(),
        reply
    )?;
    stream.flush()
}

/// Chat-completion reply whose final answer is always 1.
pub fn always_positive(_path: &str, _body: &str) -> String {
    serde_json::json!({
        "choices": [{ "message": { "role": "assistant", "content": "Reasoning: flagged.\n\nFinal Answer: 1" } }]
    })
    .to_string()
}

/// Plain GET returning `(status, body)`.
pub fn http_get(addr: &str, path: &str, token: Option<&str>) -> (u16, String) {
    let mut stream = TcpStream::connect(addr).unwrap();
    let auth = token.map(|t| format!("Authorization: Bearer {t}\r\n")).unwrap_or_default();
    write!(stream, "GET {path} HTTP/1.1\r\nHost: {addr}\r\n{auth}Connection: close\r\n\r\n").unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    let status = response.split_whitespace().nth(1).unwrap().parse().unwrap();
    let body = response.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    (status, body)
}
