//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;

use hintrank::corpus::Product;
use hintrank::hints::{Analysis, BrandHint, FeatureHint, HintSet};
use serde_json::Value;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn read_json(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

fn strs(v: &Value) -> Vec<String> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|s| s.as_str().unwrap().to_string())
        .collect()
}

/// HintSet from the JSON shape used in the golden files.
pub fn hintset_from_json(v: &Value) -> HintSet {
    let a = &v["analysis"];
    HintSet {
        analysis: Analysis {
            domain: a["domain"].as_str().unwrap().into(),
            ranking_intent: a["ranking_intent"].as_str().unwrap().into(),
            query_clarification: a["query_clarification"].as_str().unwrap().into(),
        },
        brands: v["brands"]
            .as_array()
            .unwrap()
            .iter()
            .map(|b| BrandHint {
                name: b["name"].as_str().unwrap().into(),
                confidence: b["confidence"].as_u64().unwrap() as u8,
            })
            .collect(),
        features: v["features"]
            .as_array()
            .unwrap()
            .iter()
            .map(|f| FeatureHint {
                name: f["name"].as_str().unwrap().into(),
                synonyms: strs(&f["synonyms"]),
                category: f["category"].as_str().unwrap().into(),
                importance: f["importance"].as_u64().unwrap() as u8,
                brands_known_for: strs(&f["brands_known_for"]),
            })
            .collect(),
        coverage_queries: strs(&v["coverage_queries"]),
    }
}

pub struct GoldenHintCase {
    pub name: String,
    pub raw: String,
    pub expected_queries: usize,
    pub expect: Result<HintSet, Value>,
    pub pointwise: Option<String>,
}

pub fn golden_hint_cases() -> (Product, Vec<GoldenHintCase>) {
    let v = read_json("hint_golden.json");
    let product = Product {
        id: "golden".into(),
        title: v["product"]["title"].as_str().unwrap().into(),
        description: v["product"]["description"].as_str().unwrap().into(),
        parent_category: "Sports".into(),
        sub_category: "Tents".into(),
        brand: None,
    };
    let cases = v["cases"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| GoldenHintCase {
            name: c["name"].as_str().unwrap().into(),
            raw: c["raw"].as_str().unwrap().into(),
            expected_queries: c["expected_queries"].as_u64().unwrap() as usize,
            expect: match c["expect"].get("ok") {
                Some(h) => Ok(hintset_from_json(h)),
                None => Err(c["expect"]["error"].clone()),
            },
            pointwise: c.get("pointwise").and_then(Value::as_str).map(str::to_string),
        })
        .collect();
    (product, cases)
}

/// Whether a parse error matches the golden description
/// (`{"kind": "missing_block" | "unclosed_block" | "literal", "block"}` or
/// `{"kind": "schema", "field"}`).
pub fn error_matches(err: &hintrank::hints::HintError, want: &Value) -> bool {
    use hintrank::hints::{BlockError, HintError};
    let kind = want["kind"].as_str().unwrap();
    match err {
        HintError::Block(BlockError::MissingBlock(b)) => kind == "missing_block" && want["block"] == *b,
        HintError::Block(BlockError::UnclosedBlock(b)) => kind == "unclosed_block" && want["block"] == *b,
        HintError::Literal { block, .. } => kind == "literal" && want["block"] == *block,
        HintError::Schema { field, .. } => kind == "schema" && want["field"] == field.as_str(),
    }
}

#[derive(Debug, Clone)]
pub struct Recorded {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

/// A one-thread HTTP/1.1 server that answers each request with the next
/// canned `(status, body)` and records what it received.
pub struct StubServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<Recorded>>>,
}

impl StubServer {
    pub fn start(responses: Vec<(u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = requests.clone();
        thread::spawn(move || {
            let mut queue = responses.into_iter();
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let Some((status, body)) = queue.next() else { break };
                if let Some(r) = serve_one(stream, status, &body) {
                    log.lock().unwrap().push(r);
                }
            }
        });
        Self { url, requests }
    }

    pub fn requests(&self) -> Vec<Recorded> {
        self.requests.lock().unwrap().clone()
    }
}

fn serve_one(stream: TcpStream, status: u16, body: &str) -> Option<Recorded> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();
    let mut headers = Vec::new();
    let mut len = 0usize;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
            if k == "content-length" {
                len = v.parse().ok()?;
            }
            headers.push((k, v));
        }
    }
    let mut buf = vec![0; len];
    reader.read_exact(&mut buf).ok()?;
    let reason = if status == 200 { "OK" } else { "Error" };
    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .ok()?;
    out.flush().ok()?;
    Some(Recorded {
        method,
        path,
        headers,
        body: String::from_utf8(buf).ok()?,
    })
}
