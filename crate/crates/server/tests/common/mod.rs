#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use artsearch::config::ServiceConfig;
use artsearch::service::BackgroundServer;
use artsearch_core::eval::{generate_synthetic_corpus, write_synthetic_corpus, SynthParams};

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(60)))
        .build()
        .into()
}

/// Writes a noise-free synthetic store and returns its manifest path.
pub fn synthetic_store(dir: &Path, n: usize, dim: usize, locals: usize, seed: u64) -> PathBuf {
    let synth = generate_synthetic_corpus(&SynthParams {
        n,
        dim,
        local_count: locals,
        noise: 0.0,
        seed,
    })
    .unwrap();
    write_synthetic_corpus(&synth, dir).unwrap()
}

/// Mock-encoder config on an ephemeral local port, keyed like the store.
pub fn config(manifest: PathBuf, seed: u64, locals: usize) -> ServiceConfig {
    let mut c = ServiceConfig {
        port: 0,
        manifest,
        ..ServiceConfig::default()
    };
    c.encoder.mock_seed = seed;
    c.encoder.mock_local_count = locals;
    c
}

pub struct Response {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl Response {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.body).unwrap_or_else(|e| panic!("{e}: {}", self.body))
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

fn collect(r: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Response {
    let mut r = r.expect("transport");
    let headers = r
        .headers()
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_str().unwrap_or("").to_string()))
        .collect();
    Response {
        status: r.status().as_u16(),
        headers,
        body: r.body_mut().read_to_string().unwrap(),
    }
}

pub fn get(url: &str) -> Response {
    collect(agent().get(url).call())
}

pub fn post_json(url: &str, body: &str) -> Response {
    collect(
        agent()
            .post(url)
            .header("content-type", "application/json")
            .send(body),
    )
}

pub fn post_raw(url: &str, content_type: &str, body: &[u8]) -> Response {
    collect(
        agent()
            .post(url)
            .header("content-type", content_type)
            .send(body),
    )
}

pub const BOUNDARY: &str = "----artsearch-test-boundary";

/// A multipart body from `(name, filename, bytes)` parts.
pub fn multipart(parts: &[(&str, Option<&str>, &[u8])]) -> Vec<u8> {
    let mut body = Vec::new();
    for (name, filename, bytes) in parts {
        body.extend_from_slice(format!("--{BOUNDARY}\r\n").as_bytes());
        match filename {
            Some(f) => body.extend_from_slice(
                format!(
                    "Content-Disposition: form-data; name=\"{name}\"; filename=\"{f}\"\r\nContent-Type: application/octet-stream\r\n\r\n"
                )
                .as_bytes(),
            ),
            None => body.extend_from_slice(
                format!("Content-Disposition: form-data; name=\"{name}\"\r\n\r\n").as_bytes(),
            ),
        }
        body.extend_from_slice(bytes);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    body
}

pub fn post_multipart(url: &str, parts: &[(&str, Option<&str>, &[u8])]) -> Response {
    post_raw(
        url,
        &format!("multipart/form-data; boundary={BOUNDARY}"),
        &multipart(parts),
    )
}

/// Polls /health until it answers 200.
pub fn wait_ready(server: &BackgroundServer, within: Duration) -> serde_json::Value {
    let start = Instant::now();
    loop {
        let r = get(&server.url("/health"));
        if r.status == 200 {
            return r.json();
        }
        assert_eq!(r.status, 503, "{}", r.body);
        assert!(start.elapsed() < within, "service not ready: {}", r.body);
        std::thread::sleep(Duration::from_millis(20));
    }
}

/// Keys every search result must carry, and nothing else.
pub const RESULT_KEYS: [&str; 7] = [
    "description",
    "external_id",
    "image_uri",
    "item_id",
    "rank",
    "score",
    "source_url",
];

/// Checks one search response against the published result schema and
/// rank order; returns the item ids.
pub fn check_results(body: &serde_json::Value, corpus_size: usize) -> Vec<usize> {
    let items = body.as_array().expect("array");
    let mut ids = Vec::new();
    let mut prev = f64::INFINITY;
    for (i, r) in items.iter().enumerate() {
        let obj = r.as_object().expect("object");
        let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(keys, RESULT_KEYS, "{r}");
        assert_eq!(r["rank"].as_u64(), Some(i as u64 + 1));
        let id = r["item_id"].as_u64().expect("item_id") as usize;
        assert!(id < corpus_size);
        for key in ["external_id", "description", "image_uri", "source_url"] {
            assert!(r[key].is_string(), "{key}: {r}");
        }
        let score = r["score"].as_object().expect("score object");
        let mut sk: Vec<&str> = score.keys().map(String::as_str).collect();
        sk.sort_unstable();
        assert_eq!(sk, ["fused", "global", "local"]);
        let fused = r["score"]["fused"].as_f64().unwrap();
        for key in ["fused", "global", "local"] {
            let v = r["score"][key].as_f64().unwrap();
            assert!((-1.0 - 1e-6..=1.0 + 1e-6).contains(&v), "{key} = {v}");
        }
        assert!(fused <= prev, "not in rank order: {fused} after {prev}");
        prev = fused;
        ids.push(id);
    }
    ids
}
