mod common;

use std::sync::Arc;
use std::time::Duration;

use artsearch::config::EncoderMode;
use artsearch::service::{load_engine, AppState, BackgroundServer, ServeError};
use artsearch_core::eval::synthetic_image_bytes;
use artsearch_core::store::{Catalog, Corpus, CorpusSide, EmbeddingMatrix, LocalEmbeddingSet};
use artsearch_testkit::stub::{StubReply, StubServer};
use common::*;

const N: usize = 60;
const DIM: usize = 16;
const LOCALS: usize = 3;
const SEED: u64 = 4;

struct Fixture {
    _dir: tempfile::TempDir,
    server: BackgroundServer,
}

fn start_with(edit: impl FnOnce(&mut artsearch::config::ServiceConfig)) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synthetic_store(dir.path(), N, DIM, LOCALS, SEED);
    let mut cfg = config(manifest, SEED, LOCALS);
    edit(&mut cfg);
    let server = BackgroundServer::start(cfg).unwrap();
    wait_ready(&server, Duration::from_secs(30));
    Fixture { _dir: dir, server }
}

fn start() -> Fixture {
    start_with(|_| {})
}

#[test]
fn text_search_returns_ranked_schema_valid_results() {
    let f = start();
    let r = post_json(&f.server.url("/search/text"), r#"{"query":"item-7","k":5}"#);
    assert_eq!(r.status, 200, "{}", r.body);
    assert_eq!(r.header("content-type"), Some("application/json"));
    let body = r.json();
    let ids = check_results(&body, N);
    assert_eq!(ids.len(), 5);
    // the description is the mock key of item 7's latent
    assert_eq!(ids[0], 7);
    assert_eq!(body[0]["description"], "item-7");
    assert_eq!(body[0]["image_uri"], "synthetic://image/7");
    assert_eq!(body[0]["source_url"], "https://example.invalid/items/7");
}

#[test]
fn text_search_defaults_and_limits() {
    let f = start();
    let url = f.server.url("/search/text");
    let r = post_json(&url, r#"{"query":"a red cow in the room"}"#);
    assert_eq!(r.status, 200);
    assert_eq!(check_results(&r.json(), N).len(), 10);

    // k beyond the corpus returns everything
    let r = post_json(&url, r#"{"query":"x","k":1000}"#);
    assert_eq!(check_results(&r.json(), N).len(), N);

    // unknown fields are ignored
    let r = post_json(&url, r#"{"query":"x","k":2,"lang":"en","extra":{"a":1}}"#);
    assert_eq!(r.status, 200);
    assert_eq!(r.json().as_array().unwrap().len(), 2);

    let at_limit = format!(r#"{{"query":"{}"}}"#, "a".repeat(4096));
    assert_eq!(post_json(&url, &at_limit).status, 200);
    let over = format!(r#"{{"query":"{}"}}"#, "a".repeat(4097));
    let r = post_json(&url, &over);
    assert_eq!(r.status, 400);
    assert!(r.json()["error"].as_str().unwrap().contains("4096"));
}

#[test]
fn text_search_rejects_bad_requests() {
    let f = start();
    let url = f.server.url("/search/text");
    for body in [
        r#"{"query":""}"#,
        r#"{"query":"   "}"#,
        r#"{"k":3}"#,
        r#"{"query":5}"#,
        r#"{"query":"x","k":0}"#,
        r#"{"query":"x","k":-1}"#,
        r#"{"query":"x","k":1001}"#,
        "not json",
        "",
    ] {
        let r = post_json(&url, body);
        assert_eq!(r.status, 400, "{body}: {}", r.body);
        assert!(r.json()["error"].is_string());
    }
}

#[test]
fn image_search_ranks_descriptions_with_paired_images() {
    let f = start();
    let url = f.server.url("/search/image");
    let bytes = synthetic_image_bytes(11);
    let r = post_multipart(&url, &[("image", Some("q.png"), &bytes)]);
    assert_eq!(r.status, 200, "{}", r.body);
    let body = r.json();
    let ids = check_results(&body, N);
    assert_eq!(ids.len(), 10);
    assert_eq!(ids[0], 11);
    for hit in body.as_array().unwrap() {
        let id = hit["item_id"].as_u64().unwrap();
        assert_eq!(hit["image_uri"], format!("synthetic://image/{id}"));
    }

    // k as a form field, or as a query parameter
    let r = post_multipart(&url, &[("k", None, b"3"), ("image", Some("q"), &bytes)]);
    assert_eq!(r.json().as_array().unwrap().len(), 3);
    let r = post_multipart(
        &f.server.url("/search/image?k=4"),
        &[("image", Some("q"), &bytes)],
    );
    assert_eq!(r.json().as_array().unwrap().len(), 4);

    // unrelated parts are skipped
    let r = post_multipart(
        &url,
        &[("note", None, b"hello"), ("image", Some("q"), &bytes)],
    );
    assert_eq!(r.status, 200);
}

#[test]
fn image_upload_errors() {
    let f = start_with(|c| c.max_upload_bytes = 1 << 20);
    let url = f.server.url("/search/image");

    let r = post_multipart(&url, &[("image", Some("empty.png"), b"")]);
    assert_eq!(r.status, 400, "{}", r.body);

    let r = post_multipart(&url, &[("picture", Some("x.png"), b"item-1")]);
    assert_eq!(r.status, 400);
    assert!(r.body.contains("image"));

    let r = post_raw(&url, "application/json", b"{}");
    assert_eq!(r.status, 400);

    let big = vec![b'a'; (1 << 20) + 1];
    let r = post_multipart(&url, &[("image", Some("big.png"), &big)]);
    assert_eq!(r.status, 400);
    assert!(
        r.json()["error"].as_str().unwrap().contains("1048576"),
        "{}",
        r.body
    );

    // exactly at the limit is accepted
    let fits = vec![b'a'; 1 << 20];
    let r = post_multipart(&url, &[("image", Some("fits.png"), &fits)]);
    assert_eq!(r.status, 200, "{}", r.body);

    // not valid UTF-8 and no known image signature: the mock cannot decode
    let r = post_multipart(&url, &[("image", Some("x.bin"), &[0xff, 0xfe, 0x00, 0x81])]);
    assert_eq!(r.status, 415, "{}", r.body);

    let r = post_multipart(
        &url,
        &[("k", None, b"zero"), ("image", Some("q"), b"item-1")],
    );
    assert_eq!(r.status, 400);
}

#[test]
fn remote_encoder_failures_map_to_gateway_errors() {
    let stub = StubServer::start(|req| {
        if req
            .header("content-type")
            .is_some_and(|c| c.starts_with("multipart/"))
        {
            StubReply::json(415, "{\"error\":\"cannot decode\"}")
        } else {
            StubReply::json(500, "{\"error\":\"boom\"}")
        }
    });
    let f = start_with(|c| {
        c.encoder.mode = EncoderMode::Remote;
        c.encoder.endpoint = Some(stub.url("/encode"));
        c.encoder.timeout_ms = 2000;
    });
    let r = post_json(&f.server.url("/search/text"), r#"{"query":"x"}"#);
    assert_eq!(r.status, 502, "{}", r.body);
    let r = post_multipart(
        &f.server.url("/search/image"),
        &[("image", Some("q"), b"\x89PNG")],
    );
    assert_eq!(r.status, 415, "{}", r.body);

    let health = get(&f.server.url("/health")).json();
    assert_eq!(health["encoder_mode"], "remote");
}

#[test]
fn unreachable_remote_encoder_is_502() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let f = start_with(|c| {
        c.encoder.mode = EncoderMode::Remote;
        c.encoder.endpoint = Some(format!("http://127.0.0.1:{port}/encode"));
    });
    let r = post_json(&f.server.url("/search/text"), r#"{"query":"x"}"#);
    assert_eq!(r.status, 502, "{}", r.body);
}

#[test]
fn item_lookup() {
    let f = start();
    let r = get(&f.server.url("/items/0"));
    assert_eq!(r.status, 200);
    let v = r.json();
    assert_eq!(v["item_id"], 0);
    assert_eq!(v["description"], "item-0");
    assert_eq!(v["source_url"], "https://example.invalid/items/0");
    assert_eq!(v["stats"]["image_regions"], LOCALS);
    assert_eq!(v["stats"]["description_regions"], LOCALS);
    assert_eq!(v["stats"]["global_dim"], DIM);

    assert_eq!(get(&f.server.url(&format!("/items/{}", N - 1))).status, 200);
    assert_eq!(get(&f.server.url(&format!("/items/{N}"))).status, 404);
    assert_eq!(get(&f.server.url("/items/999999")).status, 404);
    assert_eq!(get(&f.server.url("/items/abc")).status, 400);
    assert_eq!(get(&f.server.url("/items/-1")).status, 400);
}

#[test]
fn health_echoes_manifest() {
    let f = start();
    let v = get(&f.server.url("/health")).json();
    assert_eq!(v["status"], "ok");
    assert_eq!(v["corpus_size"], N);
    assert_eq!(v["dims"]["global"], DIM);
    assert_eq!(v["dims"]["local"], DIM);
    assert_eq!(v["encoder_mode"], "mock");
    assert!(v["uptime_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn unloaded_service_answers_503_until_installed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(
        synthetic_store(dir.path(), N, DIM, LOCALS, SEED),
        SEED,
        LOCALS,
    );
    cfg.port = 8080;
    let state = AppState::new(cfg.clone());
    let server =
        BackgroundServer::with_state(state.clone(), "127.0.0.1:0".parse().unwrap()).unwrap();

    let r = get(&server.url("/health"));
    assert_eq!(r.status, 503);
    assert_eq!(r.json()["status"], "loading");
    assert_eq!(
        post_json(&server.url("/search/text"), r#"{"query":"x"}"#).status,
        503
    );
    assert_eq!(get(&server.url("/items/0")).status, 503);

    state.install(load_engine(&cfg).unwrap());
    assert_eq!(get(&server.url("/health")).status, 200);
    assert_eq!(
        post_json(&server.url("/search/text"), r#"{"query":"x"}"#).status,
        200
    );
}

#[test]
fn empty_corpus_returns_empty_list() {
    let dir = tempfile::tempdir().unwrap();
    let side = || {
        CorpusSide::new(
            EmbeddingMatrix::empty(DIM).unwrap(),
            LocalEmbeddingSet::empty(DIM).unwrap(),
        )
        .unwrap()
    };
    let corpus = Corpus::new("empty", side(), side(), Catalog::default()).unwrap();
    let manifest = corpus.write(dir.path()).unwrap();
    let server = BackgroundServer::start(config(manifest, SEED, LOCALS)).unwrap();
    let health = wait_ready(&server, Duration::from_secs(10));
    assert_eq!(health["corpus_size"], 0);
    let r = post_json(&server.url("/search/text"), r#"{"query":"x"}"#);
    assert_eq!(r.status, 200);
    assert_eq!(r.json(), serde_json::json!([]));
    assert_eq!(get(&server.url("/items/0")).status, 404);
}

#[test]
fn load_failure_stops_the_server() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synthetic_store(dir.path(), N, DIM, LOCALS, SEED);
    let path = dir.path().join("image_global.npy");
    let mut bytes = std::fs::read(&path).unwrap();
    *bytes.last_mut().unwrap() ^= 1;
    std::fs::write(&path, bytes).unwrap();
    let server = BackgroundServer::start(config(manifest, SEED, LOCALS)).unwrap();
    match server.join() {
        Err(ServeError::Load(e)) => assert!(e.to_string().contains("checksum"), "{e}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn concurrent_requests_match_serial_responses() {
    let f = start_with(|c| c.workers = Some(3));
    let url = f.server.url("/search/text");
    let queries: Vec<String> = (0..24)
        .map(|i| format!(r#"{{"query":"item-{i} q{i}","k":7}}"#))
        .collect();
    let serial: Vec<String> = queries.iter().map(|q| post_json(&url, q).body).collect();
    let url = Arc::new(url);
    let handles: Vec<_> = queries
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, q)| {
            let url = url.clone();
            std::thread::spawn(move || (i, post_json(&url, &q).body))
        })
        .collect();
    for h in handles {
        let (i, body) = h.join().unwrap();
        assert_eq!(body, serial[i], "query {i}");
    }
}

#[test]
fn service_never_mutates_store_files() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synthetic_store(dir.path(), N, DIM, LOCALS, SEED);
    let snapshot = || {
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().into_owned(),
                    std::fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        files
    };
    let before = snapshot();
    let server = BackgroundServer::start(config(manifest, SEED, LOCALS)).unwrap();
    wait_ready(&server, Duration::from_secs(30));
    post_json(&server.url("/search/text"), r#"{"query":"item-3"}"#);
    post_multipart(
        &server.url("/search/image"),
        &[("image", Some("q"), b"item-3")],
    );
    get(&server.url("/items/3"));
    server.stop().unwrap();
    assert_eq!(snapshot(), before);
}

#[test]
fn cors_and_static_assets() {
    let assets = tempfile::tempdir().unwrap();
    std::fs::write(assets.path().join("index.html"), "<h1>search</h1>").unwrap();
    let root = assets.path().to_path_buf();
    let f = start_with(move |c| {
        c.static_dir = Some(root);
        c.cors_origins = vec!["http://localhost:5173".into()];
    });
    let r = get(&f.server.url("/index.html"));
    assert_eq!(r.status, 200);
    assert_eq!(r.body, "<h1>search</h1>");

    let agent = agent();
    let resp = agent
        .post(&f.server.url("/search/text"))
        .header("origin", "http://localhost:5173")
        .header("content-type", "application/json")
        .send(r#"{"query":"x","k":1}"#)
        .unwrap();
    assert_eq!(
        resp.headers().get("access-control-allow-origin").unwrap(),
        "http://localhost:5173"
    );
    let resp = agent
        .post(&f.server.url("/search/text"))
        .header("origin", "http://evil.invalid")
        .header("content-type", "application/json")
        .send(r#"{"query":"x","k":1}"#)
        .unwrap();
    assert!(resp.headers().get("access-control-allow-origin").is_none());
}

#[test]
fn graceful_stop_returns_ok() {
    let f = start();
    let Fixture { _dir, server } = f;
    server.stop().unwrap();
}
