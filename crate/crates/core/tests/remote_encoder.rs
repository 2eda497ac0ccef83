use std::sync::Arc;
use std::time::{Duration, Instant};

use artsearch_core::encoder::{
    remote_encoder, EncoderAdapter, EncoderDims, EncoderError, MockEncoder,
};
use artsearch_core::engine::{Engine, Query};
use artsearch_core::eval::{generate_synthetic_corpus, SynthParams};
use artsearch_core::scoring::{FusionConfig, Modality};
use artsearch_testkit::stub::{StubReply, StubServer};
use serde_json::json;

const DIMS: EncoderDims = EncoderDims {
    global: 512,
    local: 512,
};

fn unit(dim: usize, hot: usize) -> Vec<f32> {
    let mut v = vec![0.0; dim];
    v[hot] = 1.0;
    v
}

fn reply(global: usize, local: usize, locals: usize) -> String {
    json!({
        "global": unit(global, 0),
        "locals": (0..locals).map(|i| unit(local, i % local)).collect::<Vec<_>>(),
    })
    .to_string()
}

#[test]
fn text_request_and_response() {
    let server = StubServer::start(|_| StubReply::json(200, reply(512, 512, 3)));
    let enc = remote_encoder(&server.url("/encode"), 2000, DIMS).unwrap();
    let e = enc.encode_text("a red cow in the room").unwrap();
    assert_eq!(e.modality(), Modality::Text);
    assert_eq!((e.global_dim(), e.local_count()), (512, 3));

    let req = &server.received()[0];
    assert_eq!(
        (req.method.as_str(), req.path.as_str()),
        ("POST", "/encode")
    );
    assert!(req
        .header("content-type")
        .unwrap()
        .starts_with("application/json"));
    let body: serde_json::Value = serde_json::from_slice(&req.body).unwrap();
    assert_eq!(
        body,
        json!({"modality": "text", "text": "a red cow in the room"})
    );
}

#[test]
fn image_sent_as_multipart() {
    let server = StubServer::start(|_| StubReply::json(200, reply(512, 512, 2)));
    let enc = remote_encoder(&server.url("/encode"), 2000, DIMS).unwrap();
    let payload = b"\x89PNG\r\n\x1a\n\x00\x01binary";
    let e = enc.encode_image(payload).unwrap();
    assert_eq!(e.modality(), Modality::Image);

    let req = &server.received()[0];
    let ct = req.header("content-type").unwrap();
    let boundary = ct.strip_prefix("multipart/form-data; boundary=").unwrap();
    let body = &req.body;
    assert!(body.windows(payload.len()).any(|w| w == payload));
    assert!(body.starts_with(format!("--{boundary}\r\n").as_bytes()));
    let text = String::from_utf8_lossy(body);
    assert!(text.contains("name=\"image\""));
    assert!(text.contains("name=\"modality\"\r\n\r\nimage\r\n"));
}

#[test]
fn global_dim_511_against_512_store() {
    let server = StubServer::start(|_| StubReply::json(200, reply(511, 512, 2)));
    let enc = remote_encoder(&server.url("/encode"), 2000, DIMS).unwrap();
    match enc.encode_text("x") {
        Err(EncoderError::DimMismatch {
            what: "global",
            expected: 512,
            found: 511,
        }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn local_dim_mismatch() {
    let server = StubServer::start(|_| StubReply::json(200, reply(512, 500, 2)));
    let enc = remote_encoder(&server.url("/encode"), 2000, DIMS).unwrap();
    assert!(matches!(
        enc.encode_text("x"),
        Err(EncoderError::DimMismatch { what: "local", .. })
    ));
}

#[test]
fn non_200_status() {
    let server = StubServer::start(|_| StubReply::json(500, "{\"error\":\"boom\"}"));
    let enc = remote_encoder(&server.url("/encode"), 2000, DIMS).unwrap();
    match enc.encode_text("x") {
        Err(EncoderError::Status { status: 500, body }) => assert!(body.contains("boom")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unsupported_media_maps_to_undecodable() {
    let server = StubServer::start(|_| StubReply::json(415, "cannot decode"));
    let enc = remote_encoder(&server.url("/encode"), 2000, DIMS).unwrap();
    assert!(matches!(
        enc.encode_image(b"\xff\xd8\xffjunk"),
        Err(EncoderError::Undecodable(_))
    ));
}

#[test]
fn malformed_body() {
    for body in [
        "not json",
        "{\"global\": [1.0]}",
        "{\"global\": [], \"locals\": []}",
    ] {
        let server = StubServer::start(move |_| StubReply::json(200, body));
        let enc = remote_encoder(&server.url("/encode"), 2000, DIMS).unwrap();
        let err = enc.encode_text("x").unwrap_err();
        assert!(
            matches!(
                err,
                EncoderError::Malformed(_) | EncoderError::DimMismatch { .. }
            ),
            "{body}: {err:?}"
        );
    }
    let server = StubServer::start(|_| StubReply::json(200, "{\"global\": [1,0], \"locals\": []}"));
    let enc = remote_encoder(
        &server.url("/encode"),
        2000,
        EncoderDims {
            global: 2,
            local: 2,
        },
    )
    .unwrap();
    assert!(matches!(
        enc.encode_text("x"),
        Err(EncoderError::Malformed(_))
    ));
}

#[test]
fn silent_server_times_out() {
    let server = StubServer::start(|_| StubReply::Hang);
    let enc = remote_encoder(&server.url("/encode"), 300, DIMS).unwrap();
    let start = Instant::now();
    assert!(matches!(
        enc.encode_text("x"),
        Err(EncoderError::Timeout(300))
    ));
    let elapsed = start.elapsed();
    assert!(
        elapsed >= Duration::from_millis(250) && elapsed < Duration::from_secs(5),
        "{elapsed:?}"
    );
}

#[test]
fn closed_port_is_unreachable() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let enc = remote_encoder(&format!("http://127.0.0.1:{port}/encode"), 1000, DIMS).unwrap();
    assert!(matches!(
        enc.encode_text("x"),
        Err(EncoderError::Unreachable(_))
    ));
}

#[test]
fn swapping_mock_for_remote_keeps_rankings() {
    let synth = generate_synthetic_corpus(&SynthParams {
        n: 60,
        dim: 16,
        local_count: 3,
        noise: 0.3,
        seed: 21,
    })
    .unwrap();
    let mock: MockEncoder = synth.encoder.clone();
    let served = mock.clone();
    // the stub answers with exactly what the mock would produce
    let server = StubServer::start(move |req| {
        let body: serde_json::Value = serde_json::from_slice(&req.body).unwrap();
        let e = served.encode_text(body["text"].as_str().unwrap()).unwrap();
        let locals: Vec<Vec<f32>> = e.locals().rows().map(<[f32]>::to_vec).collect();
        StubReply::json(
            200,
            json!({"global": e.global(), "locals": locals}).to_string(),
        )
    });
    let dims = EncoderDims {
        global: 16,
        local: 16,
    };
    let remote = remote_encoder(&server.url("/encode"), 2000, dims).unwrap();
    let with_mock = Engine::new(
        synth.corpus.clone(),
        FusionConfig::default(),
        Arc::new(mock),
    )
    .unwrap();
    let with_remote = Engine::new(synth.corpus, FusionConfig::default(), Arc::new(remote)).unwrap();
    assert_eq!(with_remote.encoder_mode(), "remote");
    for text in ["item-3", "item-40", "a red cow in the room"] {
        let q = Query::text(text, 10).unwrap();
        assert_eq!(
            with_mock.search(&q).unwrap(),
            with_remote.search(&q).unwrap(),
            "{text}"
        );
    }
}
