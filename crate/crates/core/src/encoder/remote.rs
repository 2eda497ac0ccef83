//! HTTP client for an external encoder service.
//!
//! Wire contract:
//!
//! * text: `POST <endpoint>` with JSON `{"modality": "text", "text": "..."}`
//! * image: `POST <endpoint>` as `multipart/form-data` with a `modality`
//!   field set to `image` and the raw bytes in an `image` file field
//!
//! A successful reply is `200` with JSON `{"global": [f32...], "locals":
//! [[f32...], ...]}`. A `415` reply means the image could not be decoded.

use std::io;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::{EncoderAdapter, EncoderDims, EncoderError};
use crate::scoring::{Modality, QueryEmbedding};

pub const DEFAULT_TIMEOUT_MS: u64 = 5000;
const MAX_RESPONSE_BYTES: u64 = 64 << 20;

#[derive(Serialize)]
struct TextRequest<'a> {
    modality: Modality,
    text: &'a str,
}

#[derive(Deserialize)]
struct EncoderResponse {
    global: Vec<f32>,
    locals: Vec<Vec<f32>>,
}

/// Client for a remote encoder. Calls are blocking; the agent pools
/// connections and is safe to share across threads.
pub struct RemoteEncoder {
    endpoint: String,
    timeout_ms: u64,
    dims: EncoderDims,
    agent: Agent,
}

impl std::fmt::Debug for RemoteEncoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteEncoder")
            .field("endpoint", &self.endpoint)
            .field("timeout_ms", &self.timeout_ms)
            .field("dims", &self.dims)
            .finish()
    }
}

pub fn remote_encoder(
    endpoint_url: &str,
    timeout_ms: u64,
    dims: EncoderDims,
) -> Result<RemoteEncoder, EncoderError> {
    RemoteEncoder::new(endpoint_url, timeout_ms, dims)
}

impl RemoteEncoder {
    /// `dims` are the store dimensions responses must match.
    pub fn new(
        endpoint_url: &str,
        timeout_ms: u64,
        dims: EncoderDims,
    ) -> Result<Self, EncoderError> {
        let uri: ureq::http::Uri = endpoint_url
            .parse()
            .map_err(|e| EncoderError::BadUrl(format!("{endpoint_url}: {e}")))?;
        if uri.scheme_str() != Some("http") || uri.host().is_none() {
            return Err(EncoderError::BadUrl(format!(
                "{endpoint_url}: expected an http:// url with a host"
            )));
        }
        if timeout_ms == 0 {
            return Err(EncoderError::BadUrl("timeout must be positive".into()));
        }
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            endpoint: endpoint_url.to_string(),
            timeout_ms,
            dims,
            agent,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn map_transport(&self, err: ureq::Error) -> EncoderError {
        match err {
            ureq::Error::Timeout(_) => EncoderError::Timeout(self.timeout_ms),
            ureq::Error::Io(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock
                ) =>
            {
                EncoderError::Timeout(self.timeout_ms)
            }
            ureq::Error::Io(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::ConnectionRefused
                        | io::ErrorKind::ConnectionReset
                        | io::ErrorKind::NotConnected
                        | io::ErrorKind::AddrNotAvailable
                        | io::ErrorKind::HostUnreachable
                        | io::ErrorKind::NetworkUnreachable
                ) =>
            {
                EncoderError::Unreachable(e.to_string())
            }
            ureq::Error::HostNotFound | ureq::Error::ConnectionFailed => {
                EncoderError::Unreachable(err.to_string())
            }
            ureq::Error::Json(e) => EncoderError::Malformed(e.to_string()),
            other => EncoderError::Transport(other.to_string()),
        }
    }

    fn handle(
        &self,
        result: Result<ureq::http::Response<ureq::Body>, ureq::Error>,
        modality: Modality,
    ) -> Result<QueryEmbedding, EncoderError> {
        let mut resp = result.map_err(|e| self.map_transport(e))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .with_config()
            .limit(MAX_RESPONSE_BYTES)
            .read_to_vec()
            .map_err(|e| self.map_transport(e))?;
        if status == 415 {
            return Err(EncoderError::Undecodable(
                String::from_utf8_lossy(&body).into_owned(),
            ));
        }
        if status != 200 {
            return Err(EncoderError::Status {
                status,
                body: String::from_utf8_lossy(&body).chars().take(512).collect(),
            });
        }
        let parsed: EncoderResponse =
            serde_json::from_slice(&body).map_err(|e| EncoderError::Malformed(e.to_string()))?;
        self.validate(parsed, modality)
    }

    fn validate(
        &self,
        resp: EncoderResponse,
        modality: Modality,
    ) -> Result<QueryEmbedding, EncoderError> {
        if resp.global.len() != self.dims.global {
            return Err(EncoderError::DimMismatch {
                what: "global",
                expected: self.dims.global,
                found: resp.global.len(),
            });
        }
        if resp.locals.is_empty() {
            return Err(EncoderError::Malformed("no local vectors".into()));
        }
        if let Some(bad) = resp.locals.iter().find(|l| l.len() != self.dims.local) {
            return Err(EncoderError::DimMismatch {
                what: "local",
                expected: self.dims.local,
                found: bad.len(),
            });
        }
        QueryEmbedding::from_rows(modality, resp.global, &resp.locals)
            .map_err(|e| EncoderError::Malformed(e.to_string()))
    }
}

fn multipart_body(boundary: &str, image: &[u8]) -> Vec<u8> {
    let mut body = Vec::with_capacity(image.len() + 256);
    body.extend_from_slice(
        format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"modality\"\r\n\r\nimage\r\n\
             --{boundary}\r\nContent-Disposition: form-data; name=\"image\"; filename=\"query\"\r\n\
             Content-Type: application/octet-stream\r\n\r\n"
        )
        .as_bytes(),
    );
    body.extend_from_slice(image);
    body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    body
}

/// A boundary string that does not occur in `payload`.
fn pick_boundary(payload: &[u8]) -> String {
    let mut salt = crate::checksum::fnv1a64(payload);
    loop {
        let b = format!("----artsearch{salt:016x}");
        if !payload.windows(b.len()).any(|w| w == b.as_bytes()) {
            return b;
        }
        salt = salt.wrapping_add(1);
    }
}

impl EncoderAdapter for RemoteEncoder {
    fn encode_text(&self, text: &str) -> Result<QueryEmbedding, EncoderError> {
        if text.trim().is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        let result = self.agent.post(&self.endpoint).send_json(TextRequest {
            modality: Modality::Text,
            text,
        });
        self.handle(result, Modality::Text)
    }

    fn encode_image(&self, bytes: &[u8]) -> Result<QueryEmbedding, EncoderError> {
        if bytes.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        let boundary = pick_boundary(bytes);
        let body = multipart_body(&boundary, bytes);
        let result = self
            .agent
            .post(&self.endpoint)
            .header(
                "Content-Type",
                format!("multipart/form-data; boundary={boundary}"),
            )
            .send(&body[..]);
        self.handle(result, Modality::Image)
    }

    fn dims(&self) -> EncoderDims {
        self.dims
    }

    fn mode(&self) -> &'static str {
        "remote"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn url_validation() {
        let dims = EncoderDims {
            global: 4,
            local: 4,
        };
        assert!(remote_encoder("http://127.0.0.1:9/encode", 100, dims).is_ok());
        assert!(matches!(
            remote_encoder("not a url", 100, dims),
            Err(EncoderError::BadUrl(_))
        ));
        assert!(matches!(
            remote_encoder("ftp://host/x", 100, dims),
            Err(EncoderError::BadUrl(_))
        ));
        assert!(matches!(
            remote_encoder("http://h/x", 0, dims),
            Err(EncoderError::BadUrl(_))
        ));
    }

    #[test]
    fn boundary_avoids_payload() {
        let b = pick_boundary(b"abc");
        let payload = format!("xx{b}yy");
        assert_ne!(pick_boundary(payload.as_bytes()), b);
    }

    #[test]
    fn multipart_layout() {
        let body = multipart_body("B", b"\x00\x01");
        let text = String::from_utf8_lossy(&body);
        assert!(text.starts_with("--B\r\n"));
        assert!(text.contains("name=\"image\""));
        assert!(text.ends_with("\r\n--B--\r\n"));
    }
}
