use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use artsearch_core::encoder::{
    EncoderAdapter, EncoderDims, EncoderError, MockEncoder, RemoteEncoder, DEFAULT_TIMEOUT_MS,
};
use artsearch_core::scoring::{FusionConfig, LocalAggregation};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_UPLOAD_BYTES: usize = 1 << 20;
pub const DEFAULT_UPLOAD_BYTES: usize = 10 << 20;
pub const DEFAULT_MAX_QUERY_BYTES: usize = 4096;
pub const DEFAULT_MAX_K: usize = 1000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("{var}: {reason}")]
    Env { var: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderMode {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub mode: EncoderMode,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub mock_seed: u64,
    pub mock_local_count: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            mode: EncoderMode::Mock,
            endpoint: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            mock_seed: 0,
            mock_local_count: 8,
        }
    }
}

impl EncoderConfig {
    /// Builds the adapter for stores of the given dims.
    pub fn build(&self, dims: EncoderDims) -> Result<Arc<dyn EncoderAdapter>, EncoderError> {
        match self.mode {
            EncoderMode::Mock => {
                if dims.global != dims.local {
                    return Err(EncoderError::DimMismatch {
                        what: "mock local",
                        expected: dims.global,
                        found: dims.local,
                    });
                }
                Ok(Arc::new(MockEncoder::new(
                    self.mock_seed,
                    dims.global,
                    self.mock_local_count,
                    0.0,
                )))
            }
            EncoderMode::Remote => {
                let endpoint = self
                    .endpoint
                    .as_deref()
                    .ok_or_else(|| EncoderError::BadUrl("no endpoint configured".into()))?;
                Ok(Arc::new(RemoteEncoder::new(
                    endpoint,
                    self.timeout_ms,
                    dims,
                )?))
            }
        }
    }
}

/// Runtime settings for `serve` and `search`. Every field has a default, so
/// `{}` is a valid config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub listen: IpAddr,
    pub port: u16,
    /// Relative paths are resolved against the config file's directory.
    pub manifest: PathBuf,
    /// `None` uses the manifest's default fusion weight with λ = 9, mean
    /// pooling.
    pub fusion: Option<FusionConfig>,
    pub encoder: EncoderConfig,
    pub default_k: usize,
    pub max_k: usize,
    pub max_upload_bytes: usize,
    pub max_query_bytes: usize,
    pub static_dir: Option<PathBuf>,
    /// Concurrent searches; `None` means one per CPU.
    pub workers: Option<usize>,
    /// Allowed browser origins; empty allows any.
    pub cors_origins: Vec<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 8080,
            manifest: PathBuf::from("manifest.json"),
            fusion: None,
            encoder: EncoderConfig::default(),
            default_k: artsearch_core::engine::DEFAULT_K,
            max_k: DEFAULT_MAX_K,
            max_upload_bytes: DEFAULT_UPLOAD_BYTES,
            max_query_bytes: DEFAULT_MAX_QUERY_BYTES,
            static_dir: None,
            workers: None,
            cors_origins: Vec::new(),
        }
    }
}

fn env_parse<T: std::str::FromStr>(var: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::Env {
        var: var.to_string(),
        reason: format!("{value:?}: {e}"),
    })
}

impl ServiceConfig {
    /// Reads a JSON config file; relative paths inside it are made relative
    /// to the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.manifest = base.join(&cfg.manifest);
        cfg.static_dir = cfg.static_dir.map(|d| base.join(d));
        Ok(cfg)
    }

    /// Applies `ENGINE_*` overrides from `vars`; other variables are ignored.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (k, v) in vars {
            let (k, v) = (k.as_ref(), v.as_ref());
            match k {
                "ENGINE_LISTEN" => self.listen = env_parse(k, v)?,
                "ENGINE_PORT" => self.port = env_parse(k, v)?,
                "ENGINE_MANIFEST" => self.manifest = PathBuf::from(v),
                "ENGINE_ALPHA" => self.fusion_mut().alpha = env_parse(k, v)?,
                "ENGINE_LAMBDA" => self.fusion_mut().temperature_lambda = env_parse(k, v)?,
                "ENGINE_LOCAL_AGGREGATION" => {
                    self.fusion_mut().local_aggregation = match v.trim() {
                        "mean" => LocalAggregation::Mean,
                        "lse" | "log-sum-exp" | "log_sum_exp" => LocalAggregation::LogSumExp,
                        other => {
                            return Err(ConfigError::Env {
                                var: k.into(),
                                reason: format!("{other:?}: expected mean or lse"),
                            })
                        }
                    }
                }
                "ENGINE_ENCODER_MODE" => {
                    self.encoder.mode = match v.trim() {
                        "mock" => EncoderMode::Mock,
                        "remote" => EncoderMode::Remote,
                        other => {
                            return Err(ConfigError::Env {
                                var: k.into(),
                                reason: format!("{other:?}: expected mock or remote"),
                            })
                        }
                    }
                }
                "ENGINE_ENCODER_ENDPOINT" => self.encoder.endpoint = Some(v.to_string()),
                "ENGINE_ENCODER_TIMEOUT_MS" => self.encoder.timeout_ms = env_parse(k, v)?,
                "ENGINE_MOCK_SEED" => self.encoder.mock_seed = env_parse(k, v)?,
                "ENGINE_MOCK_LOCAL_COUNT" => self.encoder.mock_local_count = env_parse(k, v)?,
                "ENGINE_DEFAULT_K" => self.default_k = env_parse(k, v)?,
                "ENGINE_MAX_K" => self.max_k = env_parse(k, v)?,
                "ENGINE_MAX_UPLOAD_BYTES" => self.max_upload_bytes = env_parse(k, v)?,
                "ENGINE_MAX_QUERY_BYTES" => self.max_query_bytes = env_parse(k, v)?,
                "ENGINE_STATIC_DIR" => self.static_dir = Some(PathBuf::from(v)),
                "ENGINE_WORKERS" => self.workers = Some(env_parse(k, v)?),
                "ENGINE_CORS_ORIGINS" => {
                    self.cors_origins = v
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect()
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn fusion_mut(&mut self) -> &mut FusionConfig {
        self.fusion.get_or_insert_with(FusionConfig::default)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.port == 0 {
            return bad("port must be in 1..=65535".into());
        }
        if self.max_upload_bytes < MIN_UPLOAD_BYTES {
            return bad(format!(
                "max_upload_bytes must be at least {MIN_UPLOAD_BYTES}, got {}",
                self.max_upload_bytes
            ));
        }
        if self.max_k == 0 || self.default_k == 0 || self.default_k > self.max_k {
            return bad(format!(
                "need 1 <= default_k ({}) <= max_k ({})",
                self.default_k, self.max_k
            ));
        }
        if self.max_query_bytes == 0 {
            return bad("max_query_bytes must be positive".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        if let Some(f) = &self.fusion {
            f.validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        match self.encoder.mode {
            EncoderMode::Remote if self.encoder.endpoint.is_none() => {
                return bad("remote encoder needs an endpoint".into())
            }
            EncoderMode::Mock if self.encoder.mock_local_count == 0 => {
                return bad("mock_local_count must be positive".into())
            }
            _ => {}
        }
        if self.encoder.timeout_ms == 0 {
            return bad("encoder timeout_ms must be positive".into());
        }
        Ok(())
    }

    pub fn socket_addr(&self) -> SocketAddr {
        SocketAddr::new(self.listen, self.port)
    }

    pub fn worker_count(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    /// Fusion to serve with, falling back to the manifest's default weight.
    pub fn fusion_for(&self, manifest_alpha: f64) -> FusionConfig {
        self.fusion.unwrap_or(FusionConfig {
            alpha: manifest_alpha,
            ..FusionConfig::default()
        })
    }
}
