//! Service configuration read from environment variables.
//!
//! | variable             | default          |
//! |----------------------|------------------|
//! | `LISTEN_ADDR`        | `127.0.0.1:8080` |
//! | `BACKEND_MODE`       | `stub`           |
//! | `BACKEND_URL`        | required for `remote` |
//! | `LM_ENDPOINT`        | unset (template prompts only) |
//! | `TRANSLATE_ENDPOINT` | unset (pass-through) |
//! | `CLIENT_TIMEOUT_MS`  | `30000`          |
//! | `LOG_PATH`           | unset (in-memory log) |
//! | `BLOB_DIR`           | unset (in-memory blobs) |
//! | `MAX_PARALLEL_JOBS`  | `12`             |
//! | `JOB_TIMEOUT_MS`     | `60000`          |
//! | `CLIPS_PER_PROMPT`   | `3`              |
//! | `CLIP_DURATION_S`    | `10.0`           |
//! | `SAMPLE_RATE`        | `16000`          |
//! | `PRIOR_STRENGTH`     | `0.5`            |
//! | `SHARE_SECRET`       | random per process |
//! | `CORS_ORIGIN`        | `*`              |

use std::net::SocketAddr;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

use crate::exploration::DEFAULT_CLIPS_PER_PROMPT;
use crate::generation::{
    DEFAULT_DURATION_S, DEFAULT_JOB_TIMEOUT, DEFAULT_MAX_PARALLEL_JOBS, DEFAULT_PRIOR_STRENGTH, DEFAULT_SAMPLE_RATE,
    MIN_SAMPLE_RATE,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{key}: cannot parse {value:?}")]
    Parse { key: &'static str, value: String },
    #[error("{key} must be positive")]
    NotPositive { key: &'static str },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendMode {
    Stub,
    Remote,
}

impl FromStr for BackendMode {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stub" => Ok(Self::Stub),
            "remote" => Ok(Self::Remote),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub listen_addr: SocketAddr,
    pub backend_mode: BackendMode,
    pub backend_url: Option<String>,
    pub lm_endpoint: Option<String>,
    pub translate_endpoint: Option<String>,
    pub client_timeout: Duration,
    pub log_path: Option<PathBuf>,
    pub blob_dir: Option<PathBuf>,
    pub max_parallel_jobs: usize,
    pub job_timeout: Duration,
    pub clips_per_prompt: u32,
    pub clip_duration_s: f64,
    pub sample_rate: u32,
    pub prior_strength: f64,
    pub share_secret: Option<String>,
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen_addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            backend_mode: BackendMode::Stub,
            backend_url: None,
            lm_endpoint: None,
            translate_endpoint: None,
            client_timeout: Duration::from_millis(30_000),
            log_path: None,
            blob_dir: None,
            max_parallel_jobs: DEFAULT_MAX_PARALLEL_JOBS,
            job_timeout: DEFAULT_JOB_TIMEOUT,
            clips_per_prompt: DEFAULT_CLIPS_PER_PROMPT,
            clip_duration_s: DEFAULT_DURATION_S,
            sample_rate: DEFAULT_SAMPLE_RATE,
            prior_strength: DEFAULT_PRIOR_STRENGTH,
            share_secret: None,
            cors_origin: None,
        }
    }
}

fn parse<T: FromStr>(key: &'static str, value: String) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::Parse { key, value })
}

fn positive<T: PartialOrd + Default>(key: &'static str, value: T) -> Result<T, ConfigError> {
    if value > T::default() {
        Ok(value)
    } else {
        Err(ConfigError::NotPositive { key })
    }
}

impl ServiceConfig {
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|key| std::env::var(key).ok())
    }

    /// Builds a configuration from a key lookup; unset or empty keys take
    /// their defaults.
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let get = |key: &str| lookup(key).filter(|v| !v.trim().is_empty());
        let mut c = Self::default();

        if let Some(v) = get("LISTEN_ADDR") {
            c.listen_addr = parse("LISTEN_ADDR", v)?;
        }
        if let Some(v) = get("BACKEND_MODE") {
            c.backend_mode = v.parse().map_err(|_| ConfigError::Parse {
                key: "BACKEND_MODE",
                value: v.clone(),
            })?;
        }
        c.backend_url = get("BACKEND_URL");
        c.lm_endpoint = get("LM_ENDPOINT");
        c.translate_endpoint = get("TRANSLATE_ENDPOINT");
        if let Some(v) = get("CLIENT_TIMEOUT_MS") {
            c.client_timeout = Duration::from_millis(positive("CLIENT_TIMEOUT_MS", parse("CLIENT_TIMEOUT_MS", v)?)?);
        }
        c.log_path = get("LOG_PATH").map(PathBuf::from);
        c.blob_dir = get("BLOB_DIR").map(PathBuf::from);
        if let Some(v) = get("MAX_PARALLEL_JOBS") {
            c.max_parallel_jobs = positive("MAX_PARALLEL_JOBS", parse("MAX_PARALLEL_JOBS", v)?)?;
        }
        if let Some(v) = get("JOB_TIMEOUT_MS") {
            c.job_timeout = Duration::from_millis(positive("JOB_TIMEOUT_MS", parse("JOB_TIMEOUT_MS", v)?)?);
        }
        if let Some(v) = get("CLIPS_PER_PROMPT") {
            c.clips_per_prompt = positive("CLIPS_PER_PROMPT", parse("CLIPS_PER_PROMPT", v)?)?;
        }
        if let Some(v) = get("CLIP_DURATION_S") {
            c.clip_duration_s = positive("CLIP_DURATION_S", parse("CLIP_DURATION_S", v)?)?;
        }
        if let Some(v) = get("SAMPLE_RATE") {
            c.sample_rate = positive("SAMPLE_RATE", parse("SAMPLE_RATE", v)?)?;
        }
        if let Some(v) = get("PRIOR_STRENGTH") {
            c.prior_strength = parse("PRIOR_STRENGTH", v)?;
        }
        c.share_secret = get("SHARE_SECRET");
        c.cors_origin = get("CORS_ORIGIN");
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.backend_mode == BackendMode::Remote && self.backend_url.is_none() {
            return Err(ConfigError::Invalid("BACKEND_MODE=remote requires BACKEND_URL".into()));
        }
        if self.sample_rate < MIN_SAMPLE_RATE {
            return Err(ConfigError::Invalid(format!("SAMPLE_RATE must be at least {MIN_SAMPLE_RATE}")));
        }
        if !self.clip_duration_s.is_finite() {
            return Err(ConfigError::NotPositive { key: "CLIP_DURATION_S" });
        }
        if !(0.0..=1.0).contains(&self.prior_strength) {
            return Err(ConfigError::Invalid("PRIOR_STRENGTH must lie in [0, 1]".into()));
        }
        Ok(())
    }
}
