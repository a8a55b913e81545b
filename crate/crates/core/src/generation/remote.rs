//! Client side of the generation wire protocol.
//!
//! `POST <base>/generate` with a JSON body:
//!
//! ```json
//! {"prompt": "calm piano, soft strings", "prior_wav_base64": "UklGR...",
//!  "strength": 0.5, "seed": 42, "duration_s": 10.0, "sample_rate": 16000}
//! ```
//!
//! `prior_wav_base64` is omitted when no prior is selected. A successful
//! response is `200` with an `audio/wav` body (PCM16 mono). Failures carry a
//! JSON body `{"code": "...", "message": "..."}`.

use std::time::Duration;

use async_trait::async_trait;
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, GenerationJob};
use crate::audio::{decode_wav, encode_wav, Waveform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequestBody {
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_wav_base64: Option<String>,
    pub strength: f64,
    pub seed: u64,
    pub duration_s: f64,
    pub sample_rate: u32,
}

impl GenerateRequestBody {
    pub fn from_job(job: &GenerationJob) -> Result<Self, BackendError> {
        let prior_wav_base64 = job
            .prior
            .as_deref()
            .map(|prior| {
                encode_wav(prior)
                    .map(|bytes| BASE64.encode(bytes))
                    .map_err(|e| BackendError::Internal(format!("prior not encodable: {e}")))
            })
            .transpose()?;
        Ok(Self {
            prompt: job.prompt.clone(),
            prior_wav_base64,
            strength: job.strength,
            seed: job.seed,
            duration_s: job.duration_s,
            sample_rate: job.sample_rate,
        })
    }

    /// Decodes the prior carried by the request, if any.
    pub fn prior(&self) -> Result<Option<Waveform>, BackendError> {
        self.prior_wav_base64
            .as_deref()
            .map(|b64| {
                let bytes = BASE64
                    .decode(b64)
                    .map_err(|e| BackendError::Protocol(format!("prior is not base64: {e}")))?;
                decode_wav(&bytes).map_err(|e| BackendError::Protocol(format!("prior is not a WAV: {e}")))
            })
            .transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

pub fn generate_url(base: &str) -> String {
    format!("{}/generate", base.trim_end_matches('/'))
}

/// Issues one wire-protocol request and validates the returned audio
/// against the job's length and sample rate.
pub async fn remote_generate(client: &reqwest::Client, base_url: &str, job: &GenerationJob) -> Result<Waveform, BackendError> {
    let body = GenerateRequestBody::from_job(job)?;
    let response = client
        .post(generate_url(base_url))
        .json(&body)
        .send()
        .await
        .map_err(|e| BackendError::Http {
            status: None,
            message: e.to_string(),
        })?;

    let status = response.status();
    let content_type = response
        .headers()
        .get(reqwest::header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or_default()
        .to_ascii_lowercase();
    let bytes = response.bytes().await.map_err(|e| BackendError::Http {
        status: Some(status.as_u16()),
        message: e.to_string(),
    })?;

    if !status.is_success() {
        let message = match serde_json::from_slice::<ErrorBody>(&bytes) {
            Ok(err) => format!("{}: {}", err.code, err.message),
            Err(_) => String::from_utf8_lossy(&bytes).into_owned(),
        };
        return Err(BackendError::Http {
            status: Some(status.as_u16()),
            message,
        });
    }
    if !(content_type.starts_with("audio/wav") || content_type.starts_with("audio/x-wav") || content_type.starts_with("audio/wave")) {
        return Err(BackendError::Protocol(format!("unexpected content type {content_type:?}")));
    }

    let waveform = decode_wav(&bytes).map_err(|e| BackendError::Protocol(e.to_string()))?;
    if waveform.sample_rate != job.sample_rate {
        return Err(BackendError::BadAudio(format!(
            "sample rate {} Hz, expected {}",
            waveform.sample_rate, job.sample_rate
        )));
    }
    if waveform.len() != job.expected_len() {
        return Err(BackendError::BadAudio(format!(
            "{} samples, expected {}",
            waveform.len(),
            job.expected_len()
        )));
    }
    Ok(waveform)
}

/// Backend that forwards every job to a remote server over the wire protocol.
#[derive(Clone)]
pub struct RemoteBackend {
    base_url: String,
    client: reqwest::Client,
}

impl RemoteBackend {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        Self {
            base_url: base_url.into(),
            client: reqwest::Client::builder()
                .timeout(timeout)
                .build()
                .expect("default TLS backend must initialize"),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }
}

#[async_trait]
impl Backend for RemoteBackend {
    async fn generate(&self, job: &GenerationJob) -> Result<Waveform, BackendError> {
        remote_generate(&self.client, &self.base_url, job).await
    }
}
