//! Clip generation: request types, the backend contract, seed mixing, the
//! deterministic stub synthesizer and the remote wire protocol.

mod batch;
pub mod remote;
mod stub;

use std::sync::Arc;

use async_trait::async_trait;
use thiserror::Error;

use crate::audio::{sample_count, Waveform};
use crate::ids::{ClipId, PromptId, RoundId};

pub use batch::{BatchRunner, JobFailure, JobFailureReason, DEFAULT_JOB_TIMEOUT, DEFAULT_MAX_PARALLEL_JOBS};
pub use remote::RemoteBackend;
pub use stub::{blend_with_prior, stub_synthesize, StubBackend, STUB_PEAK};

pub const DEFAULT_DURATION_S: f64 = 10.0;
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
pub const MIN_SAMPLE_RATE: u32 = 8_000;
pub const DEFAULT_PRIOR_STRENGTH: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("http error{}: {message}", .status.map(|s| format!(" {s}")).unwrap_or_default())]
    Http { status: Option<u16>, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("bad audio: {0}")]
    BadAudio(String),
    #[error("backend error: {0}")]
    Internal(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
    #[error("waveform lengths differ: {fresh} vs {prior}")]
    LengthMismatch { fresh: usize, prior: usize },
    #[error("sample rates differ: {fresh} vs {prior}")]
    RateMismatch { fresh: u32, prior: u32 },
    #[error("transfer strength {0} is outside [0, 1]")]
    BadStrength(f64),
    #[error("{} of the batch's jobs failed (first: job {})", .0.len(), .0[0].index)]
    BackendFailure(Vec<JobFailure>),
}

impl GenerationError {
    /// Indices of the failed jobs for a [`GenerationError::BackendFailure`].
    pub fn failed_jobs(&self) -> Vec<usize> {
        match self {
            Self::BackendFailure(failures) => failures.iter().map(|f| f.index).collect(),
            _ => Vec::new(),
        }
    }
}

/// One clip's worth of work handed to a [`Backend`].
#[derive(Debug, Clone)]
pub struct GenerationJob {
    pub prompt: String,
    pub prior: Option<Arc<Waveform>>,
    pub strength: f64,
    pub seed: u64,
    pub duration_s: f64,
    pub sample_rate: u32,
}

impl GenerationJob {
    pub fn expected_len(&self) -> usize {
        sample_count(self.duration_s, self.sample_rate)
    }
}

/// Produces a waveform for a single job.
///
/// Implementations must return exactly `job.expected_len()` samples at
/// `job.sample_rate`, all within `[-1, 1]`.
#[async_trait]
pub trait Backend: Send + Sync {
    async fn generate(&self, job: &GenerationJob) -> Result<Waveform, BackendError>;
}

#[async_trait]
impl<T: Backend + ?Sized> Backend for Arc<T> {
    async fn generate(&self, job: &GenerationJob) -> Result<Waveform, BackendError> {
        (**self).generate(job).await
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSlot {
    pub id: PromptId,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct PriorClip {
    pub id: ClipId,
    pub waveform: Arc<Waveform>,
}

#[derive(Debug, Clone)]
pub struct GenerationRequest {
    pub round_id: RoundId,
    pub prompts: Vec<PromptSlot>,
    pub prior: Option<PriorClip>,
    pub transfer_strength: f64,
    pub clips_per_prompt: u32,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub round_seed: u64,
}

impl GenerationRequest {
    pub fn new(prompts: impl IntoIterator<Item = impl Into<String>>, round_seed: u64) -> Self {
        Self {
            round_id: RoundId::new(),
            prompts: prompts
                .into_iter()
                .map(|text| PromptSlot {
                    id: PromptId::new(),
                    text: text.into(),
                })
                .collect(),
            prior: None,
            transfer_strength: 1.0,
            clips_per_prompt: 3,
            duration_s: DEFAULT_DURATION_S,
            sample_rate: DEFAULT_SAMPLE_RATE,
            round_seed,
        }
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        let invalid = |msg: String| Err(GenerationError::InvalidRequest(msg));
        if self.prompts.is_empty() || self.prompts.len() > 4 {
            return invalid(format!("{} prompts (expected 1 to 4)", self.prompts.len()));
        }
        if self.clips_per_prompt == 0 {
            return invalid("clips_per_prompt must be positive".into());
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return invalid(format!("duration {} s", self.duration_s));
        }
        if self.sample_rate < MIN_SAMPLE_RATE {
            return invalid(format!("sample rate {} Hz below {MIN_SAMPLE_RATE}", self.sample_rate));
        }
        if !(0.0..=1.0).contains(&self.transfer_strength) {
            return Err(GenerationError::BadStrength(self.transfer_strength));
        }
        if let Some(prior) = &self.prior {
            if prior.waveform.sample_rate != self.sample_rate {
                return Err(GenerationError::RateMismatch {
                    fresh: self.sample_rate,
                    prior: prior.waveform.sample_rate,
                });
            }
            let expected = sample_count(self.duration_s, self.sample_rate);
            if prior.waveform.len() != expected {
                return Err(GenerationError::LengthMismatch {
                    fresh: expected,
                    prior: prior.waveform.len(),
                });
            }
        }
        Ok(())
    }

    pub fn job_count(&self) -> usize {
        self.prompts.len() * self.clips_per_prompt as usize
    }

    /// Jobs in prompt-major order: job `i * clips_per_prompt + j` is clip `j`
    /// of prompt `i`.
    pub fn jobs(&self) -> Vec<GenerationJob> {
        let prior = self.prior.as_ref().map(|p| Arc::clone(&p.waveform));
        self.prompts
            .iter()
            .enumerate()
            .flat_map(|(i, slot)| {
                let prior = prior.clone();
                (0..self.clips_per_prompt).map(move |j| GenerationJob {
                    prompt: slot.text.clone(),
                    prior: prior.clone(),
                    strength: self.transfer_strength,
                    seed: mix_seed(self.round_seed, i as u32, j),
                    duration_s: self.duration_s,
                    sample_rate: self.sample_rate,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub id: ClipId,
    pub waveform: Waveform,
    pub prompt_id: PromptId,
    pub round_id: RoundId,
    pub seed: u64,
    pub prior_id: Option<ClipId>,
}

/// SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for clip `clip_index` of prompt `prompt_index`:
/// `splitmix64(splitmix64(round_seed) ^ (prompt_index << 32 | clip_index))`.
pub fn mix_seed(round_seed: u64, prompt_index: u32, clip_index: u32) -> u64 {
    let position = (u64::from(prompt_index) << 32) | u64::from(clip_index);
    splitmix64(splitmix64(round_seed) ^ position)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // First outputs of the reference SplitMix64 generator seeded with 0,
        // i.e. splitmix64(k * golden) for k = 0, 1.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(0x9E37_79B9_7F4A_7C15), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn mixed_seeds_are_distinct_across_positions() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..4 {
            for j in 0..8 {
                assert!(seen.insert(mix_seed(42, i, j)));
            }
        }
        assert_ne!(mix_seed(42, 0, 0), mix_seed(43, 0, 0));
    }

    #[test]
    fn jobs_are_prompt_major() {
        let mut req = GenerationRequest::new(["a", "b"], 7);
        req.clips_per_prompt = 2;
        let jobs = req.jobs();
        let prompts: Vec<&str> = jobs.iter().map(|j| j.prompt.as_str()).collect();
        assert_eq!(prompts, ["a", "a", "b", "b"]);
        assert_eq!(jobs[3].seed, mix_seed(7, 1, 1));
    }

    #[test]
    fn request_validation() {
        let ok = GenerationRequest::new(["a"], 0);
        assert!(ok.validate().is_ok());

        let mut r = ok.clone();
        r.sample_rate = 4_000;
        assert!(matches!(r.validate(), Err(GenerationError::InvalidRequest(_))));

        let mut r = ok.clone();
        r.duration_s = 0.0;
        assert!(r.validate().is_err());

        let mut r = ok.clone();
        r.prior = Some(PriorClip {
            id: ClipId::new(),
            waveform: Arc::new(Waveform::silence(160_000, 22_050)),
        });
        assert!(matches!(r.validate(), Err(GenerationError::RateMismatch { .. })));

        let mut r = GenerationRequest::new(["a", "b", "c", "d", "e"], 0);
        assert!(r.validate().is_err());
        r.prompts.truncate(4);
        r.transfer_strength = 2.0;
        assert_eq!(r.validate(), Err(GenerationError::BadStrength(2.0)));
    }
}
