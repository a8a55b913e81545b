use std::sync::Arc;
use std::time::Duration;

use futures::future::join_all;
use tokio::sync::Semaphore;

use super::{AudioClip, Backend, BackendError, GenerationError, GenerationJob, GenerationRequest};
use crate::audio::Waveform;
use crate::ids::ClipId;

pub const DEFAULT_MAX_PARALLEL_JOBS: usize = 12;
pub const DEFAULT_JOB_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, PartialEq)]
pub enum JobFailureReason {
    Backend(BackendError),
    Timeout(Duration),
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobFailure {
    pub index: usize,
    pub reason: JobFailureReason,
}

/// Fans a [`GenerationRequest`] out to a backend with bounded parallelism.
///
/// The limiter is shared, so several runners (or several batches on one
/// runner) together never exceed the permit count.
#[derive(Clone)]
pub struct BatchRunner {
    backend: Arc<dyn Backend>,
    limiter: Arc<Semaphore>,
    job_timeout: Duration,
}

impl BatchRunner {
    pub fn new(backend: Arc<dyn Backend>, max_parallel_jobs: usize, job_timeout: Duration) -> Self {
        Self::with_limiter(backend, Arc::new(Semaphore::new(max_parallel_jobs.max(1))), job_timeout)
    }

    pub fn with_limiter(backend: Arc<dyn Backend>, limiter: Arc<Semaphore>, job_timeout: Duration) -> Self {
        Self {
            backend,
            limiter,
            job_timeout,
        }
    }

    pub fn backend(&self) -> &Arc<dyn Backend> {
        &self.backend
    }

    async fn run_job(&self, job: &GenerationJob) -> Result<Waveform, JobFailureReason> {
        let _permit = self.limiter.acquire().await.expect("limiter is never closed");
        let waveform = tokio::time::timeout(self.job_timeout, self.backend.generate(job))
            .await
            .map_err(|_| JobFailureReason::Timeout(self.job_timeout))?
            .map_err(JobFailureReason::Backend)?;
        check_output(job, &waveform).map_err(JobFailureReason::Backend)?;
        Ok(waveform)
    }

    /// Generates every clip of `request`, prompt-major. Any failed job fails
    /// the whole batch and is reported by index.
    pub async fn run(&self, request: &GenerationRequest) -> Result<Vec<AudioClip>, GenerationError> {
        request.validate()?;
        let jobs = request.jobs();
        let results = join_all(jobs.iter().map(|job| self.run_job(job))).await;

        let mut clips = Vec::with_capacity(jobs.len());
        let mut failures = Vec::new();
        let per_prompt = request.clips_per_prompt as usize;
        for (index, (job, result)) in jobs.iter().zip(results).enumerate() {
            match result {
                Ok(waveform) => clips.push(AudioClip {
                    id: ClipId::new(),
                    waveform,
                    prompt_id: request.prompts[index / per_prompt].id,
                    round_id: request.round_id,
                    seed: job.seed,
                    prior_id: request.prior.as_ref().map(|p| p.id),
                }),
                Err(reason) => failures.push(JobFailure { index, reason }),
            }
        }
        if !failures.is_empty() {
            tracing::warn!(failed = failures.len(), total = jobs.len(), "generation batch failed");
            return Err(GenerationError::BackendFailure(failures));
        }
        Ok(clips)
    }
}

fn check_output(job: &GenerationJob, waveform: &Waveform) -> Result<(), BackendError> {
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
    if !waveform.is_finite() || waveform.peak() > 1.0 {
        return Err(BackendError::BadAudio("samples outside [-1, 1]".into()));
    }
    Ok(())
}
