//! Deterministic procedural stand-in for a text-to-audio model.
//!
//! Each prompt token selects an oscillator pair and a pulsing envelope via
//! FNV-1a; the seed sets oscillator phases and a low-level noise floor. The
//! output depends only on (prompt, seed, duration, sample rate).

use std::f64::consts::TAU;

use async_trait::async_trait;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Backend, BackendError, GenerationError, GenerationJob};
use crate::audio::{normalize_in_place, peak, sample_count, Waveform};
use crate::hash::fnv1a64;

/// Peak level of synthesized and renormalized clips.
pub const STUB_PEAK: f64 = 0.9;

const NOISE_FLOOR: f64 = 0.02;
const MIN_FREQ_HZ: f64 = 110.0;
const OCTAVES: f64 = 3.0; // 110 Hz .. 880 Hz
const RESYNC_BLOCK: usize = 4096;

fn unit(bits: u64) -> f64 {
    (bits & 0xFFFF) as f64 / 65_535.0
}

pub(crate) fn prompt_tokens(prompt: &str) -> Vec<String> {
    prompt
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

struct Voice {
    freq: f64,
    detuned: f64,
    amplitude: f64,
    pulse_hz: f64,
    pulse_offset: f64,
    phase: f64,
}

impl Voice {
    fn from_token(token: &str, rng: &mut ChaCha8Rng) -> Self {
        let h = fnv1a64(token.as_bytes());
        let freq = MIN_FREQ_HZ * 2f64.powf(OCTAVES * unit(h));
        let cents = (unit(h >> 32) - 0.5) * 20.0;
        Self {
            freq,
            detuned: freq * 2f64.powf(cents / 1200.0),
            amplitude: 0.3 + 0.7 * unit(h >> 16),
            pulse_hz: 0.5 + 3.5 * unit(h >> 48),
            pulse_offset: rng.gen::<f64>(),
            phase: rng.gen::<f64>() * TAU,
        }
    }

    /// Adds this voice to `out`. Oscillators and envelope decays advance by
    /// recurrence and are recomputed exactly at every block boundary and
    /// envelope restart, which keeps drift far below PCM16 resolution.
    fn render_into(&self, out: &mut [f64], rate: f64) {
        let (sin_w1, cos_w1) = (TAU * self.freq / rate).sin_cos();
        let (sin_w2, cos_w2) = (TAU * self.detuned / rate).sin_cos();
        let beat_step = self.pulse_hz / rate;
        let (fast_step, slow_step) = ((-40.0 * beat_step).exp(), (-3.0 * beat_step).exp());

        for (block, chunk) in out.chunks_mut(RESYNC_BLOCK).enumerate() {
            let t0 = (block * RESYNC_BLOCK) as f64 / rate;
            let (mut s1, mut c1) = (TAU * self.freq * t0 + self.phase).sin_cos();
            let (mut s2, mut c2) = (TAU * self.detuned * t0 + self.phase).sin_cos();
            let mut beat = (t0 * self.pulse_hz + self.pulse_offset).fract();
            let (mut fast, mut slow) = ((-40.0 * beat).exp(), (-3.0 * beat).exp());
            for x in chunk.iter_mut() {
                *x += self.amplitude * (1.0 - fast) * slow * (s1 + 0.5 * s2);
                (s1, c1) = (s1 * cos_w1 + c1 * sin_w1, c1 * cos_w1 - s1 * sin_w1);
                (s2, c2) = (s2 * cos_w2 + c2 * sin_w2, c2 * cos_w2 - s2 * sin_w2);
                beat += beat_step;
                if beat >= 1.0 {
                    beat -= 1.0;
                    fast = (-40.0 * beat).exp();
                    slow = (-3.0 * beat).exp();
                } else {
                    fast *= fast_step;
                    slow *= slow_step;
                }
            }
        }
    }
}

/// Synthesizes a mono clip for `prompt`, peak-normalized to [`STUB_PEAK`].
pub fn stub_synthesize(prompt: &str, seed: u64, duration_s: f64, sample_rate: u32) -> Waveform {
    let len = sample_count(duration_s, sample_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let voices: Vec<Voice> = prompt_tokens(prompt)
        .iter()
        .map(|token| Voice::from_token(token, &mut rng))
        .collect();

    let rate = f64::from(sample_rate);
    let mut samples: Vec<f64> = (0..len).map(|_| rng.gen_range(-NOISE_FLOOR..=NOISE_FLOOR)).collect();
    for voice in &voices {
        voice.render_into(&mut samples, rate);
    }
    normalize_in_place(&mut samples, STUB_PEAK);
    Waveform::new(samples, sample_rate)
}

/// Interpolates between `prior` (strength 0) and `fresh` (strength 1).
///
/// The result is renormalized to [`STUB_PEAK`] only when its peak exceeds 1.
pub fn blend_with_prior(fresh: &Waveform, prior: &Waveform, transfer_strength: f64) -> Result<Waveform, GenerationError> {
    if !(0.0..=1.0).contains(&transfer_strength) {
        return Err(GenerationError::BadStrength(transfer_strength));
    }
    if fresh.len() != prior.len() {
        return Err(GenerationError::LengthMismatch {
            fresh: fresh.len(),
            prior: prior.len(),
        });
    }
    if fresh.sample_rate != prior.sample_rate {
        return Err(GenerationError::RateMismatch {
            fresh: fresh.sample_rate,
            prior: prior.sample_rate,
        });
    }
    let t = transfer_strength;
    let mut samples: Vec<f64> = prior
        .samples
        .iter()
        .zip(&fresh.samples)
        .map(|(p, f)| (1.0 - t) * p + t * f)
        .collect();
    if peak(&samples) > 1.0 {
        normalize_in_place(&mut samples, STUB_PEAK);
    }
    Ok(Waveform::new(samples, fresh.sample_rate))
}

/// Backend running [`stub_synthesize`] and [`blend_with_prior`] on the
/// blocking thread pool.
#[derive(Debug, Default, Clone, Copy)]
pub struct StubBackend;

impl StubBackend {
    pub fn render(job: &GenerationJob) -> Result<Waveform, BackendError> {
        let fresh = stub_synthesize(&job.prompt, job.seed, job.duration_s, job.sample_rate);
        match &job.prior {
            Some(prior) => blend_with_prior(&fresh, prior, job.strength).map_err(|e| BackendError::Internal(e.to_string())),
            None => Ok(fresh),
        }
    }
}

#[async_trait]
impl Backend for StubBackend {
    async fn generate(&self, job: &GenerationJob) -> Result<Waveform, BackendError> {
        let job = job.clone();
        tokio::task::spawn_blocking(move || Self::render(&job))
            .await
            .map_err(|e| BackendError::Internal(format!("synthesis task failed: {e}")))?
    }
}
