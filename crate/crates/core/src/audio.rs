//! PCM helpers: 16-bit mono WAV encoding and decoding, peak normalization and
//! level measurement.
//!
//! The only on-disk and on-wire format is canonical RIFF/WAVE with a 16-byte
//! `fmt ` chunk (PCM, 1 channel, 16 bits) followed by a `data` chunk, which
//! gives a fixed 44-byte header. The decoder also skips unknown chunks such as
//! `LIST` so files written by other tools are accepted.

use thiserror::Error;

/// Length of the canonical header written by [`encode_wav`].
pub const WAV_HEADER_LEN: usize = 44;

const PCM16_SCALE: f64 = 32767.0;

#[derive(Debug, Error, PartialEq)]
pub enum AudioError {
    #[error("sample {index} is outside [-1, 1] or not finite: {value}")]
    OutOfRange { index: usize, value: f64 },
    #[error("malformed WAV: {0}")]
    MalformedWav(String),
    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),
    #[error("waveform is empty")]
    Empty,
}

/// Mono PCM audio with samples nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Largest absolute sample value, zero for an empty waveform.
    pub fn peak(&self) -> f64 {
        peak(&self.samples)
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|s| s.is_finite())
    }
}

/// Number of samples for a clip of `duration_s` seconds.
pub fn sample_count(duration_s: f64, sample_rate: u32) -> usize {
    (duration_s * f64::from(sample_rate)).round() as usize
}

pub(crate) fn peak(samples: &[f64]) -> f64 {
    samples.iter().fold(0.0_f64, |acc, s| acc.max(s.abs()))
}

/// Quantizes one sample to PCM16, rounding half away from zero.
pub fn quantize(sample: f64) -> i16 {
    // f64::round already rounds half away from zero.
    (sample * PCM16_SCALE).round() as i16
}

pub fn dequantize(value: i16) -> f64 {
    f64::from(value) / PCM16_SCALE
}

/// Encodes `waveform` as RIFF/WAVE PCM16 mono.
pub fn encode_wav(waveform: &Waveform) -> Result<Vec<u8>, AudioError> {
    for (index, &value) in waveform.samples.iter().enumerate() {
        if !value.is_finite() || value.abs() > 1.0 {
            return Err(AudioError::OutOfRange { index, value });
        }
    }

    let data_len = u32::try_from(waveform.samples.len() * 2)
        .map_err(|_| AudioError::UnsupportedFormat("waveform too long for RIFF".into()))?;
    let sample_rate = waveform.sample_rate;
    let mut buf = Vec::with_capacity(WAV_HEADER_LEN + data_len as usize);

    buf.extend_from_slice(b"RIFF");
    buf.extend_from_slice(&(36 + data_len).to_le_bytes());
    buf.extend_from_slice(b"WAVE");

    buf.extend_from_slice(b"fmt ");
    buf.extend_from_slice(&16u32.to_le_bytes());
    buf.extend_from_slice(&1u16.to_le_bytes()); // PCM
    buf.extend_from_slice(&1u16.to_le_bytes()); // mono
    buf.extend_from_slice(&sample_rate.to_le_bytes());
    buf.extend_from_slice(&(sample_rate * 2).to_le_bytes()); // byte rate
    buf.extend_from_slice(&2u16.to_le_bytes()); // block align
    buf.extend_from_slice(&16u16.to_le_bytes());

    buf.extend_from_slice(b"data");
    buf.extend_from_slice(&data_len.to_le_bytes());
    for &s in &waveform.samples {
        buf.extend_from_slice(&quantize(s).to_le_bytes());
    }
    Ok(buf)
}

fn read_u16(bytes: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([bytes[at], bytes[at + 1]])
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Decodes a RIFF/WAVE PCM16 mono file.
pub fn decode_wav(bytes: &[u8]) -> Result<Waveform, AudioError> {
    let malformed = |msg: &str| AudioError::MalformedWav(msg.to_string());

    if bytes.len() < 12 {
        return Err(malformed("truncated RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(malformed("missing RIFF/WAVE magic"));
    }

    let mut pos = 12;
    let mut format: Option<(u32, u16)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4) as usize;
        let body = pos + 8;
        let end = body
            .checked_add(size)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| malformed("chunk extends past end of file"))?;

        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(malformed("fmt chunk too short"));
                }
                let audio_format = read_u16(bytes, body);
                let channels = read_u16(bytes, body + 2);
                let sample_rate = read_u32(bytes, body + 4);
                let bits = read_u16(bytes, body + 14);
                if audio_format != 1 {
                    return Err(AudioError::UnsupportedFormat(format!(
                        "audio format tag {audio_format} (only PCM is supported)"
                    )));
                }
                if channels != 1 {
                    return Err(AudioError::UnsupportedFormat(format!(
                        "{channels} channels (only mono is supported)"
                    )));
                }
                if bits != 16 {
                    return Err(AudioError::UnsupportedFormat(format!(
                        "{bits} bits per sample (only 16 is supported)"
                    )));
                }
                if sample_rate == 0 {
                    return Err(malformed("zero sample rate"));
                }
                format = Some((sample_rate, channels));
            }
            b"data" => {
                let (sample_rate, _) = format.ok_or_else(|| malformed("data chunk before fmt chunk"))?;
                if size % 2 != 0 {
                    return Err(malformed("odd data chunk length"));
                }
                let samples = bytes[body..end]
                    .chunks_exact(2)
                    .map(|pair| dequantize(i16::from_le_bytes([pair[0], pair[1]])))
                    .collect();
                return Ok(Waveform::new(samples, sample_rate));
            }
            _ => {}
        }
        // Chunks are word aligned.
        pos = end + (size & 1);
    }

    Err(malformed(if format.is_some() {
        "missing data chunk"
    } else {
        "missing fmt chunk"
    }))
}

/// Scales `waveform` so its peak equals `target_peak`. Silence is returned
/// unchanged.
pub fn peak_normalize(waveform: &Waveform, target_peak: f64) -> Waveform {
    assert!(
        target_peak > 0.0 && target_peak <= 1.0,
        "target peak must lie in (0, 1], got {target_peak}"
    );
    let mut out = waveform.clone();
    normalize_in_place(&mut out.samples, target_peak);
    out
}

pub(crate) fn normalize_in_place(samples: &mut [f64], target_peak: f64) {
    let current = peak(samples);
    if current == 0.0 || current == target_peak {
        return;
    }
    let gain = target_peak / current;
    for s in samples.iter_mut() {
        *s *= gain;
    }
}

/// Root-mean-square level.
pub fn rms(waveform: &Waveform) -> Result<f64, AudioError> {
    if waveform.samples.is_empty() {
        return Err(AudioError::Empty);
    }
    let sum_sq: f64 = waveform.samples.iter().map(|s| s * s).sum();
    Ok((sum_sq / waveform.samples.len() as f64).sqrt())
}
