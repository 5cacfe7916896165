//! Audio containers, WAV I/O, resampling and spectral transforms.
//!
//! Samples are held as `f64` in memory; PCM16 and float32 only appear at the
//! file boundary.

mod resample;
mod spectral;
mod wav;

pub use resample::{rational_approximation, resample, resample_ratio};
pub use spectral::{
    istft, mel_filterbank, mel_spectrogram, stft, FrameParams, MelSpectrogram, Spectrogram, Window,
};
pub use wav::{quantize_pcm16, read_wav, write_wav, WavEncoding};
pub(crate) use wav::{wav_bytes, wav_from_bytes};

use crate::error::{Error, Result};

/// Mono PCM audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Argument("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Argument(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Copy of `[start, end)` in samples, clamped to the buffer.
    pub fn slice(&self, start: usize, end: usize) -> AudioBuffer {
        let end = end.min(self.samples.len());
        let start = start.min(end);
        AudioBuffer {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn scaled(&self, gain: f64) -> AudioBuffer {
        AudioBuffer {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }

    pub(crate) fn from_parts_unchecked(samples: Vec<f64>, sample_rate: u32) -> Self {
        debug_assert!(sample_rate > 0);
        Self {
            samples,
            sample_rate,
        }
    }
}

/// Mean power of the samples.
pub(crate) fn mean_power(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64
}

/// RMS level in dB relative to full scale, `-inf` for an all-zero buffer.
pub fn rms_db(buffer: &AudioBuffer) -> Result<f64> {
    if buffer.is_empty() {
        return Err(Error::Argument("rms of an empty buffer".into()));
    }
    let p = mean_power(buffer.samples());
    if p == 0.0 {
        Ok(f64::NEG_INFINITY)
    } else {
        Ok(10.0 * p.log10())
    }
}
