//! Single-channel Wiener enhancement with a decision-directed a-priori SNR.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::audio::{istft, stft, AudioBuffer, FrameParams, Spectrogram, Window};
use crate::error::{Error, Result};
use crate::vad::{frame_decisions, VadConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseEstimation {
    /// Mean power of the first `init_frames` frames.
    #[default]
    InitialFrames,
    /// Mean power of the frames the VAD labels non-vocal.
    VadGuided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WienerConfig {
    pub frame_params: FrameParams,
    pub noise_estimation: NoiseEstimation,
    pub gain_floor: f64,
    pub prior_snr_smoothing: f64,
    pub init_frames: usize,
}

impl Default for WienerConfig {
    fn default() -> Self {
        Self {
            frame_params: FrameParams {
                frame_length: 0.032,
                frame_shift: 0.016,
                window: Window::Hann,
            },
            noise_estimation: NoiseEstimation::InitialFrames,
            gain_floor: 0.1,
            prior_snr_smoothing: 0.98,
            init_frames: 6,
        }
    }
}

impl WienerConfig {
    pub fn validate(&self) -> Result<()> {
        self.frame_params.validate()?;
        if !(self.gain_floor > 0.0 && self.gain_floor < 1.0) {
            return Err(Error::Config(format!("gain_floor {} outside (0, 1)", self.gain_floor)));
        }
        if !(self.prior_snr_smoothing > 0.0 && self.prior_snr_smoothing < 1.0) {
            return Err(Error::Config("prior_snr_smoothing must lie in (0, 1)".into()));
        }
        if self.init_frames == 0 {
            return Err(Error::Config("init_frames must be at least 1".into()));
        }
        Ok(())
    }
}

const MIN_PRIOR_SNR: f64 = 1e-3;

struct Analysis {
    spec: Spectrogram,
    pad: usize,
    /// First frame lying wholly inside the unpadded signal.
    first_interior: usize,
    interior_frames: usize,
}

fn analyze(buffer: &AudioBuffer, config: &WienerConfig) -> Result<Analysis> {
    config.validate()?;
    let sr = buffer.sample_rate();
    let flen = config.frame_params.frame_len_samples(sr);
    let hop = config.frame_params.hop_samples(sr);
    if hop == 0 || flen == 0 || hop > flen {
        return Err(Error::Config(format!("degenerate framing: {flen}-sample frames, {hop}-sample hop")));
    }
    let interior_frames = config.frame_params.num_frames(buffer.len(), sr);
    if interior_frames == 0 {
        return Err(Error::EmptySpectrogram(format!(
            "{} samples is shorter than one {flen}-sample frame",
            buffer.len()
        )));
    }
    let pad = flen.div_ceil(hop) * hop;
    let body = pad + buffer.len();
    let tail = pad + (hop - (body + pad - flen) % hop) % hop;
    let mut samples = vec![0.0; pad];
    samples.extend_from_slice(buffer.samples());
    samples.resize(body + tail, 0.0);
    let padded = AudioBuffer::from_parts_unchecked(samples, sr);
    Ok(Analysis {
        spec: stft(&padded, &config.frame_params)?,
        pad,
        first_interior: pad / hop,
        interior_frames,
    })
}

fn noise_psd(a: &Analysis, power: &Array2<f64>, buffer: &AudioBuffer, config: &WienerConfig) -> Result<Vec<f64>> {
    let initial: Vec<usize> = (a.first_interior..a.first_interior + config.init_frames.min(a.interior_frames)).collect();
    let frames = match config.noise_estimation {
        NoiseEstimation::InitialFrames => initial,
        NoiseEstimation::VadGuided => {
            let vad = VadConfig::default();
            let picked = match frame_decisions(buffer, &vad) {
                Ok(decisions) => {
                    let sr = buffer.sample_rate();
                    let (vlen, vhop) = (vad.frame_params.frame_len_samples(sr), vad.frame_params.hop_samples(sr));
                    let (flen, hop) = (a.spec.frame_len(), a.spec.hop());
                    (a.first_interior..a.first_interior + a.interior_frames)
                        .filter(|&t| {
                            let center = (t * hop + flen / 2).saturating_sub(a.pad);
                            let v = (center.saturating_sub(vlen / 2) / vhop).min(decisions.len() - 1);
                            !decisions[v]
                        })
                        .collect()
                }
                Err(_) => Vec::new(),
            };
            if picked.is_empty() {
                initial
            } else {
                picked
            }
        }
    };
    let floor = 1e-12 * power.mean().unwrap_or(0.0) + f64::MIN_POSITIVE;
    Ok((0..power.ncols())
        .map(|k| {
            let col = power.column(k);
            (frames.iter().map(|&t| col[t]).sum::<f64>() / frames.len() as f64).max(floor)
        })
        .collect())
}

fn gains_for(a: &Analysis, buffer: &AudioBuffer, config: &WienerConfig) -> Result<Array2<f64>> {
    let power = a.spec.frames.mapv(|c| c.norm_sqr());
    let noise = noise_psd(a, &power, buffer, config)?;
    let alpha = config.prior_snr_smoothing;
    let mut gains = Array2::zeros(power.dim());
    let mut prev_clean = vec![0.0; noise.len()];
    for (t, row) in power.outer_iter().enumerate() {
        for (k, p) in row.iter().enumerate() {
            let gamma = p / noise[k];
            let xi = (alpha * prev_clean[k] / noise[k] + (1.0 - alpha) * (gamma - 1.0).max(0.0)).max(MIN_PRIOR_SNR);
            let g = (xi / (1.0 + xi)).max(config.gain_floor);
            gains[[t, k]] = g;
            prev_clean[k] = g * g * p;
        }
    }
    Ok(gains)
}

/// Per-frame, per-bin gains over the padded analysis frames.
pub fn wiener_gains(buffer: &AudioBuffer, config: &WienerConfig) -> Result<Array2<f64>> {
    let a = analyze(buffer, config)?;
    gains_for(&a, buffer, config)
}

/// Wiener-filtered copy of `buffer`, same length and sample rate.
pub fn wiener_enhance(buffer: &AudioBuffer, config: &WienerConfig) -> Result<AudioBuffer> {
    let mut a = analyze(buffer, config)?;
    let gains = gains_for(&a, buffer, config)?;
    a.spec.frames.zip_mut_with(&gains, |c, g| *c *= *g);
    let out = istft(&a.spec)?;
    let samples = out.samples()[a.pad..a.pad + buffer.len()]
        .iter()
        .map(|s| if s.is_finite() { *s } else { 0.0 })
        .collect();
    Ok(AudioBuffer::from_parts_unchecked(samples, buffer.sample_rate()))
}
