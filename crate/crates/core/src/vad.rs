//! Statistical voice activity detection and noise-set harvesting.

use serde::{Deserialize, Serialize};

use crate::audio::{rms_db, stft, AudioBuffer, FrameParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VadConfig {
    /// Leading frames assumed to be noise when the noise PSD is initialized.
    pub init_noise_frames: usize,
    /// Mean per-bin log likelihood ratio above which a frame is vocal.
    pub lrt_threshold: f64,
    /// Non-vocal runs of at most this many frames after speech are relabelled vocal.
    pub hangover_frames: usize,
    /// Decision-directed a-priori SNR smoothing.
    pub prior_snr_smoothing: f64,
    pub frame_params: FrameParams,
    /// Smoothing of the running noise PSD.
    pub noise_smoothing: f64,
    /// Frames whose log likelihood ratio is below this update the noise PSD.
    pub noise_update_threshold: f64,
    /// Initial noise PSD is clipped per bin to this multiple of its median.
    pub noise_cap_ratio: f64,
    pub min_prior_snr_db: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            init_noise_frames: 10,
            lrt_threshold: 0.15,
            hangover_frames: 8,
            prior_snr_smoothing: 0.98,
            frame_params: FrameParams::asr(),
            noise_smoothing: 0.98,
            noise_update_threshold: 0.15,
            noise_cap_ratio: 30.0,
            min_prior_snr_db: -25.0,
        }
    }
}

impl VadConfig {
    pub fn validate(&self) -> Result<()> {
        self.frame_params.validate()?;
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if self.init_noise_frames == 0 {
            return Err(Error::Config("init_noise_frames must be at least 1".into()));
        }
        if !unit(self.prior_snr_smoothing) || !unit(self.noise_smoothing) {
            return Err(Error::Config("smoothing factors must lie in (0, 1)".into()));
        }
        if !self.lrt_threshold.is_finite()
            || !self.noise_update_threshold.is_finite()
            || !self.min_prior_snr_db.is_finite()
            || !(self.noise_cap_ratio >= 1.0)
        {
            return Err(Error::Config("VAD thresholds must be finite and the cap ratio >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentLabel {
    Vocal,
    NonVocal,
}

/// Labelled span of the input, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub label: SegmentLabel,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn sample_range(&self, sample_rate: u32) -> (usize, usize) {
        let sr = sample_rate as f64;
        ((self.start * sr).round() as usize, (self.end * sr).round() as usize)
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Per-frame mean log likelihood ratio of speech presence.
pub fn frame_llr(buffer: &AudioBuffer, config: &VadConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let n_frames = config.frame_params.num_frames(buffer.len(), buffer.sample_rate());
    if n_frames < config.init_noise_frames {
        return Err(Error::Argument(format!(
            "buffer has {n_frames} frames, need at least {}",
            config.init_noise_frames
        )));
    }
    let spec = stft(buffer, &config.frame_params)?;
    let power = spec.frames.mapv(|c| c.norm_sqr());
    let n_bins = spec.num_bins();

    let mean_power = power.mean().unwrap_or(0.0);
    let floor = 1e-12 * mean_power + f64::MIN_POSITIVE;

    let mut noise: Vec<f64> = (0..n_bins)
        .map(|k| power.column(k).iter().take(config.init_noise_frames).sum::<f64>() / config.init_noise_frames as f64)
        .collect();
    let cap = config.noise_cap_ratio * median(&noise);
    noise.iter_mut().for_each(|n| *n = n.min(cap).max(floor));

    let xi_min = 10f64.powf(config.min_prior_snr_db / 10.0);
    let alpha = config.prior_snr_smoothing;
    let mut prev_clean = vec![0.0; n_bins];
    let mut llr = Vec::with_capacity(n_frames);
    for row in power.outer_iter() {
        let mut sum = 0.0;
        for k in 0..n_bins {
            let gamma = row[k] / noise[k];
            let xi = (alpha * prev_clean[k] / noise[k] + (1.0 - alpha) * (gamma - 1.0).max(0.0)).max(xi_min);
            sum += gamma * xi / (1.0 + xi) - xi.ln_1p();
            let gain = xi / (1.0 + xi);
            prev_clean[k] = gain * gain * row[k];
        }
        let frame = sum / n_bins as f64;
        if frame < config.noise_update_threshold {
            let beta = config.noise_smoothing;
            for k in 0..n_bins {
                noise[k] = (beta * noise[k] + (1.0 - beta) * row[k]).max(floor);
            }
        }
        llr.push(frame);
    }
    Ok(llr)
}

/// Thresholded frame decisions after hangover smoothing.
pub fn frame_decisions(buffer: &AudioBuffer, config: &VadConfig) -> Result<Vec<bool>> {
    let mut vocal: Vec<bool> = frame_llr(buffer, config)?
        .into_iter()
        .map(|l| l > config.lrt_threshold)
        .collect();
    apply_hangover(&mut vocal, config.hangover_frames);
    Ok(vocal)
}

fn apply_hangover(vocal: &mut [bool], hangover: usize) {
    let mut t = 0;
    while t < vocal.len() {
        if vocal[t] {
            t += 1;
            continue;
        }
        let start = t;
        while t < vocal.len() && !vocal[t] {
            t += 1;
        }
        if start > 0 && t - start <= hangover {
            vocal[start..t].iter_mut().for_each(|v| *v = true);
        }
    }
}

/// Labels the whole input as alternating vocal and non-vocal segments.
///
/// Each frame owns the span of one hop around its center; the first and last
/// frames extend to the buffer edges.
pub fn detect(buffer: &AudioBuffer, config: &VadConfig) -> Result<Vec<Segment>> {
    let vocal = frame_decisions(buffer, config)?;
    let sr = buffer.sample_rate();
    let flen = config.frame_params.frame_len_samples(sr);
    let hop = config.frame_params.hop_samples(sr);
    let boundary = |t: usize| (t * hop + flen / 2).saturating_sub(hop / 2).min(buffer.len());
    let label = |v: bool| if v { SegmentLabel::Vocal } else { SegmentLabel::NonVocal };

    let mut segments = Vec::new();
    let mut start = 0;
    for t in 1..=vocal.len() {
        if t == vocal.len() || vocal[t] != vocal[t - 1] {
            let end = if t == vocal.len() { buffer.len() } else { boundary(t) };
            if end > start {
                push_merged(&mut segments, start, end, label(vocal[t - 1]), sr);
            }
            start = end;
        }
    }
    Ok(segments)
}

fn push_merged(segments: &mut Vec<Segment>, start: usize, end: usize, label: SegmentLabel, sr: u32) {
    let sr = sr as f64;
    match segments.last_mut() {
        Some(last) if last.label == label => last.end = end as f64 / sr,
        _ => segments.push(Segment {
            start: start as f64 / sr,
            end: end as f64 / sr,
            label,
        }),
    }
}

pub const DEFAULT_HARVEST_THRESHOLD_DB: f64 = -50.0;
pub const DEFAULT_HARVEST_MIN_LEN: f64 = 0.5;

/// Non-vocal segments louder than `energy_threshold_db` and at least
/// `min_len` seconds long, cut from the input sample-exactly.
pub fn extract_noise_set(
    buffer: &AudioBuffer,
    config: &VadConfig,
    energy_threshold_db: f64,
    min_len: f64,
) -> Result<Vec<AudioBuffer>> {
    let mut out = Vec::new();
    for seg in detect(buffer, config)? {
        if seg.label != SegmentLabel::NonVocal || seg.duration() < min_len - 1e-12 {
            continue;
        }
        let (a, b) = seg.sample_range(buffer.sample_rate());
        let piece = buffer.slice(a, b);
        if energy_threshold_db == f64::NEG_INFINITY || rms_db(&piece)? > energy_threshold_db {
            out.push(piece);
        }
    }
    Ok(out)
}
