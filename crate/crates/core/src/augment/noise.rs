//! Additive noise at a target SNR.

use rand::Rng;
use crate::audio::{mean_power, AudioBuffer};
use crate::error::{Error, Result};

/// Mixture plus the gains that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMix {
    pub audio: AudioBuffer,
    /// Amplitude gain applied to the noise segment.
    pub noise_gain: f64,
    /// Gain applied to the sum to keep peaks within [-1, 1]; 1.0 when unused.
    pub peak_gain: f64,
    /// Start of the noise segment within the noise buffer.
    pub offset: usize,
}

/// Noise gain that puts `noise_power` at `snr_db` below `speech_power`.
pub fn snr_gain(speech_power: f64, noise_power: f64, snr_db: f64) -> f64 {
    (speech_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// `len` samples of `noise` starting at `offset`, looping as needed.
pub fn noise_segment(noise: &[f64], offset: usize, len: usize) -> Vec<f64> {
    noise.iter().cycle().skip(offset).take(len).copied().collect()
}

/// Adds `noise` to `speech` at `snr_db`, peak-normalizing only on overflow.
pub fn mix_noise<R: Rng + ?Sized>(
    speech: &AudioBuffer,
    noise: &AudioBuffer,
    snr_db: f64,
    rng: &mut R,
) -> Result<NoiseMix> {
    if speech.sample_rate() != noise.sample_rate() {
        return Err(Error::Argument(format!(
            "speech at {} Hz but noise at {} Hz",
            speech.sample_rate(),
            noise.sample_rate()
        )));
    }
    if !snr_db.is_finite() {
        return Err(Error::Argument(format!("SNR must be finite, got {snr_db}")));
    }
    if noise.is_empty() || noise.samples().iter().all(|s| *s == 0.0) {
        return Err(Error::Argument("noise buffer is silent".into()));
    }
    let offset = rng.gen_range(0..noise.len());
    let segment = noise_segment(noise.samples(), offset, speech.len());
    let pn = mean_power(&segment);
    if speech.is_empty() {
        return Ok(NoiseMix { audio: speech.clone(), noise_gain: 0.0, peak_gain: 1.0, offset });
    }
    if pn == 0.0 {
        return Err(Error::Argument("selected noise segment is silent".into()));
    }
    let gain = snr_gain(mean_power(speech.samples()), pn, snr_db);
    let mut mixed: Vec<f64> = speech.samples().iter().zip(&segment).map(|(s, n)| s + gain * n).collect();
    let peak = mixed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let peak_gain = if peak > 1.0 { 1.0 / peak } else { 1.0 };
    if peak_gain != 1.0 {
        mixed.iter_mut().for_each(|v| *v *= peak_gain);
    }
    Ok(NoiseMix {
        audio: AudioBuffer::from_parts_unchecked(mixed, speech.sample_rate()),
        noise_gain: gain,
        peak_gain,
        offset,
    })
}
