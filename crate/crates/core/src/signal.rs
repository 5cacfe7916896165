//! Synthetic test signals and simple measurements on them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio::AudioBuffer;

/// Sine of `freq` Hz lasting `seconds` with peak `amplitude`.
pub fn tone(freq: f64, seconds: f64, sample_rate: u32, amplitude: f64) -> AudioBuffer {
    let n = (seconds * sample_rate as f64).round() as usize;
    let w = 2.0 * std::f64::consts::PI * freq / sample_rate as f64;
    let samples = (0..n).map(|i| amplitude * (w * i as f64).sin()).collect();
    AudioBuffer::from_parts_unchecked(samples, sample_rate)
}

/// Gaussian white noise with standard deviation `rms`.
pub fn white_noise(len: usize, sample_rate: u32, rms: f64, seed: u64) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..len)
        .map(|_| {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen();
            rms * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect();
    AudioBuffer::from_parts_unchecked(samples, sample_rate)
}

/// Frequency of the largest bin of a zero-padded whole-buffer FFT.
pub fn dominant_frequency(buffer: &AudioBuffer) -> f64 {
    let n = buffer.len().next_power_of_two().max(2);
    let mut data: Vec<Complex64> = buffer
        .samples()
        .iter()
        .map(|s| Complex64::new(*s, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut data);
    let peak = data[..n / 2 + 1]
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(k, _)| k)
        .unwrap_or(0);
    peak as f64 * buffer.sample_rate() as f64 / n as f64
}

/// `||a - b|| / ||b||`.
pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// SNR in dB of `estimate` measured against the known `clean` signal.
pub fn snr_db(clean: &[f64], estimate: &[f64]) -> f64 {
    let sig: f64 = clean.iter().map(|c| c * c).sum();
    let err: f64 = clean
        .iter()
        .zip(estimate)
        .map(|(c, e)| (e - c) * (e - c))
        .sum();
    10.0 * (sig / err).log10()
}

/// Sample-wise sum of two equally long signals.
pub fn add(a: &AudioBuffer, b: &AudioBuffer) -> AudioBuffer {
    assert_eq!(a.len(), b.len());
    let samples = a.samples().iter().zip(b.samples()).map(|(x, y)| x + y).collect();
    AudioBuffer::from_parts_unchecked(samples, a.sample_rate())
}

/// Concatenation of buffers sharing one sample rate.
pub fn concat(parts: &[AudioBuffer]) -> AudioBuffer {
    let sr = parts.first().map(|p| p.sample_rate()).unwrap_or(16000);
    let samples = parts.iter().flat_map(|p| p.samples().iter().copied()).collect();
    AudioBuffer::from_parts_unchecked(samples, sr)
}
