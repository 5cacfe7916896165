//! Speed perturbation, time stretching and pitch shifting.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio::{rational_approximation, resample_ratio, AudioBuffer, Window};
use crate::error::{Error, Result};

const MAX_DEN: u64 = 1000;

fn fit_length(mut samples: Vec<f64>, len: usize) -> Vec<f64> {
    samples.resize(len, 0.0);
    samples
}

fn check_factor(factor: f64) -> Result<()> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::Argument(format!("speed factor must be positive, got {factor}")));
    }
    Ok(())
}

/// Plays the audio `factor` times faster by resampling, so pitch moves with
/// speed. Output length is `round(len / factor)`.
pub fn speed_perturb(buffer: &AudioBuffer, factor: f64) -> Result<AudioBuffer> {
    speed_perturb_with(buffer, factor, false)
}

/// Speed perturbation; with `preserve_pitch` the tempo changes by
/// phase-vocoder time stretching and the pitch is kept.
pub fn speed_perturb_with(buffer: &AudioBuffer, factor: f64, preserve_pitch: bool) -> Result<AudioBuffer> {
    check_factor(factor)?;
    if factor == 1.0 {
        return Ok(buffer.clone());
    }
    let target = (buffer.len() as f64 / factor).round() as usize;
    let out = if preserve_pitch {
        time_stretch(buffer.samples(), buffer.sample_rate(), 1.0 / factor)
    } else {
        let (up, down) = rational_approximation(1.0 / factor, MAX_DEN);
        resample_ratio(buffer.samples(), up, down)
    };
    Ok(AudioBuffer::from_parts_unchecked(fit_length(out, target), buffer.sample_rate()))
}

/// Shifts pitch by `cents` while keeping the length.
pub fn pitch_shift(buffer: &AudioBuffer, cents: f64) -> Result<AudioBuffer> {
    if !cents.is_finite() {
        return Err(Error::Argument(format!("pitch shift must be finite, got {cents}")));
    }
    if cents == 0.0 || buffer.is_empty() {
        return Ok(buffer.clone());
    }
    let ratio = 2f64.powf(cents / 1200.0);
    let stretched = time_stretch(buffer.samples(), buffer.sample_rate(), ratio);
    let (up, down) = rational_approximation(1.0 / ratio, MAX_DEN);
    let out = resample_ratio(&stretched, up, down);
    Ok(AudioBuffer::from_parts_unchecked(fit_length(out, buffer.len()), buffer.sample_rate()))
}

fn wrap_phase(x: f64) -> f64 {
    use std::f64::consts::PI;
    x - 2.0 * PI * ((x + PI) / (2.0 * PI)).floor()
}

/// Phase-vocoder time stretch with identity phase locking. `ratio` is
/// output duration over input duration.
pub fn time_stretch(samples: &[f64], sample_rate: u32, ratio: f64) -> Vec<f64> {
    let target = (samples.len() as f64 * ratio).round() as usize;
    if (ratio - 1.0).abs() < 1e-12 || samples.is_empty() {
        return fit_length(samples.to_vec(), target);
    }
    let n = ((0.064 * sample_rate as f64).round() as usize).next_power_of_two().max(16);
    let hs = n / 4;
    let ha = hs as f64 / ratio;
    let bins = n / 2 + 1;

    let mut x = vec![0.0; n];
    x.extend_from_slice(samples);
    x.resize(samples.len() + 3 * n, 0.0);
    let frames = ((samples.len() + 2 * n) as f64 / ha).floor() as usize + 1;

    let window = Window::Hann.coefficients(n);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);

    let out_len = (frames - 1) * hs + n;
    let mut out = vec![0.0; out_len];
    let mut wsum = vec![0.0; out_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut prev_phase = vec![0.0; bins];
    let mut synth_phase = vec![0.0; bins];
    let mut prev_pos = 0usize;
    let omega: Vec<f64> = (0..bins).map(|b| 2.0 * std::f64::consts::PI * b as f64 / n as f64).collect();

    for k in 0..frames {
        let pos = ((k as f64 * ha).round() as usize).min(x.len() - n);
        for i in 0..n {
            buf[i] = Complex64::new(x[pos + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        let mag: Vec<f64> = buf[..bins].iter().map(|c| c.norm()).collect();
        let phase: Vec<f64> = buf[..bins].iter().map(|c| c.arg()).collect();

        if k == 0 {
            synth_phase.copy_from_slice(&phase);
        } else {
            let dpa = (pos - prev_pos) as f64;
            let propagate = |b: usize| {
                let freq = if dpa > 0.0 {
                    omega[b] + wrap_phase(phase[b] - prev_phase[b] - omega[b] * dpa) / dpa
                } else {
                    omega[b]
                };
                synth_phase[b] + freq * hs as f64
            };
            let peaks: Vec<usize> = (0..bins)
                .filter(|&b| {
                    let left = b == 0 || mag[b] > mag[b - 1];
                    let right = b + 1 == bins || mag[b] >= mag[b + 1];
                    left && right
                })
                .collect();
            let mut next = vec![0.0; bins];
            if peaks.is_empty() {
                (0..bins).for_each(|b| next[b] = propagate(b));
            } else {
                let locked: Vec<f64> = peaks.iter().map(|&p| propagate(p)).collect();
                let mut region = 0;
                for b in 0..bins {
                    while region + 1 < peaks.len() && b > (peaks[region] + peaks[region + 1]) / 2 {
                        region += 1;
                    }
                    let p = peaks[region];
                    next[b] = locked[region] + phase[b] - phase[p];
                }
            }
            synth_phase = next;
        }
        prev_phase = phase;
        prev_pos = pos;

        for b in 0..bins {
            let c = Complex64::from_polar(mag[b], synth_phase[b]);
            buf[b] = c;
            if b > 0 && b < n - b {
                buf[n - b] = c.conj();
            }
        }
        ifft.process(&mut buf);
        let start = k * hs;
        for i in 0..n {
            out[start + i] += buf[i].re / n as f64 * window[i];
            wsum[start + i] += window[i] * window[i];
        }
    }
    let floor = 1e-3;
    let offset = (n as f64 * ratio).round() as usize;
    let stretched: Vec<f64> = out
        .iter()
        .zip(&wsum)
        .skip(offset)
        .map(|(y, w)| y / w.max(floor))
        .collect();
    fit_length(stretched, target)
}
