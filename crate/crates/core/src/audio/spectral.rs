use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
    Hamming,
    Rect,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        let two_pi = 2.0 * std::f64::consts::PI;
        (0..n)
            .map(|i| {
                let phase = two_pi * i as f64 / n as f64;
                match self {
                    Window::Hann => 0.5 - 0.5 * phase.cos(),
                    Window::Hamming => 0.54 - 0.46 * phase.cos(),
                    Window::Rect => 1.0,
                }
            })
            .collect()
    }
}

/// Frame length and shift in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameParams {
    pub frame_length: f64,
    pub frame_shift: f64,
    #[serde(default)]
    pub window: Window,
}

impl FrameParams {
    pub fn new(frame_length: f64, frame_shift: f64, window: Window) -> Result<Self> {
        let p = Self {
            frame_length,
            frame_shift,
            window,
        };
        p.validate()?;
        Ok(p)
    }

    /// 25 ms frames every 10 ms, the ASR front-end framing.
    pub fn asr() -> Self {
        Self {
            frame_length: 0.025,
            frame_shift: 0.010,
            window: Window::Hann,
        }
    }

    /// 50 ms frames every 12.5 ms, the TTS framing.
    pub fn tts() -> Self {
        Self {
            frame_length: 0.050,
            frame_shift: 0.0125,
            window: Window::Hann,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frame_shift > 0.0 && self.frame_shift <= self.frame_length)
            || !self.frame_length.is_finite()
        {
            return Err(Error::Config(format!(
                "need 0 < frame_shift <= frame_length, got shift {} length {}",
                self.frame_shift, self.frame_length
            )));
        }
        Ok(())
    }

    pub fn frame_len_samples(&self, sample_rate: u32) -> usize {
        (self.frame_length * sample_rate as f64).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.frame_shift * sample_rate as f64).round() as usize
    }

    pub fn fft_size(&self, sample_rate: u32) -> usize {
        self.frame_len_samples(sample_rate).next_power_of_two()
    }

    fn samples_checked(&self, sample_rate: u32) -> Result<(usize, usize)> {
        self.validate()?;
        let len = self.frame_len_samples(sample_rate);
        let hop = self.hop_samples(sample_rate);
        if hop == 0 || len == 0 || hop > len {
            return Err(Error::Config(format!(
                "frame params give {len}-sample frames with {hop}-sample hop at {sample_rate} Hz"
            )));
        }
        Ok((len, hop))
    }

    /// Number of frames for a signal of `len` samples, zero if shorter than one frame.
    pub fn num_frames(&self, len: usize, sample_rate: u32) -> usize {
        let flen = self.frame_len_samples(sample_rate);
        let hop = self.hop_samples(sample_rate).max(1);
        if len < flen || flen == 0 {
            0
        } else {
            1 + (len - flen) / hop
        }
    }
}

/// Complex STFT, one row per frame and `fft_size / 2 + 1` bins per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: Array2<Complex64>,
    pub params: FrameParams,
    pub sample_rate: u32,
    pub fft_size: usize,
    /// Length in samples of the analysed signal.
    pub signal_len: usize,
}

impl Spectrogram {
    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.frames.ncols()
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate as f64 / self.fft_size as f64
    }

    pub fn frame_len(&self) -> usize {
        self.params.frame_len_samples(self.sample_rate)
    }

    pub fn hop(&self) -> usize {
        self.params.hop_samples(self.sample_rate)
    }
}

pub fn stft(buffer: &AudioBuffer, params: &FrameParams) -> Result<Spectrogram> {
    let sr = buffer.sample_rate();
    let (flen, hop) = params.samples_checked(sr)?;
    if buffer.len() < flen {
        return Err(Error::EmptySpectrogram(format!(
            "{} samples is shorter than one {flen}-sample frame",
            buffer.len()
        )));
    }
    let n_fft = flen.next_power_of_two();
    let n_bins = n_fft / 2 + 1;
    let n_frames = 1 + (buffer.len() - flen) / hop;
    let window = params.window.coefficients(flen);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut frames = Array2::<Complex64>::zeros((n_frames, n_bins));
    let mut scratch = vec![Complex64::new(0.0, 0.0); n_fft];
    let x = buffer.samples();
    for t in 0..n_frames {
        let start = t * hop;
        for (i, c) in scratch.iter_mut().enumerate() {
            *c = if i < flen {
                Complex64::new(x[start + i] * window[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        fft.process(&mut scratch);
        frames
            .row_mut(t)
            .iter_mut()
            .zip(&scratch[..n_bins])
            .for_each(|(d, s)| *d = *s);
    }
    Ok(Spectrogram {
        frames,
        params: *params,
        sample_rate: sr,
        fft_size: n_fft,
        signal_len: buffer.len(),
    })
}

/// Overlap-add constant of `window` at `hop`, or `None` if the sum is not constant.
pub(crate) fn cola_constant(window: &[f64], hop: usize) -> Option<f64> {
    let sums: Vec<f64> = (0..hop)
        .map(|n| window.iter().skip(n).step_by(hop).sum())
        .collect();
    let max = sums.iter().cloned().fold(f64::MIN, f64::max);
    let min = sums.iter().cloned().fold(f64::MAX, f64::min);
    (min > 0.0 && (max - min) <= 1e-9 * max).then_some(max)
}

/// Inverse STFT by overlap-add of the analysis-windowed frames.
///
/// Samples covered by fewer frames than the steady state (the first and last
/// `frame_len - hop` samples) are only approximately reconstructed.
pub fn istft(spec: &Spectrogram) -> Result<AudioBuffer> {
    let sr = spec.sample_rate;
    let (flen, hop) = spec.params.samples_checked(sr)?;
    let n_fft = spec.fft_size;
    if spec.num_bins() != n_fft / 2 + 1 || n_fft < flen {
        return Err(Error::Config("spectrogram shape does not match its FFT size".into()));
    }
    let window = spec.params.window.coefficients(flen);
    let cola = cola_constant(&window, hop).ok_or_else(|| {
        Error::Config(format!(
            "{:?} window of {flen} samples with hop {hop} is not constant-overlap-add",
            spec.params.window
        ))
    })?;
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n_fft);
    let out_len = spec.signal_len.max((spec.num_frames().max(1) - 1) * hop + flen);
    let mut acc = vec![0.0; out_len];
    let mut wsum = vec![0.0; out_len];
    let mut scratch = vec![Complex64::new(0.0, 0.0); n_fft];
    for (t, row) in spec.frames.outer_iter().enumerate() {
        for (k, c) in row.iter().enumerate() {
            scratch[k] = *c;
            if k > 0 && k < n_fft - k {
                scratch[n_fft - k] = c.conj();
            }
        }
        ifft.process(&mut scratch);
        let start = t * hop;
        for i in 0..flen {
            acc[start + i] += scratch[i].re / n_fft as f64;
            wsum[start + i] += window[i];
        }
    }
    let floor = 0.1 * cola;
    let mut samples: Vec<f64> = acc
        .iter()
        .zip(&wsum)
        .map(|(a, w)| a / w.max(floor))
        .collect();
    samples.truncate(spec.signal_len);
    Ok(AudioBuffer::from_parts_unchecked(samples, sr))
}

/// Power spectrogram on a mel scale, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub frames: Array2<f64>,
    pub n_mels: usize,
    pub params: FrameParams,
    /// True when values are log-compressed (and may be negative).
    pub log: bool,
}

impl MelSpectrogram {
    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn to_log(&self, floor: f64) -> MelSpectrogram {
        MelSpectrogram {
            frames: self.frames.mapv(|v| if self.log { v } else { v.max(floor).ln() }),
            n_mels: self.n_mels,
            params: self.params,
            log: true,
        }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters on the HTK mel scale, each row normalized to unit sum.
///
/// Filters too narrow to cover any FFT bin collapse onto the bin nearest
/// their centre.
pub fn mel_filterbank(
    n_mels: usize,
    n_bins: usize,
    fft_size: usize,
    sample_rate: u32,
    fmin: f64,
    fmax: f64,
) -> Result<Array2<f64>> {
    if n_mels == 0 || n_mels > n_bins {
        return Err(Error::Config(format!("n_mels {n_mels} must be in 1..={n_bins}")));
    }
    if !(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate as f64 / 2.0) {
        return Err(Error::Config(format!(
            "need 0 <= fmin < fmax <= {}, got {fmin}..{fmax}",
            sample_rate as f64 / 2.0
        )));
    }
    let (mlo, mhi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / fft_size as f64;
    let mut fb = Array2::<f64>::zeros((n_mels, n_bins));
    for m in 0..n_mels {
        let (lo, centre, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f > lo && f <= centre {
                (f - lo) / (centre - lo)
            } else if f > centre && f < hi {
                (hi - f) / (hi - centre)
            } else {
                0.0
            };
            fb[[m, k]] = w;
        }
        let sum: f64 = fb.row(m).sum();
        if sum > 0.0 {
            fb.row_mut(m).mapv_inplace(|w| w / sum);
        } else {
            let nearest = ((centre / bin_hz).round() as usize).min(n_bins - 1);
            fb[[m, nearest]] = 1.0;
        }
    }
    Ok(fb)
}

pub fn mel_spectrogram(spec: &Spectrogram, n_mels: usize, fmin: f64, fmax: f64) -> Result<MelSpectrogram> {
    let fb = mel_filterbank(n_mels, spec.num_bins(), spec.fft_size, spec.sample_rate, fmin, fmax)?;
    let power = spec.frames.mapv(|c| c.norm_sqr());
    Ok(MelSpectrogram {
        frames: power.dot(&fb.t()),
        n_mels,
        params: spec.params,
        log: false,
    })
}
