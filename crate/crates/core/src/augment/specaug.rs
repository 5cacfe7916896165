//! SpecAugment: time warping plus frequency and time masking.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::MelSpectrogram;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskValue {
    Zero,
    #[default]
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpecAugmentPolicy {
    pub time_warp_w: usize,
    pub n_freq_masks: usize,
    pub freq_mask_f: usize,
    pub n_time_masks: usize,
    pub time_mask_t: usize,
    pub mask_value: MaskValue,
}

impl Default for SpecAugmentPolicy {
    fn default() -> Self {
        Self {
            time_warp_w: 5,
            n_freq_masks: 2,
            freq_mask_f: 27,
            n_time_masks: 2,
            time_mask_t: 40,
            mask_value: MaskValue::Mean,
        }
    }
}

impl SpecAugmentPolicy {
    /// Policy that leaves every input unchanged.
    pub fn disabled() -> Self {
        Self {
            time_warp_w: 0,
            n_freq_masks: 0,
            freq_mask_f: 0,
            n_time_masks: 0,
            time_mask_t: 0,
            mask_value: MaskValue::Zero,
        }
    }

    /// Upper bound on the number of masked cells for a `frames` x `bins` input.
    pub fn max_masked_cells(&self, frames: usize, bins: usize) -> usize {
        self.n_freq_masks * self.freq_mask_f * frames + self.n_time_masks * self.time_mask_t * bins
    }
}

/// Piecewise-linear warp that moves frame `center` to `center + shift`.
fn time_warp(frames: &Array2<f64>, center: usize, shift: i64) -> Array2<f64> {
    let t = frames.nrows();
    let dest = (center as i64 + shift) as f64;
    let c = center as f64;
    let last = (t - 1) as f64;
    let mut out = Array2::zeros(frames.dim());
    for i in 0..t {
        let y = i as f64;
        let src = if y <= dest {
            if dest > 0.0 { y * c / dest } else { 0.0 }
        } else {
            c + (y - dest) * (last - c) / (last - dest)
        };
        let lo = (src.floor() as usize).min(t - 1);
        let hi = (lo + 1).min(t - 1);
        let frac = src - lo as f64;
        let row = &frames.row(lo) * (1.0 - frac) + &frames.row(hi) * frac;
        out.row_mut(i).assign(&row);
    }
    out
}

/// Applies `policy` to `mel`. The shape never changes; mask widths larger
/// than the axis are clipped.
pub fn spec_augment<R: Rng + ?Sized>(
    mel: &MelSpectrogram,
    policy: &SpecAugmentPolicy,
    rng: &mut R,
) -> Result<MelSpectrogram> {
    let (t, f) = mel.frames.dim();
    if t == 0 || f == 0 {
        return Err(Error::EmptySpectrogram("SpecAugment needs a non-empty mel spectrogram".into()));
    }
    let w = policy.time_warp_w;
    let mut frames = if w > 0 && t > 2 * w {
        let center = rng.gen_range(w..t - w);
        let shift = rng.gen_range(-(w as i64)..=w as i64);
        if shift == 0 {
            mel.frames.clone()
        } else {
            time_warp(&mel.frames, center, shift)
        }
    } else {
        mel.frames.clone()
    };
    let fill = match policy.mask_value {
        MaskValue::Zero => 0.0,
        MaskValue::Mean => frames.mean().unwrap_or(0.0),
    };
    for _ in 0..policy.n_freq_masks {
        let width = rng.gen_range(0..=policy.freq_mask_f).min(f);
        let start = rng.gen_range(0..=f - width);
        frames.slice_mut(ndarray::s![.., start..start + width]).fill(fill);
    }
    for _ in 0..policy.n_time_masks {
        let width = rng.gen_range(0..=policy.time_mask_t).min(t);
        let start = rng.gen_range(0..=t - width);
        frames.slice_mut(ndarray::s![start..start + width, ..]).fill(fill);
    }
    Ok(MelSpectrogram {
        frames,
        n_mels: mel.n_mels,
        params: mel.params,
        log: mel.log,
    })
}
