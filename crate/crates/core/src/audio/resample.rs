//! Polyphase windowed-sinc sample-rate conversion.

use super::AudioBuffer;
use crate::error::{Error, Result};

const TAPS_PER_PHASE: usize = 64;
const HALF_TAPS: i64 = (TAPS_PER_PHASE / 2) as i64;
const KAISER_BETA: f64 = 8.6;
/// Passband edge as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.95;
/// Above this many phases the coefficients are computed per output sample.
const MAX_TABLE_PHASES: u64 = 4096;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    let mut k = 1.0;
    while term > 1e-17 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

struct Kernel {
    up: u64,
    cutoff: f64,
    inv_i0_beta: f64,
}

impl Kernel {
    fn new(up: u64, down: u64) -> Self {
        let cutoff = ROLLOFF * (up as f64 / down as f64).min(1.0);
        Self {
            up,
            cutoff,
            inv_i0_beta: 1.0 / bessel_i0(KAISER_BETA),
        }
    }

    fn kaiser(&self, t: f64) -> f64 {
        let r = t / HALF_TAPS as f64;
        if r.abs() >= 1.0 {
            return 0.0;
        }
        bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) * self.inv_i0_beta
    }

    /// Taps for input offsets `-(HALF_TAPS-1)..=HALF_TAPS` at the given phase, unit DC gain.
    fn phase(&self, phase: u64) -> [f64; TAPS_PER_PHASE] {
        let frac = phase as f64 / self.up as f64;
        let mut taps = [0.0; TAPS_PER_PHASE];
        let mut sum = 0.0;
        for (i, tap) in taps.iter_mut().enumerate() {
            let k = i as i64 - (HALF_TAPS - 1);
            let t = frac - k as f64;
            *tap = self.cutoff * sinc(self.cutoff * t) * self.kaiser(t);
            sum += *tap;
        }
        if sum != 0.0 {
            taps.iter_mut().for_each(|t| *t /= sum);
        }
        taps
    }
}

/// Resamples `samples` by the rational factor `up / down`.
///
/// Output length is `round(len * up / down)`; input outside the buffer is zero.
pub fn resample_ratio(samples: &[f64], up: u64, down: u64) -> Vec<f64> {
    assert!(up > 0 && down > 0, "resampling ratio must be positive");
    let g = gcd(up, down);
    let (up, down) = (up / g, down / g);
    if up == down {
        return samples.to_vec();
    }
    let out_len = ((samples.len() as u128 * up as u128 + down as u128 / 2) / down as u128) as usize;
    if samples.is_empty() {
        return vec![0.0; out_len];
    }
    let kernel = Kernel::new(up, down);
    let table: Option<Vec<[f64; TAPS_PER_PHASE]>> =
        (up <= MAX_TABLE_PHASES).then(|| (0..up).map(|p| kernel.phase(p)).collect());
    let n = samples.len() as i64;
    let mut out = Vec::with_capacity(out_len);
    for j in 0..out_len as u64 {
        let pos = j as u128 * down as u128;
        let base = (pos / up as u128) as i64;
        let phase = (pos % up as u128) as u64;
        let computed;
        let taps = match &table {
            Some(t) => &t[phase as usize],
            None => {
                computed = kernel.phase(phase);
                &computed
            }
        };
        let first = base - (HALF_TAPS - 1);
        let mut acc = 0.0;
        for (i, tap) in taps.iter().enumerate() {
            let idx = first + i as i64;
            if (0..n).contains(&idx) {
                acc += samples[idx as usize] * tap;
            }
        }
        out.push(acc);
    }
    out
}

/// Converts `buffer` to `target_rate`.
pub fn resample(buffer: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    if target_rate == 0 {
        return Err(Error::Argument("target sample rate must be positive".into()));
    }
    if target_rate == buffer.sample_rate() {
        return Ok(buffer.clone());
    }
    let out = resample_ratio(buffer.samples(), target_rate as u64, buffer.sample_rate() as u64);
    Ok(AudioBuffer::from_parts_unchecked(out, target_rate))
}

/// Best rational approximation `p / q` of a positive `x` with `q <= max_den`.
pub fn rational_approximation(x: f64, max_den: u64) -> (u64, u64) {
    assert!(x > 0.0 && x.is_finite());
    let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
    let mut v = x;
    loop {
        let a = v.floor();
        let a_int = a as u64;
        let p2 = a_int.saturating_mul(p1).saturating_add(p0);
        let q2 = a_int.saturating_mul(q1).saturating_add(q0);
        if q2 > max_den {
            break;
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let rem = v - a;
        if rem < 1e-12 || (p1 as f64 / q1 as f64 - x).abs() < 1e-15 * x {
            break;
        }
        v = 1.0 / rem;
    }
    if q1 == 0 {
        (x.round().max(1.0) as u64, 1)
    } else {
        (p1.max(1), q1)
    }
}
