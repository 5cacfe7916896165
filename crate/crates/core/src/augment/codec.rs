//! Lossy-codec simulation through pluggable codec adapters.

use std::io::Write;
use std::process::{Command, Stdio};

use num_complex::Complex64;

use crate::audio::{istft, resample, stft, wav_bytes, wav_from_bytes, AudioBuffer, FrameParams, Window};
use crate::error::{Error, Result};

pub trait CodecAdapter: Send + Sync {
    fn name(&self) -> &str;
    /// Encodes and decodes `buffer` at `bitrate_kbps`.
    fn round_trip(&self, buffer: &AudioBuffer, bitrate_kbps: f64) -> Result<AudioBuffer>;
}

pub struct IdentityCodec;

impl CodecAdapter for IdentityCodec {
    fn name(&self) -> &str {
        "identity"
    }

    fn round_trip(&self, buffer: &AudioBuffer, _bitrate_kbps: f64) -> Result<AudioBuffer> {
        Ok(buffer.clone())
    }
}

/// Built-in stand-in for a perceptual codec: band-limits at a
/// bitrate-dependent cutoff and quantizes four sub-bands below it.
pub struct FallbackCodec;

impl FallbackCodec {
    pub const BANDS: usize = 4;

    pub fn cutoff_hz(bitrate_kbps: f64, sample_rate: u32) -> f64 {
        (8000.0 * bitrate_kbps / 256.0).min(sample_rate as f64 / 2.0)
    }

    pub fn bits(bitrate_kbps: f64) -> u32 {
        (bitrate_kbps / 8.0).round().clamp(2.0, 16.0) as u32
    }
}

fn quantize(x: f64, step: f64) -> f64 {
    (x / step).round() * step
}

impl CodecAdapter for FallbackCodec {
    fn name(&self) -> &str {
        "fallback"
    }

    fn round_trip(&self, buffer: &AudioBuffer, bitrate_kbps: f64) -> Result<AudioBuffer> {
        let sr = buffer.sample_rate();
        let params = FrameParams::new(0.032, 0.016, Window::Hann)?;
        let flen = params.frame_len_samples(sr);
        let hop = params.hop_samples(sr);
        let pad = flen.div_ceil(hop) * hop;
        let mut samples = vec![0.0; pad];
        samples.extend_from_slice(buffer.samples());
        let body = samples.len();
        samples.resize(body + pad + (hop - (body + pad - flen) % hop) % hop, 0.0);
        let mut spec = stft(&AudioBuffer::from_parts_unchecked(samples, sr), &params)?;

        let cutoff = Self::cutoff_hz(bitrate_kbps, sr);
        let keep = (0..spec.num_bins()).take_while(|&k| spec.bin_frequency(k) <= cutoff).count();
        let levels = (1u64 << (Self::bits(bitrate_kbps) - 1)) as f64;
        let width = keep.div_ceil(Self::BANDS).max(1);
        for mut row in spec.frames.outer_iter_mut() {
            row.iter_mut().skip(keep).for_each(|c| *c = Complex64::new(0.0, 0.0));
            for band in row.slice_mut(ndarray::s![..keep]).axis_chunks_iter_mut(ndarray::Axis(0), width) {
                let max = band.iter().fold(0.0f64, |m, c| m.max(c.re.abs()).max(c.im.abs()));
                if max > 0.0 {
                    let step = max / levels;
                    band.into_iter().for_each(|c| *c = Complex64::new(quantize(c.re, step), quantize(c.im, step)));
                }
            }
        }
        let out = istft(&spec)?;
        Ok(AudioBuffer::from_parts_unchecked(out.samples()[pad..pad + buffer.len()].to_vec(), sr))
    }
}

/// External encoder/decoder chain: reads WAV on stdin, writes WAV on stdout.
/// `{bitrate}` in the argument template is replaced by the bitrate in kbps.
pub struct CommandCodec {
    name: String,
    argv: Vec<String>,
}

impl CommandCodec {
    pub fn new(name: impl Into<String>, argv: Vec<String>) -> Result<Self> {
        if argv.is_empty() {
            return Err(Error::Config("codec command needs a non-empty argv".into()));
        }
        Ok(Self { name: name.into(), argv })
    }
}

impl CodecAdapter for CommandCodec {
    fn name(&self) -> &str {
        &self.name
    }

    fn round_trip(&self, buffer: &AudioBuffer, bitrate_kbps: f64) -> Result<AudioBuffer> {
        let rate = format!("{bitrate_kbps}");
        let args: Vec<String> = self.argv.iter().map(|a| a.replace("{bitrate}", &rate)).collect();
        let fail = |msg: String| Error::Codec(format!("{}: {msg}", self.name));
        let mut child = Command::new(&args[0])
            .args(&args[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| fail(format!("cannot start `{}`: {e}", args[0])))?;
        let input = wav_bytes(buffer, crate::audio::WavEncoding::Pcm16)?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = std::thread::spawn(move || stdin.write_all(&input));
        let output = child.wait_with_output().map_err(|e| fail(e.to_string()))?;
        let _ = writer.join();
        if !output.status.success() {
            return Err(fail(format!(
                "exited with {}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let decoded = wav_from_bytes(&output.stdout).map_err(|e| fail(e.to_string()))?;
        resample(&decoded, buffer.sample_rate())
    }
}

/// Round-trips `buffer` through `codec`, trimming or padding to the input length.
pub fn codec_simulate(buffer: &AudioBuffer, bitrate_kbps: f64, codec: &dyn CodecAdapter) -> Result<AudioBuffer> {
    if !(bitrate_kbps > 0.0 && bitrate_kbps.is_finite()) {
        return Err(Error::Argument(format!("bitrate must be positive, got {bitrate_kbps}")));
    }
    let out = codec.round_trip(buffer, bitrate_kbps).map_err(|e| match e {
        Error::Codec(_) => e,
        other => Error::Codec(format!("{}: {other}", codec.name())),
    })?;
    if out.len() == buffer.len() {
        return Ok(out);
    }
    let mut samples = out.into_samples();
    samples.resize(buffer.len(), 0.0);
    Ok(AudioBuffer::from_parts_unchecked(samples, buffer.sample_rate()))
}
