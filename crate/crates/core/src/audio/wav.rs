use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WavEncoding {
    #[default]
    Pcm16,
    Float32,
}

/// PCM16 quantization used on write: `round(x * 32768)` clamped to the i16 range.
pub fn quantize_pcm16(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::FormatError(msg) => Error::Format(msg.to_string()),
        hound::Error::Unsupported => Error::Unsupported("unsupported WAV feature".into()),
        hound::Error::TooWide => Error::Format("sample too wide for its bit depth".into()),
        hound::Error::InvalidSampleFormat => Error::Unsupported("invalid sample format".into()),
        other => Error::Format(other.to_string()),
    }
}

/// Reads a RIFF/WAVE file, downmixing multichannel audio by averaging.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    decode_wav(BufReader::new(file), path)
}

pub(crate) fn decode_wav<R: Read>(reader: R, path: &Path) -> Result<AudioBuffer> {
    let mut reader = hound::WavReader::new(reader).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Format("zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(Error::Unsupported(format!(
                "{bits}-bit {fmt:?} samples (expected PCM16 or float32)"
            )))
        }
    };
    let mono = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    AudioBuffer::new(mono, spec.sample_rate)
}

pub fn write_wav(buffer: &AudioBuffer, path: impl AsRef<Path>, encoding: WavEncoding) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    encode_wav(buffer, BufWriter::new(file), encoding, path)
}

pub(crate) fn encode_wav<W: Write + Seek>(
    buffer: &AudioBuffer,
    writer: W,
    encoding: WavEncoding,
    path: &Path,
) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate(),
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => hound::SampleFormat::Int,
            WavEncoding::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut w = hound::WavWriter::new(writer, spec).map_err(|e| map_hound(path, e))?;
    for &s in buffer.samples() {
        match encoding {
            WavEncoding::Pcm16 => w.write_sample(quantize_pcm16(s)),
            WavEncoding::Float32 => w.write_sample(s as f32),
        }
        .map_err(|e| map_hound(path, e))?;
    }
    w.finalize().map_err(|e| map_hound(path, e))
}

/// In-memory WAV bytes, used by process-based adapters.
pub(crate) fn wav_bytes(buffer: &AudioBuffer, encoding: WavEncoding) -> Result<Vec<u8>> {
    let mut cursor = std::io::Cursor::new(Vec::new());
    encode_wav(buffer, &mut cursor, encoding, Path::new("<memory>"))?;
    Ok(cursor.into_inner())
}

pub(crate) fn wav_from_bytes(bytes: &[u8]) -> Result<AudioBuffer> {
    decode_wav(std::io::Cursor::new(bytes), Path::new("<memory>"))
}
