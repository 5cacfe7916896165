//! Training-data augmentation: speed, pitch, additive noise, codec
//! simulation and SpecAugment, applied per buffer or across a manifest.

mod codec;
mod noise;
mod specaug;
mod tempo;

use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use codec::{codec_simulate, CodecAdapter, CommandCodec, FallbackCodec, IdentityCodec};
pub use noise::{mix_noise, noise_segment, snr_gain, NoiseMix};
pub use specaug::{spec_augment, MaskValue, SpecAugmentPolicy};
pub use tempo::{pitch_shift, speed_perturb, speed_perturb_with, time_stretch};

use crate::audio::{read_wav, write_wav, AudioBuffer, WavEncoding};
use crate::error::{Error, Result};
use crate::manifest::{write_manifest, ManifestEntry};
use crate::util::rng_for;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CodecSpec {
    #[default]
    Fallback,
    Identity,
    /// Command template reading WAV on stdin and writing WAV on stdout.
    Command { argv: Vec<String> },
}

impl CodecSpec {
    pub fn build(&self) -> Result<Box<dyn CodecAdapter>> {
        Ok(match self {
            CodecSpec::Fallback => Box::new(FallbackCodec),
            CodecSpec::Identity => Box::new(IdentityCodec),
            CodecSpec::Command { argv } => Box::new(CommandCodec::new(
                argv.first().cloned().unwrap_or_default(),
                argv.clone(),
            )?),
        })
    }
}

/// Declarative augmentation plan. Empty lists disable a strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentRecipe {
    pub speed_factors: Vec<f64>,
    /// Keep pitch when changing speed (time stretching instead of resampling).
    pub preserve_pitch: bool,
    /// `[low, high]` in cents, or empty.
    pub pitch_range_cents: Vec<f64>,
    /// `[low, high]` in dB, or empty.
    pub snr_range_db: Vec<f64>,
    pub noise_files: Vec<PathBuf>,
    /// Materialize noisy copies instead of marking entries for on-the-fly mixing.
    pub noise_offline: bool,
    pub codec_bitrates_kbps: Vec<f64>,
    pub codec: CodecSpec,
    pub specaugment: Option<SpecAugmentPolicy>,
    pub rng_seed: u64,
    pub encoding: WavEncoding,
}

impl Default for AugmentRecipe {
    fn default() -> Self {
        Self {
            speed_factors: Vec::new(),
            preserve_pitch: true,
            pitch_range_cents: Vec::new(),
            snr_range_db: Vec::new(),
            noise_files: Vec::new(),
            noise_offline: false,
            codec_bitrates_kbps: Vec::new(),
            codec: CodecSpec::Fallback,
            specaugment: None,
            rng_seed: 0,
            encoding: WavEncoding::Pcm16,
        }
    }
}

fn range(name: &str, v: &[f64]) -> Result<Option<(f64, f64)>> {
    match v {
        [] => Ok(None),
        [lo, hi] if lo.is_finite() && hi.is_finite() && lo <= hi => Ok(Some((*lo, *hi))),
        _ => Err(Error::Config(format!("{name} must be empty or [low, high] with low <= high"))),
    }
}

impl AugmentRecipe {
    pub fn validate(&self) -> Result<()> {
        if let Some(f) = self.speed_factors.iter().find(|f| !(**f > 0.0 && f.is_finite())) {
            return Err(Error::Config(format!("speed factor {f} must be positive")));
        }
        if let Some(b) = self.codec_bitrates_kbps.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return Err(Error::Config(format!("bitrate {b} must be positive")));
        }
        range("pitch_range_cents", &self.pitch_range_cents)?;
        range("snr_range_db", &self.snr_range_db)?;
        Ok(())
    }

    fn needs_audio(&self) -> bool {
        self.speed_factors.iter().any(|f| *f != 1.0)
            || !self.pitch_range_cents.is_empty()
            || !self.codec_bitrates_kbps.is_empty()
            || (self.materializes_noise())
    }

    fn materializes_noise(&self) -> bool {
        self.noise_offline && !self.noise_files.is_empty() && !self.snr_range_db.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryFailure {
    pub utt_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOutcome {
    pub entries: Vec<ManifestEntry>,
    pub failures: Vec<EntryFailure>,
}

struct Plan<'a> {
    recipe: &'a AugmentRecipe,
    codec: Box<dyn CodecAdapter>,
    noises: Vec<AudioBuffer>,
    audio_dir: PathBuf,
    marks: Vec<(String, String)>,
}

impl Plan<'_> {
    fn variant(&self, entry: &ManifestEntry, tag: &str, audio: &AudioBuffer) -> Result<ManifestEntry> {
        let mut v = entry.clone();
        v.utt_id = format!("{}-{tag}", entry.utt_id);
        let path = self.audio_dir.join(format!("{}.wav", v.utt_id));
        write_wav(audio, &path, self.recipe.encoding)?;
        v.audio_path = Some(path);
        v.extras.insert("augment".into(), tag.into());
        v.extras.insert("origin".into(), entry.utt_id.clone());
        Ok(v)
    }

    fn augment(&self, entry: &ManifestEntry) -> Result<Vec<ManifestEntry>> {
        let r = self.recipe;
        let mut marked = entry.clone();
        marked.extras.extend(self.marks.iter().cloned());
        let mut out = vec![];
        if !r.needs_audio() {
            out.push(marked);
            return Ok(out);
        }
        let path = entry
            .audio_path
            .as_ref()
            .ok_or_else(|| Error::Argument(format!("`{}` has no audio", entry.utt_id)))?;
        let audio = read_wav(path)?;
        let mut rng = rng_for(r.rng_seed, &entry.utt_id);
        let base = &marked;
        out.push(base.clone());
        for &f in r.speed_factors.iter().filter(|f| **f != 1.0) {
            let y = speed_perturb_with(&audio, f, r.preserve_pitch)?;
            out.push(self.variant(base, &format!("sp{f}"), &y)?);
        }
        if let Some((lo, hi)) = range("pitch_range_cents", &r.pitch_range_cents)? {
            let cents = round1(rng.gen_range(lo..=hi));
            let y = pitch_shift(&audio, cents)?;
            out.push(self.variant(base, &format!("ps{cents:.1}"), &y)?);
        }
        for &b in &r.codec_bitrates_kbps {
            let y = codec_simulate(&audio, b, self.codec.as_ref())?;
            out.push(self.variant(base, &format!("codec{b}"), &y)?);
        }
        if r.materializes_noise() {
            let (lo, hi) = range("snr_range_db", &r.snr_range_db)?.expect("validated");
            let snr = round1(rng.gen_range(lo..=hi));
            let which = rng.gen_range(0..self.noises.len());
            let mix = mix_noise(&audio, &self.noises[which], snr, &mut rng)?;
            let mut v = self.variant(base, &format!("snr{snr:.1}"), &mix.audio)?;
            v.extras.insert("noise_file".into(), r.noise_files[which].display().to_string());
            v.extras.insert("noise_gain".into(), format!("{}", mix.noise_gain));
            v.extras.insert("peak_gain".into(), format!("{}", mix.peak_gain));
            out.push(v);
        }
        Ok(out)
    }
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Applies `recipe` to every entry, writing new audio under `out_dir/audio`
/// and the extended manifest to `out_dir/manifest.jsonl`.
///
/// Each entry is followed by its variants, tagged `-sp{factor}`,
/// `-ps{cents}`, `-codec{kbps}` and `-snr{db}`. Noise and SpecAugment are
/// recorded in `extras` for on-the-fly use unless noise is materialized.
pub fn apply_recipe(manifest: &[ManifestEntry], recipe: &AugmentRecipe, out_dir: &Path) -> Result<AugmentOutcome> {
    recipe.validate()?;
    let audio_dir = out_dir.join("audio");
    std::fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;
    let noises = if recipe.materializes_noise() {
        recipe.noise_files.iter().map(read_wav).collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let mut marks = Vec::new();
    if !recipe.snr_range_db.is_empty() && !recipe.materializes_noise() {
        marks.push((
            "augment.noise_snr_db".to_string(),
            format!("{},{}", recipe.snr_range_db[0], recipe.snr_range_db[1]),
        ));
    }
    if let Some(policy) = &recipe.specaugment {
        marks.push(("augment.specaugment".to_string(), serde_json::to_string(policy)?));
    }
    let plan = Plan {
        recipe,
        codec: recipe.codec.build()?,
        noises,
        audio_dir,
        marks,
    };
    let results: Vec<Result<Vec<ManifestEntry>>> = manifest.par_iter().map(|e| plan.augment(e)).collect();
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (entry, result) in manifest.iter().zip(results) {
        match result {
            Ok(v) => entries.extend(v),
            Err(e) => {
                log::warn!("augmenting `{}` failed: {e}", entry.utt_id);
                failures.push(EntryFailure {
                    utt_id: entry.utt_id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    write_manifest(out_dir.join("manifest.jsonl"), &entries)?;
    Ok(AugmentOutcome { entries, failures })
}
