//! The ASR -> fusion -> post-processing -> MT -> TTS cascade.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::{greedy_ensemble_decode, DecodeOptions};
use crate::adapters::{resolve_asr, resolve_mt, resolve_tts, AdapterSpec, AsrAdapter, MtAdapter, ResolveContext, TtsAdapter};
use crate::audio::{read_wav, resample, write_wav, AudioBuffer, WavEncoding};
use crate::enhance::{wiener_enhance, WienerConfig};
use crate::error::{Error, Result};
use crate::fusion::{rover, Hypothesis, VoteConfig};
use crate::manifest::{to_jsonl, ManifestEntry};
use crate::metrics::{align_tokens, asr_bleu, corpus_bleu, AlignmentStats, AsrBleuReport, BleuScore, Smoothing};
use crate::textnorm::{remove_fillers, to_asr_format, tokenize, FillerLexicon, TokenMode};
use crate::util::audio_fingerprint;

fn default_asr_rate() -> u32 {
    16000
}

fn default_output_rate() -> u32 {
    24000
}

fn default_bleu_tokens() -> TokenMode {
    TokenMode::Chars
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub asr_systems: Vec<AdapterSpec>,
    #[serde(default)]
    pub fusion: VoteConfig,
    /// Filler lexicon file; the built-in lexicon when absent.
    #[serde(default)]
    pub filler_lexicon: Option<PathBuf>,
    pub mt: AdapterSpec,
    /// When set, translations come from greedy decoding over the averaged
    /// next-token distributions of these models instead of `mt`.
    #[serde(default)]
    pub mt_ensemble: Option<Vec<AdapterSpec>>,
    #[serde(default)]
    pub decode: DecodeOptions,
    #[serde(default)]
    pub tts: Option<AdapterSpec>,
    /// Wiener-enhance the speaker reference before synthesis. Never touches ASR input.
    #[serde(default)]
    pub enhance_tts_refs: bool,
    #[serde(default)]
    pub wiener: WienerConfig,
    #[serde(default = "default_asr_rate")]
    pub asr_sample_rate: u32,
    #[serde(default = "default_output_rate")]
    pub output_sample_rate: u32,
    /// ASR used to transcribe synthesized speech for ASR-BLEU.
    #[serde(default)]
    pub asr_bleu: Option<AdapterSpec>,
    #[serde(default = "default_bleu_tokens")]
    pub bleu_tokens: TokenMode,
}

impl PipelineConfig {
    pub fn new(asr_systems: Vec<AdapterSpec>, mt: AdapterSpec) -> Self {
        Self {
            asr_systems,
            fusion: VoteConfig::default(),
            filler_lexicon: None,
            mt,
            mt_ensemble: None,
            decode: DecodeOptions::default(),
            tts: None,
            enhance_tts_refs: false,
            wiener: WienerConfig::default(),
            asr_sample_rate: default_asr_rate(),
            output_sample_rate: default_output_rate(),
            asr_bleu: None,
            bleu_tokens: default_bleu_tokens(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.asr_systems.is_empty() {
            return Err(Error::Config("at least one ASR system is required".into()));
        }
        if matches!(&self.mt_ensemble, Some(m) if m.is_empty()) {
            return Err(Error::Config("mt_ensemble must not be empty when given".into()));
        }
        if self.asr_sample_rate == 0 || self.output_sample_rate == 0 {
            return Err(Error::Config("sample rates must be positive".into()));
        }
        if self.asr_bleu.is_some() && self.tts.is_none() {
            return Err(Error::Config("asr_bleu needs a tts adapter".into()));
        }
        self.fusion.validate()?;
        if self.enhance_tts_refs {
            self.wiener.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Input,
    Asr,
    Fusion,
    Mt,
    Enhance,
    Tts,
}

/// Every intermediate of one entry. Fields after the failing stage are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub utt_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub nbest: Vec<Hypothesis>,
    #[serde(default)]
    pub fused: Option<String>,
    #[serde(default)]
    pub post_processed: Option<String>,
    #[serde(default)]
    pub translation: Option<String>,
    #[serde(default)]
    pub speaker_ref_digest: Option<String>,
    #[serde(default)]
    pub tts_audio: Option<PathBuf>,
    #[serde(default)]
    pub tts_digest: Option<String>,
    #[serde(skip)]
    pub audio: Option<AudioBuffer>,
}

impl PipelineResult {
    fn new(utt_id: &str) -> Self {
        Self {
            utt_id: utt_id.to_string(),
            failed_stage: None,
            error: None,
            nbest: Vec::new(),
            fused: None,
            post_processed: None,
            translation: None,
            speaker_ref_digest: None,
            tts_audio: None,
            tts_digest: None,
            audio: None,
        }
    }

    pub fn failed(&self) -> bool {
        self.failed_stage.is_some()
    }
}

struct Cascade {
    asr: Vec<Arc<dyn AsrAdapter>>,
    mt: Arc<dyn MtAdapter>,
    ensemble: Option<Vec<Arc<dyn MtAdapter>>>,
    tts: Option<Arc<dyn TtsAdapter>>,
    lexicon: FillerLexicon,
}

impl Cascade {
    fn build(manifest: &[ManifestEntry], config: &PipelineConfig) -> Result<Self> {
        let ctx = ResolveContext {
            manifest,
            sample_rate: config.output_sample_rate,
        };
        Ok(Self {
            asr: config.asr_systems.iter().map(|s| resolve_asr(s, ctx)).collect::<Result<_>>()?,
            mt: resolve_mt(&config.mt, ctx)?,
            ensemble: config
                .mt_ensemble
                .as_ref()
                .map(|specs| specs.iter().map(|s| resolve_mt(s, ctx)).collect::<Result<Vec<_>>>())
                .transpose()?,
            tts: config.tts.as_ref().map(|s| resolve_tts(s, ctx)).transpose()?,
            lexicon: match &config.filler_lexicon {
                Some(p) => FillerLexicon::from_file(p)?,
                None => FillerLexicon::default(),
            },
        })
    }

    fn run_entry(&self, entry: &ManifestEntry, config: &PipelineConfig) -> PipelineResult {
        let mut r = PipelineResult::new(&entry.utt_id);
        if let Err((stage, e)) = self.stages(entry, config, &mut r) {
            log::warn!("`{}` failed at {stage:?}: {e}", entry.utt_id);
            r.failed_stage = Some(stage);
            r.error = Some(e.to_string());
        }
        r
    }

    fn stages(
        &self,
        entry: &ManifestEntry,
        config: &PipelineConfig,
        r: &mut PipelineResult,
    ) -> std::result::Result<(), (Stage, Error)> {
        let at = |stage: Stage| move |e: Error| (stage, e);
        let input = match &entry.audio_path {
            Some(p) => Some(read_wav(p).and_then(|a| resample(&a, config.asr_sample_rate)).map_err(at(Stage::Input))?),
            None => None,
        };

        let source = match &input {
            Some(audio) => {
                for (i, asr) in self.asr.iter().enumerate() {
                    let t = asr.transcribe(&entry.utt_id, audio).map_err(at(Stage::Asr))?;
                    r.nbest.push(Hypothesis::new(t.tokens, t.confidences, i + 1).map_err(at(Stage::Asr))?);
                }
                let fused = rover(&r.nbest, &config.fusion).map_err(at(Stage::Fusion))?.text();
                r.fused = Some(fused.clone());
                fused
            }
            None => entry.source_text.clone().ok_or_else(|| {
                (Stage::Input, Error::Argument("entry has neither audio nor source text".into()))
            })?,
        };
        let cleaned = remove_fillers(&source, &self.lexicon);
        r.post_processed = Some(cleaned.clone());

        let translation = match &self.ensemble {
            Some(models) => greedy_ensemble_decode(models, &entry.utt_id, &cleaned, &config.decode),
            None => self.mt.translate(&entry.utt_id, &cleaned),
        }
        .map_err(at(Stage::Mt))?;
        r.translation = Some(translation.clone());

        let Some(tts) = &self.tts else { return Ok(()) };
        let reference = match entry.extras.get("speaker_ref") {
            Some(p) => Some(read_wav(p).map_err(at(Stage::Input))?),
            None => input,
        };
        let reference = match reference {
            Some(a) if config.enhance_tts_refs => Some(wiener_enhance(&a, &config.wiener).map_err(at(Stage::Enhance))?),
            other => other,
        };
        r.speaker_ref_digest = reference.as_ref().map(audio_fingerprint);
        let audio = tts
            .synthesize(&entry.utt_id, &translation, reference.as_ref())
            .and_then(|a| resample(&a, config.output_sample_rate))
            .map_err(at(Stage::Tts))?;
        r.tts_digest = Some(audio_fingerprint(&audio));
        r.audio = Some(audio);
        Ok(())
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

/// Runs the cascade over `manifest` with `workers` threads. Results follow
/// manifest order; per-entry failures are recorded, not returned as errors.
pub fn run_pipeline(manifest: &[ManifestEntry], config: &PipelineConfig, workers: usize) -> Result<Vec<PipelineResult>> {
    config.validate()?;
    crate::manifest::validate(manifest)?;
    let cascade = Cascade::build(manifest, config)?;
    Ok(pool(workers)?.install(|| manifest.par_iter().map(|e| cascade.run_entry(e, config)).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub entries: usize,
    pub failures: usize,
    pub failed: Vec<(String, Stage)>,
    /// Fused, filler-free transcripts against normalized source texts.
    pub asr_wer: Option<f64>,
    /// Translations against target texts.
    pub bleu: Option<BleuScore>,
    pub asr_bleu: Option<AsrBleuReport>,
}

/// Corpus-level scores over the entries that carry references.
pub fn summarize(
    manifest: &[ManifestEntry],
    results: &[PipelineResult],
    config: &PipelineConfig,
    workers: usize,
) -> Result<PipelineReport> {
    let ok: Vec<(&ManifestEntry, &PipelineResult)> = manifest.iter().zip(results).filter(|(_, r)| !r.failed()).collect();

    let mut wer_stats = AlignmentStats::default();
    for (e, r) in &ok {
        if let (Some(reference), Some(_), Some(hyp)) = (&e.source_text, &r.fused, &r.post_processed) {
            let rt = to_asr_format(reference).text;
            let ht = to_asr_format(hyp).text;
            let rt: Vec<&str> = rt.split_whitespace().collect();
            let ht: Vec<&str> = ht.split_whitespace().collect();
            wer_stats = wer_stats + align_tokens(&rt, &ht);
        }
    }
    let asr_wer = (wer_stats.ref_len > 0).then(|| wer_stats.error_rate()).transpose()?;

    let with_target: Vec<_> = ok.iter().filter(|(e, r)| e.target_text.is_some() && r.translation.is_some()).collect();
    let refs: Vec<Vec<String>> = with_target.iter().map(|(e, _)| tokenize(e.target_text.as_deref().unwrap(), config.bleu_tokens)).collect();
    let bleu = if refs.is_empty() {
        None
    } else {
        let hyps: Vec<Vec<String>> = with_target.iter().map(|(_, r)| tokenize(r.translation.as_deref().unwrap(), config.bleu_tokens)).collect();
        Some(corpus_bleu(&refs, &hyps, 4, Smoothing::None)?)
    };

    let asr_bleu = match &config.asr_bleu {
        Some(spec) => {
            let scored: Vec<_> = with_target.iter().filter(|(_, r)| r.audio.is_some()).collect();
            if scored.is_empty() {
                None
            } else {
                let ctx = ResolveContext { manifest, sample_rate: config.output_sample_rate };
                let asr = resolve_asr(spec, ctx)?;
                let ids: Vec<String> = scored.iter().map(|(e, _)| e.utt_id.clone()).collect();
                let audio: Vec<AudioBuffer> = scored.iter().map(|(_, r)| r.audio.clone().unwrap()).collect();
                let refs: Vec<Vec<String>> = scored.iter().map(|(e, _)| tokenize(e.target_text.as_deref().unwrap(), config.bleu_tokens)).collect();
                Some(pool(workers)?.install(|| asr_bleu(asr.as_ref(), &ids, &audio, &refs, config.bleu_tokens))?)
            }
        }
        None => None,
    };

    let failed: Vec<(String, Stage)> = results.iter().filter_map(|r| Some((r.utt_id.clone(), r.failed_stage?))).collect();
    Ok(PipelineReport {
        entries: results.len(),
        failures: failed.len(),
        failed,
        asr_wer,
        bleu,
        asr_bleu,
    })
}

/// Runs the cascade and writes `results.jsonl`, `tts/<utt>.wav` and
/// `report.json` under `out_dir`. Output bytes do not depend on `workers`.
pub fn run_to_dir(
    manifest: &[ManifestEntry],
    config: &PipelineConfig,
    out_dir: &Path,
    workers: usize,
) -> Result<(Vec<PipelineResult>, PipelineReport)> {
    let mut results = run_pipeline(manifest, config, workers)?;
    let tts_dir = out_dir.join("tts");
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    if results.iter().any(|r| r.audio.is_some()) {
        std::fs::create_dir_all(&tts_dir).map_err(|e| Error::io(&tts_dir, e))?;
    }
    for r in &mut results {
        if let Some(audio) = &r.audio {
            let rel = PathBuf::from("tts").join(format!("{}.wav", r.utt_id));
            write_wav(audio, out_dir.join(&rel), WavEncoding::Pcm16)?;
            r.tts_audio = Some(rel);
        }
    }
    let report = summarize(manifest, &results, config, workers)?;
    let results_path = out_dir.join("results.jsonl");
    std::fs::write(&results_path, to_jsonl(&results)?).map_err(|e| Error::io(&results_path, e))?;
    let report_path = out_dir.join("report.json");
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    std::fs::write(&report_path, json).map_err(|e| Error::io(&report_path, e))?;
    Ok((results, report))
}
