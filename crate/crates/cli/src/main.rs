use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cascade_kit::adapters::{resolve_asr, AdapterSpec, ResolveContext};
use cascade_kit::audio::{read_wav, resample, write_wav, AudioBuffer, WavEncoding};
use cascade_kit::augment::{apply_recipe, AugmentRecipe};
use cascade_kit::enhance::{wiener_enhance, NoiseEstimation, WienerConfig};
use cascade_kit::fusion::{rover, Hypothesis, TieBreak, VoteConfig};
use cascade_kit::manifest::{read_manifest, to_jsonl, write_manifest, ManifestEntry};
use cascade_kit::metrics::{asr_bleu, char_alignment, corpus_bleu, word_alignment, AlignmentStats, Smoothing};
use cascade_kit::pipeline::{run_to_dir, PipelineConfig};
use cascade_kit::textnorm::{remove_fillers, to_asr_format_with, tokenize, FillerLexicon, NumeralPolicy, TokenMode};
use cascade_kit::vad::{detect, extract_noise_set, VadConfig, DEFAULT_HARVEST_MIN_LEN, DEFAULT_HARVEST_THRESHOLD_DB};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_FATAL: u8 = 3;

#[derive(Parser)]
#[command(name = "cascade-kit", version, about = "Cascaded speech translation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the ASR -> fusion -> MT -> TTS cascade over a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Worker threads; defaults to the number of CPUs.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Expand a manifest with augmented audio variants.
    Augment {
        #[arg(long)]
        recipe: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Label vocal and non-vocal regions of a WAV file or manifest.
    Vad {
        /// WAV file, or JSON-lines manifest (`.jsonl`).
        input: PathBuf,
        /// VadConfig as JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write loud non-vocal segments as WAV files into this directory.
        #[arg(long)]
        harvest_noise: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_HARVEST_THRESHOLD_DB, allow_negative_numbers = true)]
        threshold_db: f64,
        #[arg(long, default_value_t = DEFAULT_HARVEST_MIN_LEN)]
        min_len: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Wiener-enhance one WAV file or every entry of a manifest.
    Enhance {
        input: Option<PathBuf>,
        output: Option<PathBuf>,
        #[arg(long, conflicts_with_all = ["input", "output"], requires = "out_dir")]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// WienerConfig as JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Estimate noise from VAD non-vocal frames.
        #[arg(long)]
        vad_guided: bool,
    },
    /// Normalize text lines or the texts of a JSON-lines manifest.
    Norm {
        input: PathBuf,
        /// Filler lexicon, one entry per line.
        #[arg(long)]
        fillers: Option<PathBuf>,
        /// Lowercase, strip punctuation and spell out numerals.
        #[arg(long)]
        asr_format: bool,
        #[arg(long, value_enum, default_value_t = Numerals::SpellOut)]
        numerals: Numerals,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// ROVER-combine transcripts from several systems.
    Fuse {
        /// JSON-lines transcript files, one per system, in system order.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0)]
        null_confidence: f64,
        #[arg(long, value_enum, default_value_t = TieBreakArg::PreferWord)]
        tie_break: TieBreakArg,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score hypotheses against references.
    Score {
        #[arg(long, value_enum)]
        metric: Metric,
        /// JSON-lines references `{utt, text}`.
        #[arg(long)]
        refs: PathBuf,
        /// JSON-lines hypotheses `{utt, text}`; for asr-bleu a manifest with audio paths.
        #[arg(long)]
        hyps: PathBuf,
        /// AdapterSpec JSON of the ASR used by asr-bleu.
        #[arg(long)]
        asr: Option<PathBuf>,
        /// BLEU tokenization.
        #[arg(long, value_enum, default_value_t = Tokens::Words)]
        tokens: Tokens,
        #[arg(long, default_value_t = 16000)]
        asr_sample_rate: u32,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Numerals {
    SpellOut,
    Remove,
}

#[derive(Clone, Copy, ValueEnum)]
enum TieBreakArg {
    PreferWord,
    PreferNull,
    LowestSystem,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Metric {
    Wer,
    Cer,
    Bleu,
    AsrBleu,
}

#[derive(Clone, Copy, ValueEnum)]
enum Tokens {
    Words,
    Chars,
}

enum Failure {
    Usage(String),
    Fatal(String),
}

impl From<cascade_kit::Error> for Failure {
    fn from(e: cascade_kit::Error) -> Self {
        match e {
            cascade_kit::Error::Argument(_) | cascade_kit::Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Fatal(other.to_string()),
        }
    }
}

type Outcome = Result<u8, Failure>;

fn fatal(e: impl std::fmt::Display) -> Failure {
    Failure::Fatal(e.to_string())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| fatal(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| fatal(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Failure::Usage(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p).map_err(|e| fatal(format!("{}: {e}", p.display())))?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes()).map_err(fatal)
}

fn is_manifest(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("jsonl" | "json"))
}

fn exit_for(failures: usize) -> u8 {
    if failures > 0 {
        EXIT_PARTIAL
    } else {
        EXIT_OK
    }
}

fn cmd_run(config: &Path, manifest: &Path, out_dir: &Path, workers: Option<usize>) -> Outcome {
    let config: PipelineConfig = read_json(config)?;
    let manifest = read_manifest(manifest)?;
    let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let (_, report) = run_to_dir(&manifest, &config, out_dir, workers)?;
    for (utt, stage) in &report.failed {
        log::warn!("{utt} failed at stage {stage:?}");
    }
    eprintln!("{} entries, {} failed; results in {}", report.entries, report.failures, out_dir.display());
    Ok(exit_for(report.failures))
}

fn cmd_augment(recipe: &Path, manifest: &Path, out_dir: &Path) -> Outcome {
    let recipe: AugmentRecipe = read_json(recipe)?;
    let manifest = read_manifest(manifest)?;
    let outcome = apply_recipe(&manifest, &recipe, out_dir)?;
    for f in &outcome.failures {
        eprintln!("{}: {}", f.utt_id, f.error);
    }
    eprintln!("{} manifest entries written to {}", outcome.entries.len(), out_dir.join("manifest.jsonl").display());
    Ok(exit_for(outcome.failures.len()))
}

/// `(utt, audio)` pairs from a WAV file or a manifest.
fn audio_inputs(input: &Path) -> Result<Vec<(String, Result<PathBuf, String>)>, Failure> {
    if is_manifest(input) {
        Ok(read_manifest(input)?
            .into_iter()
            .map(|e| {
                let path = e.audio_path.ok_or_else(|| "entry has no audio_path".to_string());
                (e.utt_id, path)
            })
            .collect())
    } else {
        let utt = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(vec![(utt, Ok(input.to_path_buf()))])
    }
}

#[derive(Serialize)]
struct SegmentLine<'a> {
    utt: &'a str,
    start: f64,
    end: f64,
    label: cascade_kit::vad::SegmentLabel,
}

fn cmd_vad(input: &Path, config: Option<&Path>, harvest: Option<&Path>, threshold_db: f64, min_len: f64, output: Option<&Path>) -> Outcome {
    let config: VadConfig = match config {
        Some(p) => read_json(p)?,
        None => VadConfig::default(),
    };
    config.validate()?;
    if let Some(dir) = harvest {
        std::fs::create_dir_all(dir).map_err(|e| fatal(format!("{}: {e}", dir.display())))?;
    }
    let mut out = open_output(output)?;
    let mut failures = 0;
    for (utt, path) in audio_inputs(input)? {
        let result = path.map_err(cascade_kit::Error::Argument).and_then(|p| {
            let audio = read_wav(&p)?;
            let segments = detect(&audio, &config)?;
            let noise = match harvest {
                Some(_) => extract_noise_set(&audio, &config, threshold_db, min_len)?,
                None => Vec::new(),
            };
            Ok((segments, noise))
        });
        match result {
            Ok((segments, noise)) => {
                for s in &segments {
                    let line = SegmentLine { utt: &utt, start: s.start, end: s.end, label: s.label };
                    emit(&mut out, &(serde_json::to_string(&line).map_err(fatal)? + "\n"))?;
                }
                if let Some(dir) = harvest {
                    for (i, n) in noise.iter().enumerate() {
                        write_wav(n, dir.join(format!("{utt}-noise{i:03}.wav")), WavEncoding::Pcm16)?;
                    }
                }
            }
            Err(e) => {
                failures += 1;
                eprintln!("{utt}: {e}");
            }
        }
    }
    out.flush().map_err(fatal)?;
    Ok(exit_for(failures))
}

fn cmd_enhance(
    input: Option<&Path>,
    output: Option<&Path>,
    manifest: Option<&Path>,
    out_dir: Option<&Path>,
    config: Option<&Path>,
    vad_guided: bool,
) -> Outcome {
    let mut config: WienerConfig = match config {
        Some(p) => read_json(p)?,
        None => WienerConfig::default(),
    };
    if vad_guided {
        config.noise_estimation = NoiseEstimation::VadGuided;
    }
    config.validate()?;
    match (input, output, manifest, out_dir) {
        (Some(i), Some(o), None, _) => {
            let audio = read_wav(i)?;
            write_wav(&wiener_enhance(&audio, &config)?, o, WavEncoding::Pcm16)?;
            Ok(EXIT_OK)
        }
        (None, None, Some(m), Some(dir)) => {
            let entries = read_manifest(m)?;
            let audio_dir = dir.join("audio");
            std::fs::create_dir_all(&audio_dir).map_err(|e| fatal(format!("{}: {e}", audio_dir.display())))?;
            let mut written = Vec::new();
            let mut failures = 0;
            for e in entries {
                let result = e
                    .audio_path
                    .as_ref()
                    .ok_or_else(|| cascade_kit::Error::Argument("entry has no audio_path".into()))
                    .and_then(|p| {
                        let enhanced = wiener_enhance(&read_wav(p)?, &config)?;
                        let rel = PathBuf::from("audio").join(format!("{}.wav", e.utt_id));
                        write_wav(&enhanced, dir.join(&rel), WavEncoding::Pcm16)?;
                        Ok(rel)
                    });
                match result {
                    Ok(rel) => written.push(ManifestEntry { audio_path: Some(rel), ..e }),
                    Err(err) => {
                        failures += 1;
                        eprintln!("{}: {err}", e.utt_id);
                    }
                }
            }
            write_manifest(dir.join("manifest.jsonl"), &written)?;
            Ok(exit_for(failures))
        }
        _ => Err(Failure::Usage("give INPUT OUTPUT, or --manifest with --out-dir".into())),
    }
}

fn cmd_norm(input: &Path, fillers: Option<&Path>, asr_format: bool, numerals: Numerals, output: Option<&Path>) -> Outcome {
    let lexicon = match fillers {
        Some(p) => FillerLexicon::from_file(p)?,
        None => FillerLexicon::default(),
    };
    let policy = match numerals {
        Numerals::SpellOut => NumeralPolicy::SpellOut,
        Numerals::Remove => NumeralPolicy::Remove,
    };
    let normalize = |text: &str| -> String {
        let cleaned = remove_fillers(text, &lexicon);
        if asr_format {
            to_asr_format_with(&cleaned, policy).text
        } else {
            cleaned
        }
    };
    let mut out = open_output(output)?;
    if is_manifest(input) {
        let mut entries: Vec<ManifestEntry> = read_jsonl(input)?;
        for e in &mut entries {
            e.source_text = e.source_text.as_deref().map(normalize);
        }
        emit(&mut out, &to_jsonl(&entries)?)?;
    } else {
        let text = std::fs::read_to_string(input).map_err(|e| fatal(format!("{}: {e}", input.display())))?;
        for line in text.lines() {
            emit(&mut out, &(normalize(line) + "\n"))?;
        }
    }
    out.flush().map_err(fatal)?;
    Ok(EXIT_OK)
}

#[derive(Serialize, Deserialize)]
struct TranscriptLine {
    utt: String,
    tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    confidences: Option<Vec<f64>>,
}

fn cmd_fuse(inputs: &[PathBuf], alpha: f64, null_confidence: f64, tie_break: TieBreakArg, output: Option<&Path>) -> Outcome {
    let config = VoteConfig {
        alpha,
        null_confidence,
        tie_break: match tie_break {
            TieBreakArg::PreferWord => TieBreak::PreferWord,
            TieBreakArg::PreferNull => TieBreak::PreferNull,
            TieBreakArg::LowestSystem => TieBreak::LowestSystem,
        },
    };
    config.validate()?;
    let systems: Vec<Vec<TranscriptLine>> = inputs.iter().map(|p| read_jsonl(p)).collect::<Result<_, _>>()?;
    let indexed: Vec<BTreeMap<&str, &TranscriptLine>> = systems.iter().map(|s| s.iter().map(|t| (t.utt.as_str(), t)).collect()).collect();
    let mut out = open_output(output)?;
    let mut failures = 0;
    for first in &systems[0] {
        let utt = first.utt.as_str();
        let hyps: Result<Vec<Hypothesis>, String> = indexed
            .iter()
            .enumerate()
            .map(|(i, sys)| {
                let t = sys.get(utt).ok_or_else(|| format!("missing from {}", inputs[i].display()))?;
                Hypothesis::new(t.tokens.clone(), t.confidences.clone(), i + 1).map_err(|e| e.to_string())
            })
            .collect();
        match hyps.and_then(|h| rover(&h, &config).map_err(|e| e.to_string())) {
            Ok(fused) => {
                let line = TranscriptLine { utt: utt.to_string(), tokens: fused.tokens, confidences: Some(fused.confidences) };
                emit(&mut out, &(serde_json::to_string(&line).map_err(fatal)? + "\n"))?;
            }
            Err(e) => {
                failures += 1;
                eprintln!("{utt}: {e}");
            }
        }
    }
    out.flush().map_err(fatal)?;
    Ok(exit_for(failures))
}

#[derive(Deserialize)]
struct TextLine {
    utt: String,
    text: String,
}

fn cmd_score(metric: Metric, refs: &Path, hyps: &Path, asr: Option<&Path>, tokens: Tokens, asr_sample_rate: u32) -> Outcome {
    let refs: Vec<TextLine> = read_jsonl(refs)?;
    let mode = match tokens {
        Tokens::Words => TokenMode::Words,
        Tokens::Chars => TokenMode::Chars,
    };
    let ref_tokens: Vec<Vec<String>> = refs.iter().map(|r| tokenize(&r.text, mode)).collect();
    let mut missing = 0;
    let report = if metric == Metric::AsrBleu {
        let asr = asr.ok_or_else(|| Failure::Usage("--asr is required for asr-bleu".into()))?;
        let spec: AdapterSpec = read_json(asr)?;
        let entries = read_manifest(hyps)?;
        let by_utt: BTreeMap<&str, &ManifestEntry> = entries.iter().map(|e| (e.utt_id.as_str(), e)).collect();
        let adapter = resolve_asr(&spec, ResolveContext { manifest: &entries, sample_rate: asr_sample_rate })?;
        let mut audio = Vec::new();
        for r in &refs {
            let loaded = by_utt
                .get(r.utt.as_str())
                .and_then(|e| e.audio_path.as_ref())
                .ok_or_else(|| cascade_kit::Error::Argument("no audio".into()))
                .and_then(read_wav)
                .and_then(|a| resample(&a, asr_sample_rate));
            audio.push(loaded.unwrap_or_else(|e| {
                missing += 1;
                eprintln!("{}: {e}", r.utt);
                AudioBuffer::silence(0, asr_sample_rate).expect("empty buffer")
            }));
        }
        let ids: Vec<String> = refs.iter().map(|r| r.utt.clone()).collect();
        let scored = asr_bleu(adapter.as_ref(), &ids, &audio, &ref_tokens, mode)?;
        missing += scored.failures;
        json!({ "metric": "asr-bleu", "value": scored.bleu.score, "bleu": scored.bleu })
    } else {
        let hyps: Vec<TextLine> = read_jsonl(hyps)?;
        let by_utt: BTreeMap<&str, &str> = hyps.iter().map(|h| (h.utt.as_str(), h.text.as_str())).collect();
        let hyp_texts: Vec<&str> = refs
            .iter()
            .map(|r| {
                by_utt.get(r.utt.as_str()).copied().unwrap_or_else(|| {
                    missing += 1;
                    eprintln!("{}: no hypothesis", r.utt);
                    ""
                })
            })
            .collect();
        match metric {
            Metric::Bleu => {
                let hyp_tokens: Vec<Vec<String>> = hyp_texts.iter().map(|h| tokenize(h, mode)).collect();
                let bleu = corpus_bleu(&ref_tokens, &hyp_tokens, 4, Smoothing::None)?;
                json!({ "metric": "bleu", "value": bleu.score, "bleu": bleu })
            }
            _ => {
                let mut per_utt = BTreeMap::new();
                let mut pooled = AlignmentStats::default();
                for (r, h) in refs.iter().zip(&hyp_texts) {
                    let stats = if metric == Metric::Wer { word_alignment(&r.text, h, true) } else { char_alignment(&r.text, h) };
                    per_utt.insert(r.utt.clone(), stats.error_rate()?);
                    pooled = pooled + stats;
                }
                let name = if metric == Metric::Wer { "wer" } else { "cer" };
                json!({ "metric": name, "value": pooled.error_rate()?, "per_utt": per_utt })
            }
        }
    };
    println!("{}", serde_json::to_string(&report).map_err(fatal)?);
    Ok(exit_for(missing))
}

fn dispatch(cli: Cli) -> Outcome {
    match cli.command {
        Command::Run { config, manifest, out_dir, workers } => cmd_run(&config, &manifest, &out_dir, workers),
        Command::Augment { recipe, manifest, out_dir } => cmd_augment(&recipe, &manifest, &out_dir),
        Command::Vad { input, config, harvest_noise, threshold_db, min_len, output } => {
            cmd_vad(&input, config.as_deref(), harvest_noise.as_deref(), threshold_db, min_len, output.as_deref())
        }
        Command::Enhance { input, output, manifest, out_dir, config, vad_guided } => cmd_enhance(
            input.as_deref(),
            output.as_deref(),
            manifest.as_deref(),
            out_dir.as_deref(),
            config.as_deref(),
            vad_guided,
        ),
        Command::Norm { input, fillers, asr_format, numerals, output } => {
            cmd_norm(&input, fillers.as_deref(), asr_format, numerals, output.as_deref())
        }
        Command::Fuse { inputs, alpha, null_confidence, tie_break, output } => {
            cmd_fuse(&inputs, alpha, null_confidence, tie_break, output.as_deref())
        }
        Command::Score { metric, refs, hyps, asr, tokens, asr_sample_rate } => {
            cmd_score(metric, &refs, &hyps, asr.as_deref(), tokens, asr_sample_rate)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Fatal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FATAL)
        }
    }
}
