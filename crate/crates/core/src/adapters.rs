//! Model adapters for the ASR, MT and TTS stages.
//!
//! Adapters are either in-process mocks or external commands that speak a
//! JSON-lines protocol over stdin/stdout.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::audio::{read_wav, write_wav, AudioBuffer, WavEncoding};
use crate::error::{Error, Result};
use crate::manifest::ManifestEntry;
use crate::pipeline::TokenDistribution;
use crate::util::{audio_fingerprint, fnv1a64, rng_for};

/// Recognized tokens with optional per-token confidences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidences: Option<Vec<f64>>,
}

impl Transcript {
    pub fn from_text(text: &str) -> Self {
        Self {
            tokens: text.split_whitespace().map(str::to_string).collect(),
            confidences: None,
        }
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

pub trait AsrAdapter: Send + Sync {
    fn name(&self) -> &str;
    fn transcribe(&self, utt_id: &str, audio: &AudioBuffer) -> Result<Transcript>;
}

pub trait MtAdapter: Send + Sync {
    fn name(&self) -> &str;
    fn translate(&self, utt_id: &str, source: &str) -> Result<String>;

    /// Next-token distribution given the target prefix; used by ensemble decoding.
    fn next_token_distribution(
        &self,
        utt_id: &str,
        source: &str,
        prefix: &[String],
    ) -> Result<TokenDistribution> {
        let _ = (utt_id, source, prefix);
        Err(Error::adapter(self.name(), "next-token distributions not supported"))
    }
}

pub trait TtsAdapter: Send + Sync {
    fn name(&self) -> &str;
    fn synthesize(
        &self,
        utt_id: &str,
        text: &str,
        speaker_ref: Option<&AudioBuffer>,
    ) -> Result<AudioBuffer>;
}

pub const EOS: &str = "</s>";

/// One-hot distribution that follows `target` token by token, then emits EOS.
fn teacher_forced(target: &str, prefix: &[String]) -> TokenDistribution {
    let next = target.split_whitespace().nth(prefix.len()).unwrap_or(EOS);
    TokenDistribution::one_hot(next)
}

/// ASR that looks the transcript up by utterance id.
pub struct TableAsr {
    name: String,
    table: HashMap<String, String>,
}

impl TableAsr {
    pub fn new(name: impl Into<String>, table: impl IntoIterator<Item = (String, String)>) -> Self {
        Self {
            name: name.into(),
            table: table.into_iter().collect(),
        }
    }

    /// Returns each entry's source text.
    pub fn oracle(manifest: &[ManifestEntry]) -> Self {
        Self::new(
            "oracle-asr",
            manifest
                .iter()
                .filter_map(|e| Some((e.utt_id.clone(), e.source_text.clone()?))),
        )
    }
}

impl AsrAdapter for TableAsr {
    fn name(&self) -> &str {
        &self.name
    }

    fn transcribe(&self, utt_id: &str, _audio: &AudioBuffer) -> Result<Transcript> {
        self.table
            .get(utt_id)
            .map(|t| Transcript::from_text(t))
            .ok_or_else(|| Error::adapter(&self.name, format!("no transcript for `{utt_id}`")))
    }
}

/// Wraps another ASR and replaces tokens at random with `noise<k>` tokens.
pub struct NoisyAsr {
    name: String,
    inner: Arc<dyn AsrAdapter>,
    rate: f64,
    seed: u64,
}

impl NoisyAsr {
    pub fn new(inner: Arc<dyn AsrAdapter>, rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Config(format!("corruption rate {rate} outside [0, 1]")));
        }
        Ok(Self {
            name: format!("noisy-asr-{seed}"),
            inner,
            rate,
            seed,
        })
    }
}

impl AsrAdapter for NoisyAsr {
    fn name(&self) -> &str {
        &self.name
    }

    fn transcribe(&self, utt_id: &str, audio: &AudioBuffer) -> Result<Transcript> {
        let mut t = self.inner.transcribe(utt_id, audio)?;
        let mut rng = rng_for(self.seed, utt_id);
        for tok in &mut t.tokens {
            if rng.gen::<f64>() < self.rate {
                *tok = format!("noise{}", rng.gen_range(0..1000));
            }
        }
        Ok(t)
    }
}

/// Deterministic TTS: a sequence of tones whose pitches encode a hash of the text.
pub struct MockToneTts {
    sample_rate: u32,
}

impl MockToneTts {
    const SEGMENTS: usize = 8;
    const SEGMENT_SECONDS: f64 = 0.05;

    pub fn new(sample_rate: u32) -> Self {
        Self { sample_rate }
    }

    pub fn render(text: &str, sample_rate: u32) -> AudioBuffer {
        let hash = fnv1a64(text.as_bytes());
        let seg = (Self::SEGMENT_SECONDS * sample_rate as f64).round() as usize;
        let mut samples = Vec::with_capacity(seg * Self::SEGMENTS);
        for i in 0..Self::SEGMENTS {
            let nibble = (hash >> (4 * i)) & 0xf;
            let freq = 200.0 + 100.0 * nibble as f64;
            let w = 2.0 * std::f64::consts::PI * freq / sample_rate as f64;
            samples.extend((0..seg).map(|n| 0.3 * (w * n as f64).sin()));
        }
        AudioBuffer::from_parts_unchecked(samples, sample_rate)
    }
}

impl TtsAdapter for MockToneTts {
    fn name(&self) -> &str {
        "mock-tone-tts"
    }

    fn synthesize(&self, _utt: &str, text: &str, _speaker_ref: Option<&AudioBuffer>) -> Result<AudioBuffer> {
        Ok(Self::render(text, self.sample_rate))
    }
}

/// ASR that inverts [`MockToneTts`] over a closed set of candidate texts.
pub struct InverseToneAsr {
    candidates: Vec<String>,
    cache: Mutex<HashMap<u32, Arc<HashMap<String, String>>>>,
}

impl InverseToneAsr {
    pub fn new(candidates: impl IntoIterator<Item = String>) -> Self {
        Self {
            candidates: candidates.into_iter().collect(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn table(&self, sample_rate: u32) -> Arc<HashMap<String, String>> {
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        cache
            .entry(sample_rate)
            .or_insert_with(|| {
                Arc::new(
                    self.candidates
                        .iter()
                        .map(|c| (audio_fingerprint(&MockToneTts::render(c, sample_rate)), c.clone()))
                        .collect(),
                )
            })
            .clone()
    }
}

impl AsrAdapter for InverseToneAsr {
    fn name(&self) -> &str {
        "tone-inverse-asr"
    }

    fn transcribe(&self, utt_id: &str, audio: &AudioBuffer) -> Result<Transcript> {
        self.table(audio.sample_rate())
            .get(&audio_fingerprint(audio))
            .map(|t| Transcript::from_text(t))
            .ok_or_else(|| Error::adapter(self.name(), format!("unrecognized audio for `{utt_id}`")))
    }
}

pub struct IdentityMt;

impl MtAdapter for IdentityMt {
    fn name(&self) -> &str {
        "identity-mt"
    }

    fn translate(&self, _utt: &str, source: &str) -> Result<String> {
        Ok(source.to_string())
    }

    fn next_token_distribution(&self, _utt: &str, source: &str, prefix: &[String]) -> Result<TokenDistribution> {
        Ok(teacher_forced(source, prefix))
    }
}

/// MT that looks translations up by source sentence.
pub struct TableMt {
    name: String,
    table: HashMap<String, String>,
}

impl TableMt {
    pub fn new(name: impl Into<String>, table: impl IntoIterator<Item = (String, String)>) -> Self {
        Self {
            name: name.into(),
            table: table.into_iter().collect(),
        }
    }

    fn lookup(&self, source: &str) -> Result<&str> {
        self.table
            .get(source)
            .map(String::as_str)
            .ok_or_else(|| Error::adapter(&self.name, format!("no translation for `{source}`")))
    }
}

impl MtAdapter for TableMt {
    fn name(&self) -> &str {
        &self.name
    }

    fn translate(&self, _utt: &str, source: &str) -> Result<String> {
        self.lookup(source).map(str::to_string)
    }

    fn next_token_distribution(&self, _utt: &str, source: &str, prefix: &[String]) -> Result<TokenDistribution> {
        Ok(teacher_forced(self.lookup(source)?, prefix))
    }
}

/// MT that returns each entry's reference target text.
pub struct OracleMt {
    by_utt: HashMap<String, String>,
}

impl OracleMt {
    pub fn new(manifest: &[ManifestEntry]) -> Self {
        Self {
            by_utt: manifest
                .iter()
                .filter_map(|e| Some((e.utt_id.clone(), e.target_text.clone()?)))
                .collect(),
        }
    }

    fn lookup(&self, utt_id: &str) -> Result<&str> {
        self.by_utt
            .get(utt_id)
            .map(String::as_str)
            .ok_or_else(|| Error::adapter("oracle-mt", format!("no target text for `{utt_id}`")))
    }
}

impl MtAdapter for OracleMt {
    fn name(&self) -> &str {
        "oracle-mt"
    }

    fn translate(&self, utt_id: &str, _source: &str) -> Result<String> {
        self.lookup(utt_id).map(str::to_string)
    }

    fn next_token_distribution(&self, utt_id: &str, _source: &str, prefix: &[String]) -> Result<TokenDistribution> {
        Ok(teacher_forced(self.lookup(utt_id)?, prefix))
    }
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Drop for Process {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// External model process speaking one JSON object per line.
///
/// Requests are `{"op", "utt", "payload"}`; responses are `{"utt", "result"}`
/// or `{"utt", "error"}`. Audio travels as WAV file paths. The process is
/// started on first use and restarted after it dies.
pub struct CommandAdapter {
    name: String,
    argv: Vec<String>,
    process: Mutex<Option<Process>>,
    scratch: tempfile::TempDir,
    counter: AtomicU64,
}

impl CommandAdapter {
    pub fn new(name: impl Into<String>, argv: Vec<String>) -> Result<Self> {
        if argv.is_empty() {
            return Err(Error::Config("command adapter needs a non-empty argv".into()));
        }
        let scratch = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
        Ok(Self {
            name: name.into(),
            argv,
            process: Mutex::new(None),
            scratch,
            counter: AtomicU64::new(0),
        })
    }

    fn spawn(&self) -> Result<Process> {
        let mut child = Command::new(&self.argv[0])
            .args(&self.argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::adapter(&self.name, format!("cannot start `{}`: {e}", self.argv[0])))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Process { child, stdin, stdout })
    }

    fn scratch_path(&self, utt_id: &str, tag: &str) -> PathBuf {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let safe: String = utt_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        self.scratch.path().join(format!("{n:08}-{safe}-{tag}.wav"))
    }

    /// Sends one request and waits for its response.
    pub fn call(&self, op: &str, utt_id: &str, payload: Value) -> Result<Value> {
        let mut guard = self.process.lock().unwrap_or_else(|e| e.into_inner());
        if guard.is_none() {
            *guard = Some(self.spawn()?);
        }
        let proc = guard.as_mut().expect("process started");
        let request = json!({"op": op, "utt": utt_id, "payload": payload});
        let mut line = String::new();
        let io = writeln!(proc.stdin, "{request}")
            .and_then(|_| proc.stdin.flush())
            .and_then(|_| proc.stdout.read_line(&mut line));
        match io {
            Ok(n) if n > 0 => {}
            Ok(_) => {
                *guard = None;
                return Err(Error::adapter(&self.name, "process closed its output"));
            }
            Err(e) => {
                *guard = None;
                return Err(Error::adapter(&self.name, format!("pipe error: {e}")));
            }
        }
        drop(guard);
        let mut response: Value = serde_json::from_str(line.trim())
            .map_err(|e| Error::adapter(&self.name, format!("malformed response: {e}")))?;
        if response.get("utt").and_then(Value::as_str) != Some(utt_id) {
            return Err(Error::adapter(&self.name, format!("response for wrong utterance: {line}")));
        }
        if let Some(err) = response.get("error") {
            let msg = err.as_str().map(str::to_string).unwrap_or_else(|| err.to_string());
            return Err(Error::adapter(&self.name, msg));
        }
        response
            .get_mut("result")
            .map(Value::take)
            .ok_or_else(|| Error::adapter(&self.name, "response has neither result nor error"))
    }

    fn with_wav<T>(&self, utt_id: &str, tag: &str, audio: Option<&AudioBuffer>, f: impl FnOnce(Option<&PathBuf>) -> Result<T>) -> Result<T> {
        let path = match audio {
            Some(a) => {
                let p = self.scratch_path(utt_id, tag);
                write_wav(a, &p, WavEncoding::Pcm16)?;
                Some(p)
            }
            None => None,
        };
        let out = f(path.as_ref());
        if let Some(p) = path {
            let _ = std::fs::remove_file(p);
        }
        out
    }
}

fn transcript_from_value(name: &str, v: Value) -> Result<Transcript> {
    match v {
        Value::String(s) => Ok(Transcript::from_text(&s)),
        Value::Object(_) => {
            let t: Transcript = serde_json::from_value(v)
                .map_err(|e| Error::adapter(name, format!("bad transcript: {e}")))?;
            if let Some(c) = &t.confidences {
                if c.len() != t.tokens.len() {
                    return Err(Error::adapter(name, "confidence count differs from token count"));
                }
            }
            Ok(t)
        }
        other => Err(Error::adapter(name, format!("unexpected ASR result {other}"))),
    }
}

impl AsrAdapter for CommandAdapter {
    fn name(&self) -> &str {
        &self.name
    }

    fn transcribe(&self, utt_id: &str, audio: &AudioBuffer) -> Result<Transcript> {
        let result = self.with_wav(utt_id, "in", Some(audio), |p| {
            self.call("asr", utt_id, json!({ "audio_path": p }))
        })?;
        transcript_from_value(&self.name, result)
    }
}

impl MtAdapter for CommandAdapter {
    fn name(&self) -> &str {
        &self.name
    }

    fn translate(&self, utt_id: &str, source: &str) -> Result<String> {
        match self.call("mt", utt_id, json!({ "text": source }))? {
            Value::String(s) => Ok(s),
            other => Err(Error::adapter(&self.name, format!("unexpected MT result {other}"))),
        }
    }

    fn next_token_distribution(&self, utt_id: &str, source: &str, prefix: &[String]) -> Result<TokenDistribution> {
        let result = self.call("mt", utt_id, json!({ "text": source, "prefix": prefix }))?;
        let probs: BTreeMap<String, f64> = serde_json::from_value(result)
            .map_err(|e| Error::adapter(&self.name, format!("bad distribution: {e}")))?;
        TokenDistribution::new(probs)
    }
}

impl TtsAdapter for CommandAdapter {
    fn name(&self) -> &str {
        &self.name
    }

    fn synthesize(&self, utt_id: &str, text: &str, speaker_ref: Option<&AudioBuffer>) -> Result<AudioBuffer> {
        let out = self.scratch_path(utt_id, "out");
        let result = self.with_wav(utt_id, "ref", speaker_ref, |p| {
            self.call(
                "tts",
                utt_id,
                json!({ "text": text, "speaker_ref": p, "out_path": out }),
            )
        })?;
        let path = match result {
            Value::String(s) => PathBuf::from(s),
            Value::Null => out.clone(),
            other => return Err(Error::adapter(&self.name, format!("unexpected TTS result {other}"))),
        };
        let audio = read_wav(&path);
        let _ = std::fs::remove_file(&out);
        audio
    }
}

/// Serializes every call to the wrapped adapter.
pub struct Serial<A: ?Sized> {
    inner: Arc<A>,
    lock: Mutex<()>,
}

impl<A: ?Sized> Serial<A> {
    pub fn new(inner: Arc<A>) -> Self {
        Self {
            inner,
            lock: Mutex::new(()),
        }
    }

    fn guard(&self) -> std::sync::MutexGuard<'_, ()> {
        self.lock.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl AsrAdapter for Serial<dyn AsrAdapter> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn transcribe(&self, utt_id: &str, audio: &AudioBuffer) -> Result<Transcript> {
        let _g = self.guard();
        self.inner.transcribe(utt_id, audio)
    }
}

impl MtAdapter for Serial<dyn MtAdapter> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn translate(&self, utt_id: &str, source: &str) -> Result<String> {
        let _g = self.guard();
        self.inner.translate(utt_id, source)
    }

    fn next_token_distribution(&self, utt_id: &str, source: &str, prefix: &[String]) -> Result<TokenDistribution> {
        let _g = self.guard();
        self.inner.next_token_distribution(utt_id, source, prefix)
    }
}

impl TtsAdapter for Serial<dyn TtsAdapter> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn synthesize(&self, utt_id: &str, text: &str, speaker_ref: Option<&AudioBuffer>) -> Result<AudioBuffer> {
        let _g = self.guard();
        self.inner.synthesize(utt_id, text, speaker_ref)
    }
}

/// Declarative adapter description as it appears in pipeline configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterSpec {
    #[serde(flatten)]
    pub kind: AdapterKind,
    #[serde(default)]
    pub serial: bool,
}

impl AdapterSpec {
    pub fn new(kind: AdapterKind) -> Self {
        Self { kind, serial: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdapterKind {
    /// ASR: the entry's source text. MT: the entry's target text.
    Oracle,
    /// MT only: returns the source unchanged.
    Identity,
    /// ASR: keyed by utterance id. MT: keyed by source sentence.
    Table { table: BTreeMap<String, String> },
    /// ASR only: oracle transcripts with random token corruption.
    Noisy { rate: f64, seed: u64 },
    /// ASR only: inverts `mock_tone` over the manifest's target texts.
    ToneInverse,
    /// TTS only: hash-keyed tone sequences.
    MockTone,
    /// External JSON-lines process.
    Command {
        argv: Vec<String>,
        #[serde(default)]
        name: Option<String>,
    },
}

impl AdapterKind {
    fn label(&self) -> &'static str {
        match self {
            AdapterKind::Oracle => "oracle",
            AdapterKind::Identity => "identity",
            AdapterKind::Table { .. } => "table",
            AdapterKind::Noisy { .. } => "noisy",
            AdapterKind::ToneInverse => "tone_inverse",
            AdapterKind::MockTone => "mock_tone",
            AdapterKind::Command { .. } => "command",
        }
    }
}

/// What adapters may draw on when they are built.
#[derive(Debug, Clone, Copy)]
pub struct ResolveContext<'a> {
    pub manifest: &'a [ManifestEntry],
    pub sample_rate: u32,
}

fn command(argv: &[String], name: &Option<String>) -> Result<Arc<CommandAdapter>> {
    let name = name.clone().unwrap_or_else(|| argv.first().cloned().unwrap_or_default());
    Ok(Arc::new(CommandAdapter::new(name, argv.to_vec())?))
}

fn unsupported(stage: &str, kind: &AdapterKind) -> Error {
    Error::Config(format!("adapter kind `{}` cannot serve the {stage} stage", kind.label()))
}

pub fn resolve_asr(spec: &AdapterSpec, ctx: ResolveContext<'_>) -> Result<Arc<dyn AsrAdapter>> {
    let adapter: Arc<dyn AsrAdapter> = match &spec.kind {
        AdapterKind::Oracle => Arc::new(TableAsr::oracle(ctx.manifest)),
        AdapterKind::Table { table } => Arc::new(TableAsr::new("table-asr", table.clone())),
        AdapterKind::Noisy { rate, seed } => {
            Arc::new(NoisyAsr::new(Arc::new(TableAsr::oracle(ctx.manifest)), *rate, *seed)?)
        }
        AdapterKind::ToneInverse => Arc::new(InverseToneAsr::new(
            ctx.manifest.iter().filter_map(|e| e.target_text.clone()),
        )),
        AdapterKind::Command { argv, name } => command(argv, name)?,
        other => return Err(unsupported("ASR", other)),
    };
    Ok(if spec.serial { Arc::new(Serial::new(adapter)) } else { adapter })
}

pub fn resolve_mt(spec: &AdapterSpec, ctx: ResolveContext<'_>) -> Result<Arc<dyn MtAdapter>> {
    let adapter: Arc<dyn MtAdapter> = match &spec.kind {
        AdapterKind::Oracle => Arc::new(OracleMt::new(ctx.manifest)),
        AdapterKind::Identity => Arc::new(IdentityMt),
        AdapterKind::Table { table } => Arc::new(TableMt::new("table-mt", table.clone())),
        AdapterKind::Command { argv, name } => command(argv, name)?,
        other => return Err(unsupported("MT", other)),
    };
    Ok(if spec.serial { Arc::new(Serial::new(adapter)) } else { adapter })
}

pub fn resolve_tts(spec: &AdapterSpec, ctx: ResolveContext<'_>) -> Result<Arc<dyn TtsAdapter>> {
    let adapter: Arc<dyn TtsAdapter> = match &spec.kind {
        AdapterKind::MockTone => Arc::new(MockToneTts::new(ctx.sample_rate)),
        AdapterKind::Command { argv, name } => command(argv, name)?,
        other => return Err(unsupported("TTS", other)),
    };
    Ok(if spec.serial { Arc::new(Serial::new(adapter)) } else { adapter })
}
