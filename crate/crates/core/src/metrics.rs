//! WER, CER, corpus BLEU and the ASR-BLEU harness.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapters::AsrAdapter;
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::textnorm::{strip_for_cer, to_asr_format, tokenize, TokenMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AlignmentStats {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub correct: usize,
    pub ref_len: usize,
}

impl AlignmentStats {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// `(S + D + I) / N`; undefined for an empty reference.
    pub fn error_rate(&self) -> Result<f64> {
        if self.ref_len == 0 {
            return Err(Error::Argument("reference is empty".into()));
        }
        Ok(self.errors() as f64 / self.ref_len as f64)
    }
}

impl std::ops::Add for AlignmentStats {
    type Output = AlignmentStats;

    fn add(self, o: AlignmentStats) -> AlignmentStats {
        AlignmentStats {
            substitutions: self.substitutions + o.substitutions,
            deletions: self.deletions + o.deletions,
            insertions: self.insertions + o.insertions,
            correct: self.correct + o.correct,
            ref_len: self.ref_len + o.ref_len,
        }
    }
}

/// Unit-cost Levenshtein alignment. Equal-cost paths are resolved preferring
/// correct, then substitution, then deletion, then insertion.
pub fn align_tokens<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> AlignmentStats {
    let (n, m) = (reference.len(), hypothesis.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[i - 1][j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let mut stats = AlignmentStats {
        ref_len: n,
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let same = i > 0 && j > 0 && reference[i - 1] == hypothesis[j - 1];
        if same && d[i][j] == d[i - 1][j - 1] {
            stats.correct += 1;
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && !same && d[i][j] == d[i - 1][j - 1] + 1 {
            stats.substitutions += 1;
            i -= 1;
            j -= 1;
        } else if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            stats.deletions += 1;
            i -= 1;
        } else {
            stats.insertions += 1;
            j -= 1;
        }
    }
    stats
}

/// Word error rate after converting both sides to transcription format.
pub fn wer(reference: &str, hypothesis: &str) -> Result<f64> {
    wer_with(reference, hypothesis, true)
}

pub fn wer_with(reference: &str, hypothesis: &str, normalize: bool) -> Result<f64> {
    word_alignment(reference, hypothesis, normalize).error_rate()
}

/// Word-level edit counts, for pooling over a corpus.
pub fn word_alignment(reference: &str, hypothesis: &str, normalize: bool) -> AlignmentStats {
    let (r, h) = if normalize {
        (to_asr_format(reference).text, to_asr_format(hypothesis).text)
    } else {
        (reference.to_string(), hypothesis.to_string())
    };
    let r = tokenize(&r, TokenMode::Words);
    let h = tokenize(&h, TokenMode::Words);
    align_tokens(&r, &h)
}

/// Character error rate over non-whitespace characters with CJK punctuation removed.
pub fn cer(reference: &str, hypothesis: &str) -> Result<f64> {
    char_alignment(reference, hypothesis).error_rate()
}

/// Character-level edit counts, for pooling over a corpus.
pub fn char_alignment(reference: &str, hypothesis: &str) -> AlignmentStats {
    let r = tokenize(&strip_for_cer(reference), TokenMode::Chars);
    let h = tokenize(&strip_for_cer(hypothesis), TokenMode::Chars);
    align_tokens(&r, &h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "k")]
pub enum Smoothing {
    #[default]
    None,
    /// `(matches + k) / (total + k)` for every order.
    AddK(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    pub score: f64,
    /// Clipped n-gram precisions for orders 1..=max_n (0 where the corpus has no n-grams of that order).
    pub precisions: Vec<f64>,
    /// Number of leading orders with at least one hypothesis n-gram; only these enter the mean.
    pub effective_order: usize,
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(|t| t.as_ref()).collect()).or_insert(0) += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, Default)]
struct SentenceStats {
    matches: Vec<usize>,
    totals: Vec<usize>,
    hyp_len: usize,
    ref_len: usize,
}

fn sentence_stats<T: AsRef<str>>(reference: &[T], hypothesis: &[T], max_n: usize) -> SentenceStats {
    let mut s = SentenceStats {
        matches: vec![0; max_n],
        totals: vec![0; max_n],
        hyp_len: hypothesis.len(),
        ref_len: reference.len(),
    };
    for n in 1..=max_n {
        let hyp = ngram_counts(hypothesis, n);
        let refc = ngram_counts(reference, n);
        s.totals[n - 1] = hypothesis.len().saturating_sub(n - 1);
        s.matches[n - 1] = hyp
            .iter()
            .map(|(g, c)| (*c).min(refc.get(g).copied().unwrap_or(0)))
            .sum();
    }
    s
}

/// Single-reference corpus BLEU on a 0..100 scale.
pub fn corpus_bleu<T: AsRef<str> + Sync>(
    refs: &[Vec<T>],
    hyps: &[Vec<T>],
    max_n: usize,
    smoothing: Smoothing,
) -> Result<BleuScore> {
    if refs.len() != hyps.len() {
        return Err(Error::Argument(format!(
            "{} references for {} hypotheses",
            refs.len(),
            hyps.len()
        )));
    }
    if refs.is_empty() || max_n == 0 {
        return Err(Error::Argument("BLEU needs a non-empty corpus and max_n >= 1".into()));
    }
    let per_sentence: Vec<SentenceStats> = refs
        .par_iter()
        .zip(hyps.par_iter())
        .map(|(r, h)| sentence_stats(r, h, max_n))
        .collect();
    let mut total = SentenceStats {
        matches: vec![0; max_n],
        totals: vec![0; max_n],
        ..Default::default()
    };
    for s in &per_sentence {
        for n in 0..max_n {
            total.matches[n] += s.matches[n];
            total.totals[n] += s.totals[n];
        }
        total.hyp_len += s.hyp_len;
        total.ref_len += s.ref_len;
    }
    // orders with no hypothesis n-grams at all are left out of the mean
    let effective_order = total.totals.iter().take_while(|t| **t > 0).count();
    let precisions: Vec<f64> = (0..max_n)
        .map(|n| {
            let (m, t) = (total.matches[n] as f64, total.totals[n] as f64);
            match smoothing {
                _ if t == 0.0 => 0.0,
                Smoothing::None => m / t,
                Smoothing::AddK(k) => (m + k) / (t + k),
            }
        })
        .collect();
    let brevity_penalty = if total.hyp_len == 0 {
        0.0
    } else if total.hyp_len >= total.ref_len {
        1.0
    } else {
        (1.0 - total.ref_len as f64 / total.hyp_len as f64).exp()
    };
    let used = &precisions[..effective_order];
    let score = if used.is_empty() || used.iter().any(|p| *p <= 0.0) {
        0.0
    } else {
        let log_mean = used.iter().map(|p| p.ln()).sum::<f64>() / effective_order as f64;
        100.0 * brevity_penalty * log_mean.exp()
    };
    Ok(BleuScore {
        score,
        precisions,
        effective_order,
        brevity_penalty,
        hyp_len: total.hyp_len,
        ref_len: total.ref_len,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsrBleuReport {
    pub bleu: BleuScore,
    pub hypotheses: Vec<String>,
    pub failures: usize,
}

/// Transcribes each synthesized utterance and scores the transcripts with
/// corpus BLEU. Failed transcriptions count as empty hypotheses.
pub fn asr_bleu(
    asr: &dyn AsrAdapter,
    utt_ids: &[String],
    audio_outputs: &[AudioBuffer],
    refs: &[Vec<String>],
    mode: TokenMode,
) -> Result<AsrBleuReport> {
    if audio_outputs.len() != refs.len() || utt_ids.len() != refs.len() {
        return Err(Error::Argument(format!(
            "{} utterances, {} audio outputs, {} references",
            utt_ids.len(),
            audio_outputs.len(),
            refs.len()
        )));
    }
    let transcripts: Vec<Option<String>> = utt_ids
        .par_iter()
        .zip(audio_outputs.par_iter())
        .map(|(utt, audio)| match asr.transcribe(utt, audio) {
            Ok(t) => Some(t.text()),
            Err(e) => {
                log::warn!("ASR-BLEU transcription of {utt} failed: {e}");
                None
            }
        })
        .collect();
    let failures = transcripts.iter().filter(|t| t.is_none()).count();
    let hypotheses: Vec<String> = transcripts.into_iter().map(Option::unwrap_or_default).collect();
    let hyp_tokens: Vec<Vec<String>> = hypotheses.iter().map(|h| tokenize(h, mode)).collect();
    let bleu = corpus_bleu(refs, &hyp_tokens, 4, Smoothing::None)?;
    Ok(AsrBleuReport {
        bleu,
        hypotheses,
        failures,
    })
}
