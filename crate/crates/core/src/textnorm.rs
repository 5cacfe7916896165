//! Rule-based transcript post-processing, conversion of written text into
//! ASR transcription format, and tokenizers for the error-rate metrics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillerEntry {
    /// Lowercased tokens of the filler expression.
    pub tokens: Vec<String>,
    /// Only remove the expression at the start of a sentence.
    #[serde(default)]
    pub sentence_initial_only: bool,
}

/// Filler expressions matched whole-token, case-insensitively, longest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillerLexicon {
    entries: Vec<FillerEntry>,
}

impl Default for FillerLexicon {
    fn default() -> Self {
        Self::parse("uh\num\nyou know\ni mean\n^like\n").expect("built-in lexicon is valid")
    }
}

impl FillerLexicon {
    pub fn new(mut entries: Vec<FillerEntry>) -> Result<Self> {
        for e in &mut entries {
            if e.tokens.is_empty() || e.tokens.iter().any(|t| t.is_empty()) {
                return Err(Error::Config("filler entries must be non-empty token sequences".into()));
            }
            e.tokens.iter_mut().for_each(|t| *t = t.to_lowercase());
        }
        // longest match wins
        entries.sort_by(|a, b| b.tokens.len().cmp(&a.tokens.len()));
        Ok(Self { entries })
    }

    /// Just `uh` and `you know`.
    pub fn minimal() -> Self {
        Self::parse("uh\nyou know\n").expect("valid")
    }

    /// One expression per line; `#` starts a comment; a leading `^` restricts
    /// the entry to sentence-initial position.
    pub fn parse(text: &str) -> Result<Self> {
        let entries = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(|l| {
                let (initial, rest) = match l.strip_prefix('^') {
                    Some(r) => (true, r),
                    None => (false, l),
                };
                FillerEntry {
                    tokens: rest.split_whitespace().map(str::to_string).collect(),
                    sentence_initial_only: initial,
                }
            })
            .collect();
        Self::new(entries)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn entries(&self) -> &[FillerEntry] {
        &self.entries
    }
}

fn strip_edge_punct(token: &str) -> &str {
    token.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'')
}

fn ends_sentence(token: &str) -> bool {
    token.ends_with(['.', '?', '!', '。', '？', '！'])
}

fn remove_fillers_once(tokens: &[&str], lexicon: &FillerLexicon) -> Vec<usize> {
    let keys: Vec<String> = tokens.iter().map(|t| strip_edge_punct(t).to_lowercase()).collect();
    let mut keep = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        let at_start = i == 0 || ends_sentence(tokens[i - 1]);
        let hit = lexicon.entries.iter().find(|e| {
            (!e.sentence_initial_only || at_start)
                && i + e.tokens.len() <= tokens.len()
                && e.tokens.iter().zip(&keys[i..]).all(|(a, b)| a == b)
        });
        match hit {
            Some(e) => i += e.tokens.len(),
            None => {
                keep.push(i);
                i += 1;
            }
        }
    }
    keep
}

/// Removes lexicon expressions from `text` and re-collapses whitespace.
///
/// Matching repeats until nothing changes, so the result is idempotent. The
/// rule is purely lexical: "You know him" loses its first two words.
pub fn remove_fillers(text: &str, lexicon: &FillerLexicon) -> String {
    let mut tokens: Vec<&str> = text.split_whitespace().collect();
    loop {
        let keep = remove_fillers_once(&tokens, lexicon);
        if keep.len() == tokens.len() {
            break;
        }
        tokens = keep.into_iter().map(|i| tokens[i]).collect();
    }
    tokens.join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptProfile {
    LatinWords,
    CjkChars,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedText {
    pub text: String,
    pub script_profile: ScriptProfile,
}

/// What to do with standalone integers when converting to transcription format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NumeralPolicy {
    /// Spell out 0..=9999 in English words, keep larger numbers as digits.
    #[default]
    SpellOut,
    /// Drop standalone integers entirely.
    Remove,
}

const ONES: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen",
];
const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

/// English words for `n` in `0..=9999`.
pub fn number_to_words(n: u32) -> Option<String> {
    if n > 9999 {
        return None;
    }
    let mut words: Vec<&str> = Vec::new();
    let thousands = n / 1000;
    let hundreds = (n / 100) % 10;
    let rest = n % 100;
    if thousands > 0 {
        words.extend([ONES[thousands as usize], "thousand"]);
    }
    if hundreds > 0 {
        words.extend([ONES[hundreds as usize], "hundred"]);
    }
    if rest >= 20 {
        words.push(TENS[(rest / 10) as usize]);
        if rest % 10 > 0 {
            words.push(ONES[(rest % 10) as usize]);
        }
    } else if rest > 0 || words.is_empty() {
        words.push(ONES[rest as usize]);
    }
    Some(words.join(" "))
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF | 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xAC00..=0xD7AF
        | 0xF900..=0xFAFF | 0x20000..=0x2FA1F)
}

fn script_profile(text: &str) -> ScriptProfile {
    let (mut cjk, mut other) = (false, false);
    for c in text.chars().filter(|c| c.is_alphanumeric()) {
        if is_cjk(c) {
            cjk = true;
        } else {
            other = true;
        }
    }
    match (cjk, other) {
        (true, false) => ScriptProfile::CjkChars,
        (true, true) => ScriptProfile::Mixed,
        _ => ScriptProfile::LatinWords,
    }
}

/// Lowercases, strips punctuation (keeping apostrophes inside words), spells
/// out standalone integers up to 9999, and collapses whitespace.
pub fn to_asr_format(text: &str) -> NormalizedText {
    to_asr_format_with(text, NumeralPolicy::SpellOut)
}

pub fn to_asr_format_with(text: &str, numerals: NumeralPolicy) -> NormalizedText {
    let chars: Vec<char> = text
        .to_lowercase()
        .chars()
        .map(|c| if c == '\u{2019}' { '\'' } else { c })
        .collect();
    let mut cleaned = String::with_capacity(chars.len());
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            cleaned.push(c);
        } else if c == '\''
            && i > 0
            && chars[i - 1].is_alphanumeric()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            cleaned.push(c);
        } else {
            cleaned.push(' ');
        }
    }
    let mut out: Vec<String> = Vec::new();
    for tok in cleaned.split_whitespace() {
        if tok.chars().all(|c| c.is_ascii_digit()) {
            match (numerals, tok.parse::<u32>().ok().and_then(number_to_words)) {
                (NumeralPolicy::SpellOut, Some(w)) => out.push(w),
                (NumeralPolicy::SpellOut, None) => out.push(tok.to_string()),
                (NumeralPolicy::Remove, _) => {}
            }
        } else {
            out.push(tok.to_string());
        }
    }
    let text = out.join(" ");
    NormalizedText {
        script_profile: script_profile(&text),
        text,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenMode {
    Words,
    Chars,
}

pub fn tokenize(text: &str, mode: TokenMode) -> Vec<String> {
    match mode {
        TokenMode::Words => text.split_whitespace().map(str::to_string).collect(),
        TokenMode::Chars => text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| c.to_string())
            .collect(),
    }
}

/// Full-width and ideographic punctuation dropped before character scoring.
pub fn is_cjk_punctuation(c: char) -> bool {
    matches!(c as u32, 0x3000..=0x303F | 0xFF00..=0xFF0F | 0xFF1A..=0xFF20 | 0xFF3B..=0xFF40 | 0xFF5B..=0xFF65)
        || "“”‘’…—·".contains(c)
}

/// Removes whitespace and CJK punctuation; no case folding.
pub fn strip_for_cer(text: &str) -> String {
    text.chars()
        .filter(|c| !c.is_whitespace() && !is_cjk_punctuation(*c))
        .collect()
}
