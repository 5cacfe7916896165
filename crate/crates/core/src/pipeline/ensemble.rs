//! Model ensembling by averaging next-token distributions.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adapters::MtAdapter;
use crate::error::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-9;

/// Probability mass over target tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenDistribution {
    probabilities: BTreeMap<String, f64>,
}

impl TokenDistribution {
    pub fn new(probabilities: BTreeMap<String, f64>) -> Result<Self> {
        if probabilities.values().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Argument("probabilities must be finite and non-negative".into()));
        }
        let sum: f64 = probabilities.values().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Argument(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self { probabilities })
    }

    /// Normalizes non-negative weights onto the simplex.
    pub fn from_weights<I, S>(weights: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut map = BTreeMap::new();
        for (k, w) in weights {
            *map.entry(k.into()).or_insert(0.0) += w;
        }
        let sum: f64 = map.values().sum();
        if !(sum > 0.0) || map.values().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::Argument("weights must be non-negative with a positive sum".into()));
        }
        map.values_mut().for_each(|w| *w /= sum);
        Ok(Self { probabilities: map })
    }

    pub fn one_hot(token: impl Into<String>) -> Self {
        Self {
            probabilities: BTreeMap::from([(token.into(), 1.0)]),
        }
    }

    pub fn get(&self, token: &str) -> f64 {
        self.probabilities.get(token).copied().unwrap_or(0.0)
    }

    pub fn probabilities(&self) -> &BTreeMap<String, f64> {
        &self.probabilities
    }

    pub fn total(&self) -> f64 {
        self.probabilities.values().sum()
    }

    /// Most probable token; ties go to the lexicographically smallest.
    pub fn argmax(&self) -> Option<&str> {
        self.probabilities
            .iter()
            .fold(None::<(&String, f64)>, |best, (k, p)| match best {
                Some((_, bp)) if bp >= *p => best,
                _ => Some((k, *p)),
            })
            .map(|(k, _)| k.as_str())
    }
}

/// Arithmetic mean over the union of supports.
pub fn ensemble_distributions(dists: &[TokenDistribution]) -> Result<TokenDistribution> {
    if dists.is_empty() {
        return Err(Error::Argument("ensemble needs at least one distribution".into()));
    }
    let k = dists.len() as f64;
    let mut mean = BTreeMap::new();
    for d in dists {
        for (tok, p) in &d.probabilities {
            *mean.entry(tok.clone()).or_insert(0.0) += p / k;
        }
    }
    // re-project to absorb rounding
    let sum: f64 = mean.values().sum();
    mean.values_mut().for_each(|p| *p /= sum);
    Ok(TokenDistribution { probabilities: mean })
}

/// Normalized geometric mean; tokens missing from any member get zero mass.
pub fn ensemble_distributions_log(dists: &[TokenDistribution]) -> Result<TokenDistribution> {
    if dists.is_empty() {
        return Err(Error::Argument("ensemble needs at least one distribution".into()));
    }
    let k = dists.len() as f64;
    let weights = dists[0].probabilities.keys().filter_map(|tok| {
        let log_sum: f64 = dists.iter().map(|d| d.get(tok).ln()).sum();
        log_sum.is_finite().then(|| (tok.clone(), (log_sum / k).exp()))
    });
    TokenDistribution::from_weights(weights.collect::<Vec<_>>())
        .map_err(|_| Error::Argument("ensemble members share no token with positive mass".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleSpace {
    #[default]
    Probability,
    LogProbability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeOptions {
    pub max_len: usize,
    pub eos: String,
    pub joiner: String,
    pub space: EnsembleSpace,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            max_len: 256,
            eos: "</s>".into(),
            joiner: " ".into(),
            space: EnsembleSpace::Probability,
        }
    }
}

/// Greedy decoding over the averaged next-token distributions of `models`.
pub fn greedy_ensemble_decode(
    models: &[Arc<dyn MtAdapter>],
    utt_id: &str,
    source: &str,
    opts: &DecodeOptions,
) -> Result<String> {
    if models.is_empty() {
        return Err(Error::Argument("ensemble decoding needs at least one model".into()));
    }
    let mut prefix: Vec<String> = Vec::new();
    while prefix.len() < opts.max_len {
        let dists = models
            .iter()
            .map(|m| m.next_token_distribution(utt_id, source, &prefix))
            .collect::<Result<Vec<_>>>()?;
        let merged = match opts.space {
            EnsembleSpace::Probability => ensemble_distributions(&dists)?,
            EnsembleSpace::LogProbability => ensemble_distributions_log(&dists)?,
        };
        match merged.argmax() {
            Some(tok) if tok != opts.eos => prefix.push(tok.to_string()),
            _ => break,
        }
    }
    Ok(prefix.join(&opts.joiner))
}
