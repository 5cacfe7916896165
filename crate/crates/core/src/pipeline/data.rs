//! Corpus plumbing: k-fold splits and back-translation pairs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adapters::MtAdapter;
use crate::error::{Error, Result};
use crate::manifest::ManifestEntry;

/// Seeded shuffle followed by round-robin assignment into `k` folds.
pub fn kfold_split<T: Clone>(items: &[T], k: usize, seed: u64) -> Result<Vec<Vec<T>>> {
    if k < 2 {
        return Err(Error::Argument(format!("k must be at least 2, got {k}")));
    }
    if k > items.len() {
        return Err(Error::Argument(format!("k = {k} exceeds {} items", items.len())));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::with_capacity(items.len() / k + 1); k];
    for (pos, idx) in order.into_iter().enumerate() {
        folds[pos % k].push(items[idx].clone());
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackTranslation {
    pub entries: Vec<ManifestEntry>,
    pub failures: usize,
}

/// Synthesizes a source sentence for each monolingual target sentence.
/// Entries are tagged `synthetic=true`; adapter failures skip the sentence.
pub fn back_translation_pair(mono_target: &[String], reverse_mt: &dyn MtAdapter) -> BackTranslation {
    let mut entries = Vec::with_capacity(mono_target.len());
    let mut failures = 0;
    for (i, target) in mono_target.iter().enumerate() {
        let utt = format!("bt-{i:06}");
        match reverse_mt.translate(&utt, target) {
            Ok(source) => {
                let mut e = ManifestEntry::new(utt).with_source(source).with_target(target.clone());
                e.extras.insert("synthetic".into(), "true".into());
                entries.push(e);
            }
            Err(err) => {
                log::warn!("back-translation of sentence {i} failed: {err}");
                failures += 1;
            }
        }
    }
    if failures > 0 {
        log::warn!("back-translation skipped {failures} of {} sentences", mono_target.len());
    }
    BackTranslation { entries, failures }
}
