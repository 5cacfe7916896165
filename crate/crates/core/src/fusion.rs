//! ROVER hypothesis combination.
//!
//! Hypotheses are folded one at a time into a word transition network (WTN)
//! by minimum edit-cost alignment against its slots, then each slot votes.
//! The first hypothesis seeds the network, so when the alignment has ties the
//! order of the inputs can change the result.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One recognizer output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<String>,
    pub confidences: Vec<f64>,
    pub system_id: usize,
}

impl Hypothesis {
    /// Missing confidences default to 1.0 per token.
    pub fn new(tokens: Vec<String>, confidences: Option<Vec<f64>>, system_id: usize) -> Result<Self> {
        let confidences = confidences.unwrap_or_else(|| vec![1.0; tokens.len()]);
        if confidences.len() != tokens.len() {
            return Err(Error::Argument(format!(
                "{} confidences for {} tokens",
                confidences.len(),
                tokens.len()
            )));
        }
        if confidences.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::Argument("confidences must lie in [0, 1]".into()));
        }
        Ok(Self {
            tokens,
            confidences,
            system_id,
        })
    }

    pub fn from_text(text: &str, system_id: usize) -> Self {
        let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        let confidences = vec![1.0; tokens.len()];
        Self {
            tokens,
            confidences,
            system_id,
        }
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// One competing entry of a slot. `word == None` is the NULL arc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WtnArc {
    pub word: Option<String>,
    pub confidence_sum: f64,
    pub count: usize,
    pub systems: Vec<usize>,
}

impl WtnArc {
    fn key(&self) -> Option<String> {
        self.word.as_deref().map(str::to_lowercase)
    }

    pub fn is_null(&self) -> bool {
        self.word.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Slot {
    pub arcs: Vec<WtnArc>,
}

impl Slot {
    fn contains_word(&self, key: &str) -> bool {
        self.arcs.iter().any(|a| a.key().as_deref() == Some(key))
    }

    fn add(&mut self, word: Option<&str>, confidence: f64, system: usize) {
        let key = word.map(str::to_lowercase);
        match self.arcs.iter_mut().find(|a| a.key() == key) {
            Some(arc) => {
                arc.count += 1;
                arc.confidence_sum += confidence;
                arc.systems.push(system);
            }
            None => self.arcs.push(WtnArc {
                word: word.map(str::to_string),
                confidence_sum: confidence,
                count: 1,
                systems: vec![system],
            }),
        }
    }

    pub fn total_count(&self) -> usize {
        self.arcs.iter().map(|a| a.count).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WordTransitionNetwork {
    pub slots: Vec<Slot>,
    pub n_systems: usize,
    systems: Vec<usize>,
}

/// Edit operation aligning a hypothesis against the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AlignOp {
    /// Slot already holds the token.
    Match,
    /// Token goes into a slot that lacks it.
    Substitute,
    /// Slot receives a NULL arc from this hypothesis.
    Delete,
    /// Token opens a new slot; earlier systems get NULL there.
    Insert,
}

impl AlignOp {
    pub fn cost(self) -> usize {
        match self {
            AlignOp::Match => 0,
            _ => 1,
        }
    }
}

impl WordTransitionNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn system_ids(&self) -> &[usize] {
        &self.systems
    }

    /// Minimum-cost alignment of `tokens` against the slots, in forward order.
    ///
    /// Among equal-cost paths the traceback prefers match, then substitution,
    /// then deletion, then insertion, at each step from the end.
    pub fn alignment(&self, tokens: &[String]) -> (usize, Vec<AlignOp>) {
        let (ns, nt) = (self.slots.len(), tokens.len());
        let keys: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
        let hit = |i: usize, j: usize| self.slots[i].contains_word(&keys[j]);
        let mut cost = vec![vec![0usize; nt + 1]; ns + 1];
        for (i, row) in cost.iter_mut().enumerate() {
            row[0] = i;
        }
        for j in 0..=nt {
            cost[0][j] = j;
        }
        for i in 1..=ns {
            for j in 1..=nt {
                let diag = cost[i - 1][j - 1] + usize::from(!hit(i - 1, j - 1));
                cost[i][j] = diag.min(cost[i - 1][j] + 1).min(cost[i][j - 1] + 1);
            }
        }
        let mut ops = Vec::with_capacity(ns + nt);
        let (mut i, mut j) = (ns, nt);
        while i > 0 || j > 0 {
            let c = cost[i][j];
            let op = if i > 0 && j > 0 && hit(i - 1, j - 1) && c == cost[i - 1][j - 1] {
                AlignOp::Match
            } else if i > 0 && j > 0 && !hit(i - 1, j - 1) && c == cost[i - 1][j - 1] + 1 {
                AlignOp::Substitute
            } else if i > 0 && c == cost[i - 1][j] + 1 {
                AlignOp::Delete
            } else {
                AlignOp::Insert
            };
            match op {
                AlignOp::Match | AlignOp::Substitute => {
                    i -= 1;
                    j -= 1;
                }
                AlignOp::Delete => i -= 1,
                AlignOp::Insert => j -= 1,
            }
            ops.push(op);
        }
        ops.reverse();
        (cost[ns][nt], ops)
    }

    /// Applies an alignment produced for `hyp` (see [`Self::alignment`]).
    pub fn apply(&mut self, hyp: &Hypothesis, ops: &[AlignOp]) {
        let prior_systems = self.systems.clone();
        let mut slots = Vec::with_capacity(self.slots.len() + hyp.tokens.len());
        let mut old = std::mem::take(&mut self.slots).into_iter();
        let mut tok = hyp.tokens.iter().zip(&hyp.confidences);
        for op in ops {
            match op {
                AlignOp::Match | AlignOp::Substitute => {
                    let mut slot = old.next().expect("alignment longer than network");
                    let (w, c) = tok.next().expect("alignment longer than hypothesis");
                    slot.add(Some(w), *c, hyp.system_id);
                    slots.push(slot);
                }
                AlignOp::Delete => {
                    let mut slot = old.next().expect("alignment longer than network");
                    slot.add(None, 0.0, hyp.system_id);
                    slots.push(slot);
                }
                AlignOp::Insert => {
                    let (w, c) = tok.next().expect("alignment longer than hypothesis");
                    let mut slot = Slot::default();
                    if !prior_systems.is_empty() {
                        slot.arcs.push(WtnArc {
                            word: None,
                            confidence_sum: 0.0,
                            count: prior_systems.len(),
                            systems: prior_systems.clone(),
                        });
                    }
                    slot.add(Some(w), *c, hyp.system_id);
                    slots.push(slot);
                }
            }
        }
        debug_assert!(old.next().is_none() && tok.next().is_none());
        self.slots = slots;
        self.systems.push(hyp.system_id);
        self.n_systems += 1;
    }
}

/// Folds `hyp` into the network by minimum-cost alignment.
pub fn align_into_wtn(mut wtn: WordTransitionNetwork, hyp: &Hypothesis) -> WordTransitionNetwork {
    let (_, ops) = wtn.alignment(&hyp.tokens);
    wtn.apply(hyp, &ops);
    wtn
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    PreferWord,
    PreferNull,
    LowestSystem,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VoteConfig {
    /// Weight of word frequency against mean confidence; 1.0 is plain majority voting.
    pub alpha: f64,
    /// Confidence assigned to NULL arcs.
    pub null_confidence: f64,
    pub tie_break: TieBreak,
}

impl Default for VoteConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            null_confidence: 0.0,
            tie_break: TieBreak::PreferWord,
        }
    }
}

impl VoteConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.null_confidence) {
            return Err(Error::Config("alpha and null_confidence must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

const SCORE_TIE_EPS: f64 = 1e-12;

fn arc_score(arc: &WtnArc, n_systems: usize, cfg: &VoteConfig) -> f64 {
    let freq = arc.count as f64 / n_systems as f64;
    let conf = if arc.is_null() {
        cfg.null_confidence
    } else {
        arc.confidence_sum / arc.count as f64
    };
    cfg.alpha * freq + (1.0 - cfg.alpha) * conf
}

fn lowest_system(arc: &WtnArc) -> usize {
    arc.systems.iter().copied().min().unwrap_or(usize::MAX)
}

/// Per-slot winner and its score.
pub fn slot_winner<'a>(slot: &'a Slot, n_systems: usize, cfg: &VoteConfig) -> (&'a WtnArc, f64) {
    let scored: Vec<(&WtnArc, f64)> = slot
        .arcs
        .iter()
        .map(|a| (a, arc_score(a, n_systems, cfg)))
        .collect();
    let best = scored.iter().map(|(_, s)| *s).fold(f64::MIN, f64::max);
    let tied = scored.into_iter().filter(|(_, s)| best - s <= SCORE_TIE_EPS);
    let rank = |a: &WtnArc| -> (u8, usize) {
        let null_rank = match cfg.tie_break {
            TieBreak::PreferWord => u8::from(a.is_null()),
            TieBreak::PreferNull => u8::from(!a.is_null()),
            TieBreak::LowestSystem => 0,
        };
        (null_rank, lowest_system(a))
    };
    tied.min_by_key(|(a, _)| rank(a)).expect("slot has at least one arc")
}

/// Votes each slot and returns the surviving words with their winning scores.
pub fn vote(wtn: &WordTransitionNetwork, config: &VoteConfig) -> Result<Hypothesis> {
    config.validate()?;
    if wtn.n_systems == 0 {
        return Err(Error::Argument("cannot vote on an empty network".into()));
    }
    let mut tokens = Vec::new();
    let mut confidences = Vec::new();
    for slot in &wtn.slots {
        let (arc, score) = slot_winner(slot, wtn.n_systems, config);
        if let Some(w) = &arc.word {
            tokens.push(w.clone());
            confidences.push(score.clamp(0.0, 1.0));
        }
    }
    Ok(Hypothesis {
        tokens,
        confidences,
        system_id: 0,
    })
}

/// Builds the network from `hypotheses` in order.
pub fn build_wtn(hypotheses: &[Hypothesis]) -> WordTransitionNetwork {
    hypotheses
        .iter()
        .fold(WordTransitionNetwork::new(), align_into_wtn)
}

pub fn rover(hypotheses: &[Hypothesis], config: &VoteConfig) -> Result<Hypothesis> {
    if hypotheses.is_empty() {
        return Err(Error::Argument("rover needs at least one hypothesis".into()));
    }
    vote(&build_wtn(hypotheses), config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn h(text: &str, id: usize) -> Hypothesis {
        Hypothesis::from_text(text, id)
    }

    fn words(slot: &Slot) -> Vec<(Option<&str>, usize)> {
        let mut v: Vec<_> = slot.arcs.iter().map(|a| (a.word.as_deref(), a.count)).collect();
        v.sort();
        v
    }

    #[test]
    fn seed_creates_one_slot_per_token() {
        let w = build_wtn(&[h("a b c", 0)]);
        assert_eq!(w.slots.len(), 3);
        assert!(w.slots.iter().all(|s| s.arcs.len() == 1 && s.arcs[0].count == 1));
    }

    #[test]
    fn substitution_shares_a_slot() {
        let w = build_wtn(&[h("a b c", 0), h("a x c", 1)]);
        assert_eq!(w.slots.len(), 3);
        assert_eq!(words(&w.slots[1]), vec![(Some("b"), 1), (Some("x"), 1)]);
    }

    #[test]
    fn insertion_adds_null_for_prior_systems() {
        let w = build_wtn(&[h("a b", 0), h("a b c", 1)]);
        assert_eq!(w.slots.len(), 3);
        assert_eq!(words(&w.slots[2]), vec![(None, 1), (Some("c"), 1)]);
        let null = w.slots[2].arcs.iter().find(|a| a.is_null()).unwrap();
        assert_eq!(null.systems, vec![0]);
    }

    #[test]
    fn deletion_adds_null_arc() {
        let w = build_wtn(&[h("a b c", 0), h("a c", 1)]);
        assert_eq!(words(&w.slots[1]), vec![(None, 1), (Some("b"), 1)]);
    }

    #[test]
    fn majority_and_ties() {
        let cfg = VoteConfig::default();
        let hs = [h("a b c", 0), h("a x c", 1), h("a b c", 2)];
        assert_eq!(rover(&hs, &cfg).unwrap().text(), "a b c");

        let pair = [h("a b", 0), h("a b c", 1)];
        assert_eq!(rover(&pair, &cfg).unwrap().text(), "a b c");
        let null_cfg = VoteConfig {
            tie_break: TieBreak::PreferNull,
            ..cfg
        };
        assert_eq!(rover(&pair, &null_cfg).unwrap().text(), "a b");
        let low = VoteConfig {
            tie_break: TieBreak::LowestSystem,
            ..cfg
        };
        assert_eq!(rover(&pair, &low).unwrap().text(), "a b");
    }

    #[test]
    fn three_word_example() {
        let hs = [h("the cat sat", 0), h("the cat sit", 1), h("a cat sat", 2)];
        assert_eq!(rover(&hs, &VoteConfig::default()).unwrap().text(), "the cat sat");
    }

    #[test]
    fn confidence_weighting() {
        let a = Hypothesis::new(vec!["x".into()], Some(vec![0.9]), 0).unwrap();
        let b = Hypothesis::new(vec!["y".into()], Some(vec![0.2]), 1).unwrap();
        let c = Hypothesis::new(vec!["y".into()], Some(vec![0.2]), 2).unwrap();
        let freq = rover(&[a.clone(), b.clone(), c.clone()], &VoteConfig::default()).unwrap();
        assert_eq!(freq.text(), "y");
        let conf = VoteConfig {
            alpha: 0.0,
            ..VoteConfig::default()
        };
        assert_eq!(rover(&[a, b, c], &conf).unwrap().text(), "x");
    }

    #[test]
    fn words_match_case_insensitively() {
        let w = build_wtn(&[h("The cat", 0), h("the cat", 1)]);
        assert_eq!(w.slots[0].arcs.len(), 1);
        assert_eq!(w.slots[0].arcs[0].word.as_deref(), Some("The"));
    }

    #[test]
    fn errors() {
        assert!(rover(&[], &VoteConfig::default()).is_err());
        assert!(Hypothesis::new(vec!["a".into()], Some(vec![]), 0).is_err());
        assert!(vote(&WordTransitionNetwork::new(), &VoteConfig::default()).is_err());
        let bad = VoteConfig {
            alpha: 1.5,
            ..VoteConfig::default()
        };
        assert!(rover(&[h("a", 0)], &bad).is_err());
    }

    #[test]
    fn empty_hypotheses() {
        let out = rover(&[h("", 0), h("", 1)], &VoteConfig::default()).unwrap();
        assert!(out.tokens.is_empty());
        let out = rover(&[h("", 0), h("a", 1), h("a", 2)], &VoteConfig::default()).unwrap();
        assert_eq!(out.text(), "a");
    }

    fn hyp_strategy() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 0..8)
            .prop_map(|v| v.into_iter().map(str::to_string).collect())
    }

    proptest! {
        #[test]
        fn repeated_hypothesis_is_a_fixpoint(tokens in hyp_strategy(), k in 1usize..6) {
            let hs: Vec<_> = (0..k).map(|i| Hypothesis::new(tokens.clone(), None, i).unwrap()).collect();
            prop_assert_eq!(rover(&hs, &VoteConfig::default()).unwrap().tokens, tokens);
        }

        #[test]
        fn slot_counts_sum_to_systems(hs in prop::collection::vec(hyp_strategy(), 1..6)) {
            let mut w = WordTransitionNetwork::new();
            for (i, t) in hs.iter().enumerate() {
                w = align_into_wtn(w, &Hypothesis::new(t.clone(), None, i).unwrap());
                for s in &w.slots {
                    prop_assert_eq!(s.total_count(), w.n_systems);
                }
            }
        }

        #[test]
        fn scaling_confidences_keeps_frequency_winner(
            hs in prop::collection::vec(hyp_strategy(), 1..5),
            scale in 0.01f64..1.0,
        ) {
            let base: Vec<Hypothesis> = hs.iter().enumerate().map(|(i, t)| {
                let confs = (0..t.len()).map(|j| ((i * 7 + j * 3) % 10) as f64 / 10.0).collect();
                Hypothesis::new(t.clone(), Some(confs), i).unwrap()
            }).collect();
            let scaled: Vec<Hypothesis> = base.iter().map(|h| {
                let mut h = h.clone();
                h.confidences.iter_mut().for_each(|c| *c *= scale);
                h
            }).collect();
            let cfg = VoteConfig::default();
            prop_assert_eq!(rover(&base, &cfg).unwrap().tokens, rover(&scaled, &cfg).unwrap().tokens);
            let w = build_wtn(&base);
            for slot in &w.slots {
                let (arc, _) = slot_winner(slot, w.n_systems, &cfg);
                let max = slot.arcs.iter().map(|a| a.count).max().unwrap();
                prop_assert_eq!(arc.count, max);
            }
        }
    }

    #[test]
    fn unambiguous_sets_are_permutation_invariant() {
        // distinct words everywhere except shared anchors, so no DP ties
        let sets = [
            vec!["a b c d", "a x c d", "a b c y"],
            vec!["p q r s t", "p q z s t", "p w r s t", "p q r s t"],
        ];
        for set in sets {
            let mut outputs = std::collections::BTreeSet::new();
            let n = set.len();
            let mut idx: Vec<usize> = (0..n).collect();
            // all permutations via Heap's algorithm
            fn heap(k: usize, idx: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
                if k == 1 {
                    out.push(idx.clone());
                    return;
                }
                for i in 0..k {
                    heap(k - 1, idx, out);
                    if k % 2 == 0 { idx.swap(i, k - 1) } else { idx.swap(0, k - 1) }
                }
            }
            let mut perms = Vec::new();
            heap(n, &mut idx, &mut perms);
            for p in perms {
                let hs: Vec<_> = p.iter().map(|&i| h(set[i], i)).collect();
                outputs.insert(rover(&hs, &VoteConfig::default()).unwrap().text());
            }
            assert_eq!(outputs.len(), 1, "{outputs:?}");
        }
    }
}
