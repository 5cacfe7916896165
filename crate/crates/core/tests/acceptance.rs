//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Every expected value is produced by an oracle written here, independently
//! of the library's own algorithms.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::time::{Duration, Instant};

use cascade_kit::adapters::{AdapterKind, AdapterSpec};
use cascade_kit::audio::{istft, stft, write_wav, AudioBuffer, FrameParams, MelSpectrogram, WavEncoding, Window};
use cascade_kit::augment::{mix_noise, pitch_shift, spec_augment, speed_perturb, speed_perturb_with, MaskValue, SpecAugmentPolicy};
use cascade_kit::enhance::{wiener_enhance, WienerConfig};
use cascade_kit::fusion::{rover, Hypothesis, VoteConfig};
use cascade_kit::manifest::ManifestEntry;
use cascade_kit::metrics::{align_tokens, cer, corpus_bleu, wer, Smoothing};
use cascade_kit::pipeline::{ensemble_distributions, kfold_split, run_to_dir, PipelineConfig, TokenDistribution};
use cascade_kit::signal::{add, concat, dominant_frequency, rel_l2, snr_db, tone, white_noise};
use cascade_kit::vad::{detect, extract_noise_set, SegmentLabel, VadConfig};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// ROVER oracle: exhaustive alignment enumeration plus a plain majority vote.

#[derive(Clone, Debug)]
struct OracleArc {
    word: Option<String>,
    systems: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
struct OracleNet {
    slots: Vec<Vec<OracleArc>>,
    systems: Vec<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum Step {
    Match,
    Sub,
    Del,
    Ins,
}

fn slot_has(slot: &[OracleArc], word: &str) -> bool {
    slot.iter().any(|a| a.word.as_deref() == Some(word))
}

/// All minimum-cost edit paths of `tokens` against the slots.
fn all_optimal_paths(slots: &[Vec<OracleArc>], tokens: &[String]) -> (usize, Vec<Vec<Step>>) {
    fn go(
        slots: &[Vec<OracleArc>],
        tokens: &[String],
        i: usize,
        j: usize,
        cost: usize,
        path: &mut Vec<Step>,
        best: &mut (usize, Vec<Vec<Step>>),
    ) {
        if cost > best.0 {
            return;
        }
        if i == slots.len() && j == tokens.len() {
            if cost < best.0 {
                *best = (cost, Vec::new());
            }
            best.1.push(path.clone());
            return;
        }
        if i < slots.len() && j < tokens.len() {
            let (step, c) = if slot_has(&slots[i], &tokens[j]) { (Step::Match, 0) } else { (Step::Sub, 1) };
            path.push(step);
            go(slots, tokens, i + 1, j + 1, cost + c, path, best);
            path.pop();
        }
        if i < slots.len() {
            path.push(Step::Del);
            go(slots, tokens, i + 1, j, cost + 1, path, best);
            path.pop();
        }
        if j < tokens.len() {
            path.push(Step::Ins);
            go(slots, tokens, i, j + 1, cost + 1, path, best);
            path.pop();
        }
    }
    let mut best = (usize::MAX, Vec::new());
    go(slots, tokens, 0, 0, 0, &mut Vec::new(), &mut best);
    best
}

fn add_arc(slot: &mut Vec<OracleArc>, word: Option<&str>, system: usize) {
    match slot.iter_mut().find(|a| a.word.as_deref() == word) {
        Some(a) => a.systems.push(system),
        None => slot.push(OracleArc { word: word.map(str::to_string), systems: vec![system] }),
    }
}

fn oracle_add(net: &mut OracleNet, tokens: &[String], system: usize) {
    let (_, paths) = all_optimal_paths(&net.slots, tokens);
    // Ties: the path whose steps, read from the end, are smallest in the
    // order match < substitution < deletion < insertion.
    let chosen = paths
        .into_iter()
        .min_by(|a, b| a.iter().rev().cmp(b.iter().rev()))
        .expect("at least one path");
    let mut old = std::mem::take(&mut net.slots).into_iter();
    let mut toks = tokens.iter();
    let mut slots = Vec::new();
    for step in chosen {
        match step {
            Step::Match | Step::Sub => {
                let mut s = old.next().unwrap();
                add_arc(&mut s, Some(toks.next().unwrap()), system);
                slots.push(s);
            }
            Step::Del => {
                let mut s = old.next().unwrap();
                add_arc(&mut s, None, system);
                slots.push(s);
            }
            Step::Ins => {
                let mut s = Vec::new();
                if !net.systems.is_empty() {
                    s.push(OracleArc { word: None, systems: net.systems.clone() });
                }
                add_arc(&mut s, Some(toks.next().unwrap()), system);
                slots.push(s);
            }
        }
    }
    net.slots = slots;
    net.systems.push(system);
}

fn oracle_rover(hyps: &[Vec<String>]) -> Vec<String> {
    let mut net = OracleNet::default();
    for (i, h) in hyps.iter().enumerate() {
        oracle_add(&mut net, h, i + 1);
    }
    let mut out = Vec::new();
    for slot in &net.slots {
        let winner = slot
            .iter()
            .max_by(|a, b| {
                a.systems
                    .len()
                    .cmp(&b.systems.len())
                    .then(b.word.is_none().cmp(&a.word.is_none()))
                    .then(b.systems.iter().min().cmp(&a.systems.iter().min()))
            })
            .unwrap();
        if let Some(w) = &winner.word {
            out.push(w.clone());
        }
    }
    out
}

const WORDS: [&str; 4] = ["a", "b", "c", "d"];

/// Label strings of length `len` in first-occurrence order over at most four
/// labels. Fusion treats words only through equality, so one representative
/// per relabelling class covers the whole class.
fn canonical_strings(len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    fn go(len: usize, cur: &mut Vec<usize>, used: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for l in 0..(used + 1).min(4) {
            cur.push(l);
            go(len, cur, used.max(l + 1), out);
            cur.pop();
        }
    }
    go(len, &mut Vec::new(), 0, &mut out);
    out
}

fn words(labels: &[usize]) -> Vec<String> {
    labels.iter().map(|l| WORDS[*l].to_string()).collect()
}

fn check_rover_case(split: &[Vec<String>]) -> Result<(), String> {
    let hyps: Vec<Hypothesis> = split.iter().enumerate().map(|(i, t)| Hypothesis::new(t.clone(), None, i + 1).unwrap()).collect();
    let got = rover(&hyps, &VoteConfig::default()).map_err(|e| e.to_string())?.tokens;
    let want = oracle_rover(split);
    ensure(got == want, || format!("{split:?}: rover {got:?}, oracle {want:?}"))
}

fn exhaustive_sets(max_len: usize, systems: usize) -> Result<usize, String> {
    let mut cases = 0;
    let mut lens = vec![0usize; systems];
    loop {
        let total: usize = lens.iter().sum();
        for s in canonical_strings(total) {
            let mut split = Vec::with_capacity(systems);
            let mut at = 0;
            for l in &lens {
                split.push(words(&s[at..at + l]));
                at += l;
            }
            check_rover_case(&split)?;
            cases += 1;
        }
        let mut k = 0;
        while k < systems {
            lens[k] += 1;
            if lens[k] <= max_len {
                break;
            }
            lens[k] = 0;
            k += 1;
        }
        if k == systems {
            return Ok(cases);
        }
    }
}

fn rover_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let singles = exhaustive_sets(5, 1)?;
    let pairs = exhaustive_sets(5, 2)?;
    let triples = exhaustive_sets(3, 3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let random = 20_000;
    for _ in 0..random {
        let split: Vec<Vec<String>> = (0..3)
            .map(|_| {
                let len = rng.gen_range(0..=5);
                (0..len).map(|_| WORDS[rng.gen_range(0..4)].to_string()).collect()
            })
            .collect();
        check_rover_case(&split)?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{singles} single, {pairs} pair (len<=5) and {triples} triple (len<=3) classes exhaustively, {random} random triples (len<=5), {:.1}s",
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------

fn rover_majority() -> Outcome {
    let vocab: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..1000 {
        let k: usize = rng.gen_range(3..=9);
        let truthful = k.div_ceil(2) + 1;
        let len = rng.gen_range(1..=8);
        let truth: Vec<String> = (0..len).map(|_| vocab.choose(&mut rng).unwrap().clone()).collect();
        let mut texts = vec![truth.clone(); truthful];
        for _ in truthful..k {
            let mut c = truth.clone();
            let pos = rng.gen_range(0..c.len());
            match rng.gen_range(0..3) {
                0 => {
                    let w = vocab.iter().filter(|w| **w != c[pos]).collect::<Vec<_>>().choose(&mut rng).unwrap().to_string();
                    c[pos] = w;
                }
                1 => {
                    c.remove(pos);
                }
                _ => c.insert(rng.gen_range(0..=c.len()), vocab.choose(&mut rng).unwrap().clone()),
            }
            texts.push(c);
        }
        texts.shuffle(&mut rng);
        let hyps: Vec<Hypothesis> = texts.iter().enumerate().map(|(i, t)| Hypothesis::new(t.clone(), None, i + 1).unwrap()).collect();
        let fused = rover(&hyps, &VoteConfig::default()).map_err(|e| e.to_string())?;
        ensure(fused.tokens == truth, || format!("trial {trial}: {texts:?} fused to {:?}", fused.tokens))?;
    }
    Ok("1000/1000 trials recovered the ground truth (k in 3..=9, ceil(k/2)+1 truthful)".into())
}

// ---------------------------------------------------------------------------

/// Edit distance straight from its recursive definition.
fn edit_distance_recursive(a: &[char], b: &[char]) -> usize {
    fn go(a: &[char], b: &[char], memo: &mut BTreeMap<(usize, usize), usize>) -> usize {
        if a.is_empty() {
            return b.len();
        }
        if b.is_empty() {
            return a.len();
        }
        if let Some(v) = memo.get(&(a.len(), b.len())) {
            return *v;
        }
        let sub = go(&a[1..], &b[1..], memo) + usize::from(a[0] != b[0]);
        let del = go(&a[1..], b, memo) + 1;
        let ins = go(a, &b[1..], memo) + 1;
        let v = sub.min(del).min(ins);
        memo.insert((a.len(), b.len()), v);
        v
    }
    go(a, b, &mut BTreeMap::new())
}

/// Minimum over every edit path, enumerated one by one.
fn edit_distance_paths(a: &[char], b: &[char]) -> usize {
    fn go(a: &[char], b: &[char], cost: usize, best: &mut usize) {
        if a.is_empty() && b.is_empty() {
            *best = (*best).min(cost);
            return;
        }
        if !a.is_empty() && !b.is_empty() {
            go(&a[1..], &b[1..], cost + usize::from(a[0] != b[0]), best);
        }
        if !a.is_empty() {
            go(&a[1..], b, cost + 1, best);
        }
        if !b.is_empty() {
            go(a, &b[1..], cost + 1, best);
        }
    }
    let mut best = usize::MAX;
    go(a, b, 0, &mut best);
    best
}

fn all_strings(max_len: usize) -> Vec<Vec<char>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for c in ['a', 'b', 'c'] {
                let mut t: Vec<char> = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn wer_cer_oracle() -> Outcome {
    let strings = all_strings(6);
    let spaced: Vec<String> = strings.iter().map(|s| s.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")).collect();
    let packed: Vec<String> = strings.iter().map(|s| s.iter().collect()).collect();
    let mut pairs = 0usize;
    for (i, r) in strings.iter().enumerate() {
        for (j, h) in strings.iter().enumerate() {
            let d = edit_distance_recursive(r, h);
            if r.len() <= 4 && h.len() <= 4 {
                let p = edit_distance_paths(r, h);
                ensure(p == d, || format!("oracles disagree on {r:?}/{h:?}"))?;
            }
            let stats = align_tokens(r, h);
            ensure(stats.errors() == d, || format!("align_tokens {r:?}/{h:?}: {} vs {d}", stats.errors()))?;
            if r.is_empty() {
                ensure(wer(&spaced[i], &spaced[j]).is_err() && cer(&packed[i], &packed[j]).is_err(), || "empty reference accepted".into())?;
            } else {
                let expected = d as f64 / r.len() as f64;
                let w = wer(&spaced[i], &spaced[j]).map_err(|e| e.to_string())?;
                let c = cer(&packed[i], &packed[j]).map_err(|e| e.to_string())?;
                ensure(w == expected && c == expected, || format!("{r:?}/{h:?}: wer {w}, cer {c}, oracle {expected}"))?;
            }
            pairs += 1;
        }
    }
    Ok(format!("{pairs} pairs exact (lengths <= 6, alphabet of 3)"))
}

// ---------------------------------------------------------------------------

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn bleu_examples() -> Outcome {
    let clip = corpus_bleu(&[toks("the cat")], &[toks("the the the")], 4, Smoothing::None).map_err(|e| e.to_string())?;
    // "the" occurs 3 times in the hypothesis, clipped to its 1 reference occurrence.
    ensure((clip.precisions[0] - 1.0 / 3.0).abs() <= 1e-9, || format!("p1 = {}", clip.precisions[0]))?;
    ensure(clip.precisions[1] == 0.0 && clip.score == 0.0, || format!("p2 = {}, score = {}", clip.precisions[1], clip.score))?;

    let bp = corpus_bleu(&[toks("a b c d")], &[toks("a b")], 4, Smoothing::None).map_err(|e| e.to_string())?;
    let expected_bp = (1.0f64 - 4.0 / 2.0).exp();
    ensure((bp.brevity_penalty - expected_bp).abs() <= 1e-9, || format!("BP = {}", bp.brevity_penalty))?;
    ensure((bp.score - 100.0 * expected_bp).abs() <= 1e-9, || format!("score = {}", bp.score))?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let n = rng.gen_range(1..20);
        let corpus: Vec<Vec<String>> = (0..n)
            .map(|_| (0..rng.gen_range(1..15)).map(|_| format!("t{}", rng.gen_range(0..30))).collect())
            .collect();
        let s = corpus_bleu(&corpus, &corpus, 4, Smoothing::None).map_err(|e| e.to_string())?;
        ensure(s.score == 100.0 && s.brevity_penalty == 1.0, || format!("identity corpus scored {}", s.score))?;
    }
    Ok(format!(
        "p1 = {:.6} with score 0; BP = {:.6}, score = {:.4}; 200 identity corpora = 100.0",
        clip.precisions[0], bp.brevity_penalty, bp.score
    ))
}

// ---------------------------------------------------------------------------

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

fn mix_noise_snr() -> Outcome {
    let sr = 16000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for pair in 0..200 {
        let len = rng.gen_range(1600..32000);
        let mut speech = white_noise(len, sr, rng.gen_range(0.01..0.3), pair);
        for _ in 0..3 {
            let t = tone(rng.gen_range(100.0..4000.0), len as f64 / sr as f64, sr, rng.gen_range(0.01..0.5));
            speech = add(&speech, &AudioBuffer::new(t.samples()[..len].to_vec(), sr).unwrap());
        }
        let noise = white_noise(rng.gen_range(800..48000), sr, rng.gen_range(0.001..1.0), 1000 + pair);
        let target = rng.gen_range(0.0..=15.0);
        let mix = mix_noise(&speech, &noise, target, &mut rng).map_err(|e| e.to_string())?;
        let seg: Vec<f64> = (0..len).map(|i| noise.samples()[(mix.offset + i) % noise.len()]).collect();
        let s: Vec<f64> = speech.samples().iter().map(|v| v * mix.peak_gain).collect();
        let n: Vec<f64> = seg.iter().map(|v| v * mix.noise_gain * mix.peak_gain).collect();
        let measured = 10.0 * (power(&s) / power(&n)).log10();
        worst = worst.max((measured - target).abs());
        let linear = mix.audio.samples().iter().zip(s.iter().zip(&n)).all(|(y, (a, b))| (y - (a + b)).abs() <= 1e-12);
        ensure(linear, || format!("pair {pair}: output is not speech + gain * noise"))?;
    }
    ensure(worst <= 0.1, || format!("worst SNR error {worst} dB"))?;
    Ok(format!("200 pairs, worst |measured - requested| = {worst:.2e} dB"))
}

// ---------------------------------------------------------------------------

fn speed_and_pitch() -> Outcome {
    let sr = 16000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    for _ in 0..20 {
        let len = rng.gen_range(4000..40000);
        let buf = white_noise(len, sr, 0.1, rng.gen());
        for f in [0.9, 1.0, 1.1] {
            for preserve in [false, true] {
                let out = speed_perturb_with(&buf, f, preserve).map_err(|e| e.to_string())?;
                let ideal = len as f64 / f;
                ensure((out.len() as f64 - ideal).abs() <= 1.0, || format!("len {len}, factor {f}: {} vs {ideal}", out.len()))?;
                checked += 1;
            }
        }
    }
    ensure(speed_perturb(&tone(440.0, 0.5, sr, 0.5), 1.0).unwrap() == tone(440.0, 0.5, sr, 0.5), || "factor 1.0 changed the buffer".into())?;
    let a440 = tone(440.0, 1.0, sr, 0.5);
    let shifted = pitch_shift(&a440, 1200.0).map_err(|e| e.to_string())?;
    let bin = sr as f64 / shifted.len().next_power_of_two() as f64;
    let f = dominant_frequency(&shifted);
    ensure((f - 880.0).abs() <= bin, || format!("dominant {f} Hz, bin {bin} Hz"))?;
    Ok(format!("{checked} length checks within 1 sample; +1200 cents on 440 Hz -> {f:.2} Hz (bin {bin:.3} Hz)"))
}

// ---------------------------------------------------------------------------

fn mel_of(frames: Array2<f64>) -> MelSpectrogram {
    let n_mels = frames.ncols();
    MelSpectrogram { frames, n_mels, params: FrameParams::asr(), log: true }
}

fn spec_augment_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let (t, f) = (rng.gen_range(1..300), rng.gen_range(1..128));
        let m = mel_of(Array2::from_shape_fn((t, f), |_| rng.gen_range(-20.0..5.0)));
        let out = spec_augment(&m, &SpecAugmentPolicy::disabled(), &mut rng).map_err(|e| e.to_string())?;
        ensure(out.frames.iter().zip(m.frames.iter()).all(|(a, b)| a.to_bits() == b.to_bits()), || "zero policy changed the input".into())?;
    }
    let mut worst_ratio: f64 = 0.0;
    for seed in 0..1000u64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (t, f) = (r.gen_range(1..400), r.gen_range(1..100));
        let policy = SpecAugmentPolicy {
            time_warp_w: 0,
            n_freq_masks: r.gen_range(0..4),
            freq_mask_f: r.gen_range(0..40),
            n_time_masks: r.gen_range(0..4),
            time_mask_t: r.gen_range(0..60),
            mask_value: MaskValue::Zero,
        };
        let m = mel_of(Array2::ones((t, f)));
        let out = spec_augment(&m, &policy, &mut r).map_err(|e| e.to_string())?;
        let masked = out.frames.iter().filter(|v| **v == 0.0).count();
        let bound = policy.n_freq_masks * policy.freq_mask_f * t + policy.n_time_masks * policy.time_mask_t * f;
        ensure(out.frames.dim() == (t, f), || "shape changed".into())?;
        ensure(out.frames.iter().all(|v| *v == 0.0 || *v == 1.0), || format!("seed {seed}: unmasked cell changed"))?;
        ensure(masked <= bound, || format!("seed {seed}: {masked} masked cells > bound {bound}"))?;
        if bound > 0 {
            worst_ratio = worst_ratio.max(masked as f64 / bound as f64);
        }
    }
    let m = mel_of(Array2::from_shape_fn((200, 80), |(i, j)| ((i * 31 + j * 7) % 17) as f64));
    for seed in 0..50 {
        let a = spec_augment(&m, &SpecAugmentPolicy::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = spec_augment(&m, &SpecAugmentPolicy::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        ensure(a.frames.iter().zip(b.frames.iter()).all(|(x, y)| x.to_bits() == y.to_bits()), || format!("seed {seed} not reproducible"))?;
    }
    Ok(format!("zero policy bit-exact; 1000 trials within bound (max fill {worst_ratio:.2}); 50 seeds reproduce bit-exactly"))
}

// ---------------------------------------------------------------------------

fn speech_like(seconds: f64, sr: u32, rms: f64) -> AudioBuffer {
    let n = (seconds * sr as f64).round() as usize;
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr as f64;
            let env = 0.6 + 0.4 * (2.0 * std::f64::consts::PI * 4.0 * t).sin();
            env * (1..=15).map(|h| (2.0 * std::f64::consts::PI * 120.0 * h as f64 * t).sin() / h as f64).sum::<f64>()
        })
        .collect();
    let scale = rms / power(&raw).sqrt();
    AudioBuffer::new(raw.into_iter().map(|v| v * scale).collect(), sr).unwrap()
}

fn vad_boundaries_and_harvest() -> Outcome {
    let sr = 16000;
    let cfg = VadConfig::default();
    let hop = cfg.frame_params.frame_shift;
    let tol = 2.0 * hop + 1e-9;
    let mut worst: f64 = 0.0;
    for snr in [20.0, 10.0, 5.0] {
        for seed in 0..5 {
            let sigma = 10f64.powf(-30.0 / 20.0);
            let noise = white_noise(3 * sr as usize, sr, sigma, seed);
            let amp = (2.0 * sigma * sigma * 10f64.powf(snr / 10.0)).sqrt();
            let silence = AudioBuffer::silence(sr as usize, sr).unwrap();
            let sig = concat(&[silence.clone(), tone(1000.0, 1.0, sr, amp), silence]);
            let segs = detect(&add(&noise, &sig), &cfg).map_err(|e| e.to_string())?;
            let labels: Vec<SegmentLabel> = segs.iter().map(|s| s.label).collect();
            ensure(labels == [SegmentLabel::NonVocal, SegmentLabel::Vocal, SegmentLabel::NonVocal], || format!("{snr} dB seed {seed}: {segs:?}"))?;
            let (on, off) = (segs[1].start, segs[1].end);
            worst = worst.max((on - 1.0).abs()).max((off - 2.0).abs());
            ensure((on - 1.0).abs() <= tol && (off - 2.0).abs() <= tol, || format!("{snr} dB seed {seed}: vocal [{on}, {off}]"))?;
        }
    }

    let mut harvested = 0;
    for seed in 0..5 {
        let lead = 0.3;
        let speech = 1.0;
        let gap = 2.0;
        let total = lead + speech + gap + speech;
        let noise = white_noise((total * sr as f64) as usize, sr, 0.1, 100 + seed);
        let voice = concat(&[
            AudioBuffer::silence((lead * sr as f64) as usize, sr).unwrap(),
            speech_like(speech, sr, 0.316),
            AudioBuffer::silence((gap * sr as f64) as usize, sr).unwrap(),
            speech_like(speech, sr, 0.316),
        ]);
        let mixture = add(&noise, &voice);
        let pieces = extract_noise_set(&mixture, &cfg, -30.0, 0.5).map_err(|e| e.to_string())?;
        ensure(pieces.len() == 1, || format!("seed {seed}: {} noise segments", pieces.len()))?;
        let segs = detect(&mixture, &cfg).unwrap();
        let gap_seg = segs
            .iter()
            .find(|s| s.label == SegmentLabel::NonVocal && s.duration() >= 0.5)
            .ok_or_else(|| "gap not detected".to_string())?;
        let (a, b) = gap_seg.sample_range(sr);
        let (ga, gb) = (lead + speech, lead + speech + gap);
        ensure((gap_seg.start - ga).abs() <= tol && (gap_seg.end - gb).abs() <= tol, || format!("seed {seed}: gap at [{}, {}]", gap_seg.start, gap_seg.end))?;
        ensure(pieces[0].samples() == &mixture.samples()[a..b], || "harvested samples differ from the input".into())?;
        harvested += 1;
    }
    Ok(format!("15 signals, worst boundary error {:.1} ms (limit {:.0} ms); {harvested}/5 gaps harvested exactly", worst * 1e3, tol * 1e3))
}

// ---------------------------------------------------------------------------

fn wiener_checks() -> Outcome {
    let sr = 16000;
    let lead = sr as usize / 4;
    let mut worst = f64::INFINITY;
    for (i, freq) in [300.0, 700.0, 1000.0, 2500.0].into_iter().enumerate() {
        for seed in 0..3u64 {
            let amp = 0.2;
            let clean = concat(&[AudioBuffer::silence(lead, sr).unwrap(), tone(freq, 1.5, sr, amp)]);
            let noise = white_noise(clean.len(), sr, amp / 2f64.sqrt(), 10 * i as u64 + seed);
            let noisy = add(&clean, &noise);
            let out = wiener_enhance(&noisy, &WienerConfig::default()).map_err(|e| e.to_string())?;
            let before = snr_db(&clean.samples()[lead..], &noisy.samples()[lead..]);
            let after = snr_db(&clean.samples()[lead..], &out.samples()[lead..]);
            ensure(before.abs() < 0.5, || format!("input SNR {before}"))?;
            worst = worst.min(after - before);
        }
    }
    ensure(worst >= 5.0, || format!("smallest improvement {worst} dB"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..200 {
        let len = rng.gen_range(512..20000);
        let scale = 10f64.powi(rng.gen_range(-30..=3));
        let samples: Vec<f64> = match case % 4 {
            0 => (0..len).map(|_| rng.gen_range(-1.0..1.0) * scale).collect(),
            1 => vec![0.0; len],
            2 => (0..len).map(|i| if i % 97 == 0 { scale } else { 0.0 }).collect(),
            _ => (0..len).map(|_| if rng.gen_bool(0.5) { scale } else { -scale }).collect(),
        };
        let buf = AudioBuffer::new(samples, sr).unwrap();
        let out = wiener_enhance(&buf, &WienerConfig::default()).map_err(|e| e.to_string())?;
        ensure(out.len() == buf.len() && out.samples().iter().all(|v| v.is_finite()), || format!("case {case}: non-finite or wrong length"))?;
    }
    Ok(format!("12 mixtures at 0 dB, smallest SNR gain {worst:.2} dB; 200 random inputs NaN-free"))
}

// ---------------------------------------------------------------------------

fn istft_round_trip() -> Outcome {
    let sr = 16000;
    let params = [
        FrameParams::new(0.032, 0.016, Window::Hann).unwrap(),
        FrameParams::new(0.032, 0.008, Window::Hann).unwrap(),
        FrameParams::new(0.020, 0.010, Window::Hamming).unwrap(),
        FrameParams::new(0.064, 0.016, Window::Hann).unwrap(),
        FrameParams::new(0.025, 0.025, Window::Rect).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let p = params[case % params.len()];
        let len = rng.gen_range(2000..20000);
        let buf = AudioBuffer::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), sr).unwrap();
        let back = istft(&stft(&buf, &p).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let (flen, hop) = (p.frame_len_samples(sr), p.hop_samples(sr));
        let frames = p.num_frames(len, sr);
        let (a, b) = (flen - hop, (frames - 1) * hop + hop);
        let err = rel_l2(&back.samples()[a..b], &buf.samples()[a..b]);
        worst = worst.max(err);
    }
    ensure(worst < 1e-6, || format!("worst relative L2 {worst:e}"))?;
    Ok(format!("200 buffers over 5 COLA framings, worst interior relative L2 {worst:.2e}"))
}

// ---------------------------------------------------------------------------

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn end_to_end(suite_start: Instant) -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let sources = ["uh hello there", "how are you", "i mean good morning", "see you tomorrow", "thank you very much", "um what time is it", "the weather is nice", "let us go"];
    let targets = ["你好", "你好吗", "早上好", "明天见", "非常感谢", "现在几点", "天气很好", "我们走吧"];
    let manifest: Vec<ManifestEntry> = sources
        .iter()
        .zip(targets)
        .enumerate()
        .map(|(i, (s, t))| {
            let path = tmp.path().join(format!("in{i}.wav"));
            write_wav(&tone(150.0 + 40.0 * i as f64, 0.5, 16000, 0.3), &path, WavEncoding::Pcm16).unwrap();
            ManifestEntry::new(format!("utt{i:02}")).with_audio(path).with_source(*s).with_target(t)
        })
        .collect();
    let spec = |kind| AdapterSpec::new(kind);
    let mut config = PipelineConfig::new(
        vec![spec(AdapterKind::Oracle), spec(AdapterKind::Noisy { rate: 0.3, seed: 1 }), spec(AdapterKind::Oracle)],
        spec(AdapterKind::Oracle),
    );
    config.tts = Some(AdapterSpec { kind: AdapterKind::MockTone, serial: true });
    config.asr_bleu = Some(spec(AdapterKind::ToneInverse));
    config.enhance_tts_refs = true;

    let mut snapshots = Vec::new();
    let mut score = None;
    for workers in [1, 4, 16] {
        let out = tmp.path().join(format!("out{workers}"));
        let (results, report) = run_to_dir(&manifest, &config, &out, workers).map_err(|e| e.to_string())?;
        ensure(report.failures == 0, || format!("{} entries failed", report.failures))?;
        for r in &results {
            ensure(rover(&r.nbest, &config.fusion).unwrap().text() == *r.fused.as_ref().unwrap(), || format!("{}: fused text is not rover(n-best)", r.utt_id))?;
        }
        let asr_bleu = report.asr_bleu.ok_or("no ASR-BLEU in report")?;
        ensure(asr_bleu.bleu.score == 100.0 && asr_bleu.failures == 0, || format!("ASR-BLEU {}", asr_bleu.bleu.score))?;
        score = Some(asr_bleu.bleu.score);
        snapshots.push(dir_bytes(&out));
    }
    ensure(snapshots[0] == snapshots[1] && snapshots[1] == snapshots[2], || "output directories differ between worker counts".into())?;
    let elapsed = suite_start.elapsed();
    ensure(elapsed < Duration::from_secs(300), || format!("suite took {elapsed:?}"))?;
    Ok(format!(
        "ASR-BLEU {:.1}; {} files byte-identical for 1/4/16 workers; suite time {:.1}s",
        score.unwrap(),
        snapshots[0].len(),
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------

fn kfold_and_ensemble() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..1000 {
        let n = rng.gen_range(2..300);
        let k = rng.gen_range(2..=n.min(12));
        let seed: u64 = rng.gen();
        let items: Vec<usize> = (0..n).collect();
        let folds = kfold_split(&items, k, seed).map_err(|e| e.to_string())?;
        ensure(folds.len() == k, || format!("case {case}: {} folds", folds.len()))?;
        let mut seen = HashSet::new();
        for f in &folds {
            for x in f {
                ensure(seen.insert(*x), || format!("case {case}: item {x} in two folds"))?;
            }
        }
        ensure(seen.len() == n, || format!("case {case}: union has {} of {n} items", seen.len()))?;
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        ensure(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1, || format!("case {case}: sizes {sizes:?}"))?;
        ensure(kfold_split(&items, k, seed).unwrap() == folds, || format!("case {case}: not deterministic"))?;
    }
    let vocab: Vec<String> = (0..10).map(|i| format!("tok{i}")).collect();
    for case in 0..1000 {
        let m = rng.gen_range(1..=6);
        let dists: Vec<TokenDistribution> = (0..m)
            .map(|_| {
                let support = rng.gen_range(1..=vocab.len());
                let chosen: Vec<&String> = vocab.choose_multiple(&mut rng, support).collect();
                TokenDistribution::from_weights(chosen.into_iter().map(|t| (t.clone(), rng.gen_range(0.001..1.0)))).unwrap()
            })
            .collect();
        let merged = ensemble_distributions(&dists).map_err(|e| e.to_string())?;
        let total: f64 = merged.probabilities().values().sum();
        ensure((total - 1.0).abs() <= 1e-9 && merged.probabilities().values().all(|p| *p >= 0.0), || format!("case {case}: sum {total}"))?;
        for (tok, p) in merged.probabilities() {
            let mean = dists.iter().map(|d| d.get(tok)).sum::<f64>() / m as f64;
            ensure((p - mean).abs() <= 1e-12, || format!("case {case}: {tok} has {p}, mean {mean}"))?;
        }
        let copies = vec![dists[0].clone(); rng.gen_range(1..=6)];
        let fix = ensemble_distributions(&copies).unwrap();
        let same = dists[0].probabilities().iter().all(|(t, p)| (fix.get(t) - p).abs() <= 1e-12)
            && fix.probabilities().len() == dists[0].probabilities().len();
        ensure(same, || format!("case {case}: ensemble of copies moved"))?;
    }
    Ok("1000 k-fold cases and 1000 ensemble cases hold every invariant".into())
}

// ---------------------------------------------------------------------------

fn main() {
    let suite_start = Instant::now();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("rover-oracle-equivalence", Box::new(rover_oracle_equivalence)),
        ("rover-majority-recovery", Box::new(rover_majority)),
        ("wer-cer-edit-distance-oracle", Box::new(wer_cer_oracle)),
        ("corpus-bleu-hand-examples", Box::new(bleu_examples)),
        ("mix-noise-snr-accuracy", Box::new(mix_noise_snr)),
        ("speed-lengths-and-octave-shift", Box::new(speed_and_pitch)),
        ("spec-augment-identity-accounting-determinism", Box::new(spec_augment_checks)),
        ("vad-boundaries-and-noise-harvest", Box::new(vad_boundaries_and_harvest)),
        ("wiener-snr-gain-and-finiteness", Box::new(wiener_checks)),
        ("istft-stft-round-trip", Box::new(istft_round_trip)),
        ("kfold-and-ensemble-invariants", Box::new(kfold_and_ensemble)),
        ("end-to-end-mock-cascade", Box::new(move || end_to_end(suite_start))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(format!("panicked: {:?}", p.downcast_ref::<String>().map(String::as_str).or(p.downcast_ref::<&str>().copied()))));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}  ({secs:.1}s)  {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}  ({secs:.1}s)  {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
