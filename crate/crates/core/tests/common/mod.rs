//! Oracles and desk-scale experiments shared by the integration tests and
//! the acceptance target.
#![allow(dead_code)]

use std::collections::HashMap;
use std::ops::ControlFlow;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use argus_core::cells::{lattice_forward, CellShape, CellWeights, Direction, GATE_CELL, GATE_FORGET1, GATE_FORGET2, GATE_INPUT};
use argus_core::ctc::{collapse, ctc_loss_grad, min_frames, BLANK};
use argus_core::dataset::{random_vocabulary, synth_corpus, LineRecord, SynthConfig};
use argus_core::decoder::{best_path, decode_segment, word_viterbi, DecoderConfig, THETA_DEFAULT, THETA_ENLARGED};
use argus_core::network::{init_params, init_params_with_range, NetConfig};
use argus_core::preprocess::{estimate_median_curve, preprocess_line};
use argus_core::trainer::{epoch_rng, evaluate, sample_epoch, sgd_step, train, Sample, Schedule, Segment, TrainConfig, TrainSet, TrainState, Variant};
use argus_core::{Alphabet, CellVariant, GrayImage, Lexicon, NormConfig, ProbMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Softmax of Gaussian logits with standard deviation `spread`.
pub fn random_probs(rng: &mut impl Rng, frames: usize, classes: usize, spread: f64) -> ProbMatrix {
    let normal = Normal::new(0.0, spread).unwrap();
    let logits: Vec<f64> = (0..frames * classes).map(|_| normal.sample(rng)).collect();
    ProbMatrix::from_logits(frames, classes, &logits).unwrap()
}

/// Calls `f` on every path of `frames` symbols drawn from `symbols`.
pub fn for_each_path(frames: usize, symbols: &[usize], mut f: impl FnMut(&[usize])) {
    let mut digits = vec![0usize; frames];
    let mut path: Vec<usize> = vec![symbols[0]; frames];
    loop {
        f(&path);
        let mut i = 0;
        loop {
            if i == frames {
                return;
            }
            digits[i] += 1;
            if digits[i] < symbols.len() {
                path[i] = symbols[digits[i]];
                break;
            }
            digits[i] = 0;
            path[i] = symbols[0];
            i += 1;
        }
    }
}

fn path_prob(probs: &ProbMatrix, path: &[usize]) -> f64 {
    path.iter().enumerate().map(|(t, &k)| probs.get(t, k)).product()
}

/// CTC loss and logit gradient by summing over every path explicitly.
/// `None` when no path collapses to the target.
pub fn brute_force_ctc(probs: &ProbMatrix, target: &[usize]) -> Option<(f64, Vec<f64>)> {
    let (frames, classes) = (probs.frames(), probs.classes());
    let symbols: Vec<usize> = (0..classes).collect();
    let mut total = 0.0;
    // occupancy[t][k]: probability mass of matching paths with path[t] == k
    let mut occupancy = vec![0.0; frames * classes];
    for_each_path(frames, &symbols, |path| {
        if collapse(path) == target {
            let p = path_prob(probs, path);
            total += p;
            for (t, &k) in path.iter().enumerate() {
                occupancy[t * classes + k] += p;
            }
        }
    });
    if total == 0.0 {
        return None;
    }
    let grad = (0..frames * classes)
        .map(|i| probs.data()[i] - occupancy[i] / total)
        .collect();
    Some((-total.ln(), grad))
}

/// Best dictionary word by enumerating every path over the blank and the
/// word classes: `(word, max path probability)`, ties to the smaller word.
pub fn exhaustive_best_word(probs: &ProbMatrix, lexicon: &Lexicon, alphabet: &Alphabet) -> Option<(String, f64)> {
    let mut symbols = vec![BLANK];
    for w in lexicon.words() {
        for l in alphabet.encode(w).unwrap() {
            if !symbols.contains(&l) {
                symbols.push(l);
            }
        }
    }
    let mut best_by_labels: HashMap<Vec<usize>, f64> = HashMap::new();
    for_each_path(probs.frames(), &symbols, |path| {
        let p = path_prob(probs, path);
        let e = best_by_labels.entry(collapse(path)).or_insert(0.0);
        if p > *e {
            *e = p;
        }
    });
    let mut best: Option<(String, f64)> = None;
    for w in lexicon.words() {
        if let Some(&p) = best_by_labels.get(&alphabet.encode(w).unwrap()) {
            let better = match &best {
                None => true,
                Some((bw, bp)) => p > *bp || (p == *bp && w < bw),
            };
            if better {
                best = Some((w.clone(), p));
            }
        }
    }
    best
}

/// A Latin line with a strong sinusoidal baseline.
pub fn wavy_line(seed: u64) -> GrayImage {
    let cfg = SynthConfig {
        wobble_amplitude: 14.0,
        wobble_period: (220.0, 320.0),
        words_per_line: (2, 4),
        seed,
        ..SynthConfig::default()
    };
    let mut r = rng(seed);
    let text = argus_core::dataset::random_text(&cfg, None, &mut r);
    argus_core::dataset::synth_line(&text, &cfg, &mut r).unwrap()
}

pub fn samples(records: &[LineRecord], alphabet: &Alphabet) -> Vec<Sample> {
    let norm = NormConfig::default();
    records
        .iter()
        .map(|r| Sample::from_raw(format!("{}/{}", r.page, r.line), &r.text, &r.image, Some(&norm), alphabet).unwrap())
        .collect()
}

/// Ten short lines over ten Latin letters, one line per page.
pub fn overfit_lines(seed: u64) -> (Vec<Sample>, Alphabet) {
    let cfg = SynthConfig {
        glyphs: "abdehlnort".into(),
        words_per_line: (1, 2),
        word_length: (2, 4),
        x_height: 60.0,
        seed,
        ..SynthConfig::default()
    };
    let mut r = rng(seed);
    let records = synth_corpus(&cfg, 10, 1, None, &mut r).unwrap();
    let alphabet = Alphabet::derive(records.iter().map(|r| r.text.as_str())).unwrap();
    (samples(&records, &alphabet), alphabet)
}

pub const OVERFIT_INIT_RANGE: f64 = 1.0;
pub const OVERFIT_TARGET_CER: f64 = 2.0;
pub const OVERFIT_MAX_EPOCHS: usize = 300;

pub fn overfit_schedule() -> Schedule {
    Schedule::new(
        "overfit",
        vec![
            Segment { first: 1, last: 200, rate: 3e-3 },
            Segment { first: 201, last: 300, rate: 1e-3 },
        ],
    )
    .unwrap()
}

#[derive(Debug)]
pub struct OverfitOutcome {
    pub classes: usize,
    /// First epoch whose train CER fell below the target, if any.
    pub reached_at: Option<usize>,
    pub best_cer: f64,
    pub elapsed: Duration,
}

/// Trains the tiny MDLeaky network on [`overfit_lines`] until the train CER
/// drops below 2% or 300 epochs pass.
pub fn overfit(seed: u64) -> OverfitOutcome {
    let start = Instant::now();
    let (lines, alphabet) = overfit_lines(seed);
    let net = NetConfig::tiny(CellVariant::MdLeaky, alphabet.len());
    let mut state = TrainState::new(init_params_with_range(&net, seed, OVERFIT_INIT_RANGE).unwrap(), seed);
    let cfg = TrainConfig {
        schedule: overfit_schedule(),
        epochs: OVERFIT_MAX_EPOCHS,
        ..TrainConfig::default()
    };
    let mut best = f64::INFINITY;
    let mut reached_at = None;
    train(&cfg, &mut state, &TrainSet::flat(lines), None, &alphabet, None, |m| {
        assert!(m.mean_loss.is_finite(), "non-finite loss in epoch {}", m.epoch);
        best = best.min(m.train_cer);
        if m.train_cer < OVERFIT_TARGET_CER {
            reached_at = Some(m.epoch);
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .unwrap();
    assert!(state.params.all_finite() && state.velocity.all_finite());
    OverfitOutcome {
        classes: alphabet.len(),
        reached_at,
        best_cer: best,
        elapsed: start.elapsed(),
    }
}

/// Nine visually distinct letters of the stroke font's Arabic set.
pub const EFFECT_GLYPHS: &str = "ادرسعلمهو";
pub const EFFECT_EPOCHS: usize = 20;

#[derive(Debug)]
pub struct DecoderEffect {
    /// `(WER, CER)` per decoder: best path, dictionary at 1/e, dictionary at 1/sqrt(e).
    pub raw: (f64, f64),
    pub dict: (f64, f64),
    pub dict_enlarged: (f64, f64),
    pub train_lines: usize,
    pub test_lines: usize,
    pub vocabulary: usize,
    pub elapsed: Duration,
}

/// Trains on 500 lines drawn from a 200-word vocabulary and decodes 100
/// held-out lines of the same vocabulary three ways.
pub fn decoder_effect(seed: u64) -> DecoderEffect {
    let start = Instant::now();
    let cfg = SynthConfig {
        glyphs: EFFECT_GLYPHS.into(),
        words_per_line: (1, 1),
        word_length: (2, 5),
        seed,
        ..SynthConfig::default()
    };
    let mut r = rng(seed);
    let vocabulary = random_vocabulary(&cfg.letters(), 200, cfg.word_length, &mut r);
    let train_records = synth_corpus(&cfg, 500, 1, Some(&vocabulary), &mut r).unwrap();
    let test_records = synth_corpus(&cfg, 100, 1, Some(&vocabulary), &mut r).unwrap();
    let alphabet = Alphabet::derive(train_records.iter().map(|r| r.text.as_str())).unwrap();
    let train_set = TrainSet::flat(samples(&train_records, &alphabet));
    let test_set = samples(&test_records, &alphabet);

    let net = NetConfig::tiny(CellVariant::MdLeaky, alphabet.len());
    let mut state = TrainState::new(init_params_with_range(&net, seed, OVERFIT_INIT_RANGE).unwrap(), seed);
    let tc = TrainConfig {
        schedule: Schedule::constant(3e-3).unwrap(),
        epochs: EFFECT_EPOCHS,
        ..TrainConfig::default()
    };
    train(&tc, &mut state, &train_set, None, &alphabet, None, |_| ControlFlow::Continue(())).unwrap();

    let tree = Lexicon::new(vocabulary.iter().cloned()).index(&alphabet).unwrap();
    let run = |tree, cfg: &DecoderConfig| {
        let e = evaluate(&state.params, &test_set, &alphabet, tree, cfg).unwrap();
        (e.wer(), e.cer())
    };
    DecoderEffect {
        raw: run(None, &DecoderConfig::raw()),
        dict: run(Some(&tree), &DecoderConfig::with_theta(THETA_DEFAULT)),
        dict_enlarged: run(Some(&tree), &DecoderConfig::with_theta(THETA_ENLARGED)),
        train_lines: train_records.len(),
        test_lines: test_records.len(),
        vocabulary: vocabulary.len(),
        elapsed: start.elapsed(),
    }
}

/// Largest |s| over fuzzed MDLeaky lattices of up to 64x64 cells with weight
/// magnitudes up to 1e3.
pub fn fuzz_mdleaky(passes: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..passes {
        let (w, h) = (r.random_range(1..=64), r.random_range(1..=64));
        let shape = CellShape::new(r.random_range(1..=3), r.random_range(1..=3));
        let scale = 10f64.powf(r.random_range(-1.0..=3.0));
        let weights: Vec<f64> = (0..shape.param_count()).map(|_| r.random_range(-scale..=scale)).collect();
        let input: Vec<f64> = (0..w * h * shape.inputs).map(|_| r.random_range(-5.0..=5.0)).collect();
        let dir = Direction::ALL[r.random_range(0..4)];
        let trace = lattice_forward(CellVariant::MdLeaky, shape, &weights, &input, w, h, dir);
        let m = trace.max_abs_state();
        assert!(m.is_finite());
        worst = worst.max(m);
    }
    worst
}

/// One-unit MDLSTM whose forget gates are saturated open by +20 biases and
/// whose input gate admits tanh(20) at every cell.
pub fn saturated_mdlstm_peak(side: usize) -> f64 {
    let shape = CellShape::new(1, 1);
    let mut w = CellWeights::zeros(shape);
    for gate in [GATE_FORGET1, GATE_FORGET2, GATE_INPUT, GATE_CELL] {
        *w.bias_mut(gate, 0) = 20.0;
    }
    let input = vec![0.0; side * side];
    lattice_forward(CellVariant::MdLstm, shape, &w.data, &input, side, side, Direction::ALL[0]).max_abs_state()
}

/// Largest distance of the median curve from `row`, over the columns whose
/// whole median window lies inside the inked extent of the line. Nearer the
/// ends the window holds only one or two letters and follows their shapes.
pub fn interior_deviation(img: &GrayImage, cfg: &NormConfig, row: f64) -> f64 {
    let curve = estimate_median_curve(img, cfg);
    let inked: Vec<usize> = (0..img.width())
        .filter(|&x| (0..img.height()).any(|y| img.get(x, y) >= cfg.ink_threshold))
        .collect();
    let half = cfg.median_window / 2;
    let (Some(&first), Some(&last)) = (inked.first(), inked.last()) else {
        return 0.0;
    };
    let (a, b) = (first + half, last.saturating_sub(half).max(first + half));
    curve.values[a.min(img.width() - 1)..=b.min(img.width() - 1)]
        .iter()
        .map(|v| (v - row).abs())
        .fold(0.0, f64::max)
}

/// `(height, interior curve deviation from the baseline row, mean abs change
/// on re-application)` over wavy synthetic lines. Re-application runs at
/// scale 1 so both passes see the same geometry.
pub fn wavy_line_geometry(lines: u64) -> Vec<(usize, f64, f64)> {
    let cfg = NormConfig::default();
    let unscaled = NormConfig { scale: 1.0, ..NormConfig::default() };
    let row = (cfg.baseline_row() * cfg.scale).floor();
    (0..lines)
        .map(|seed| {
            let raw = wavy_line(seed);
            let out = preprocess_line(&raw, &cfg);
            let deviation = interior_deviation(&out, &cfg, row);
            let once = preprocess_line(&raw, &unscaled);
            let twice = preprocess_line(&once, &unscaled);
            assert_eq!((once.width(), once.height()), (twice.width(), twice.height()), "line {seed}");
            (out.height(), deviation, once.mean_abs_diff(&twice))
        })
        .collect()
}

/// `(variant, epoch, rate)` at both sides of every schedule boundary.
pub const BOUNDARIES: &[(Variant, usize, f64)] = &[
    (Variant::S, 1, 1e-3),
    (Variant::S, 44, 1e-3),
    (Variant::S, 45, 5e-4),
    (Variant::S, 60, 5e-4),
    (Variant::S, 61, 2e-4),
    (Variant::S, 198, 2e-4),
    (Variant::S, 199, 1e-4),
    (Variant::S, 228, 1e-4),
    (Variant::S, 229, 5e-5),
    (Variant::S, 283, 5e-5),
    (Variant::S, 284, 5e-5),
    (Variant::S, 10_000, 5e-5),
    (Variant::L, 1, 1e-3),
    (Variant::L, 44, 1e-3),
    (Variant::L, 45, 5e-4),
    (Variant::L, 61, 2e-4),
    (Variant::L, 198, 2e-4),
    (Variant::L, 199, 1e-4),
    (Variant::L, 250, 1e-4),
    (Variant::L, 276, 1e-4),
    (Variant::L, 277, 5e-5),
    (Variant::L, 278, 5e-5),
];

/// Largest deviation of two constant-gradient momentum steps from the
/// closed form `p - r g (1 + 1.9)`.
pub fn two_step_momentum_error() -> f64 {
    let cfg = NetConfig::tiny(CellVariant::MdLeaky, 3);
    let params = init_params(&cfg, 4).unwrap();
    let mut grads = params.zeros_like();
    for (i, g) in grads.data.iter_mut().enumerate() {
        *g = ((i % 13) as f64 - 6.0) / 7.0;
    }
    let rate = 1e-3;
    let mut state = TrainState::new(params.clone(), 0);
    sgd_step(&mut state, &grads, rate, 0.9).unwrap();
    sgd_step(&mut state, &grads, rate, 0.9).unwrap();
    params
        .data
        .iter()
        .zip(&grads.data)
        .zip(&state.params.data)
        .map(|((p, g), got)| (p - rate * g * (1.0 + 1.9) - got).abs())
        .fold(0.0, f64::max)
}

/// Pearson statistic of the line picked on a 4-line page over `epochs` epochs.
pub fn sampling_chi_square(epochs: usize) -> f64 {
    let mut counts = [0usize; 4];
    for e in 1..=epochs {
        let picks = sample_epoch(&[4], &mut epoch_rng(11, e)).unwrap();
        counts[picks[0].1] += 1;
    }
    let expected = epochs as f64 / 4.0;
    counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
}

/// Upper 0.001 quantile of the chi-square distribution with 3 degrees of freedom.
pub const CHI2_3_999: f64 = 16.266;

fn expect(problems: &mut Vec<String>, ok: bool, what: impl Into<String>) {
    if !ok {
        problems.push(what.into());
    }
}

/// Round-trips every file format through a temporary directory and feeds
/// each loader corrupted input. Returns the failed checks.
pub fn format_problems() -> Vec<String> {
    use argus_core::checkpoint::{self, TrainBlock};
    use argus_core::dataset::{load_corpus, save_corpus};
    use argus_core::Error;
    use std::fs;

    let mut problems = Vec::new();
    let p = &mut problems;
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // checkpoint, with and without the training block
    let cfg = NetConfig::tiny(CellVariant::MdLstm, 5);
    let mut params = init_params(&cfg, 3).unwrap();
    params.data[0] = f64::MIN_POSITIVE / 3.0;
    params.data[1] = -0.0;
    let block = TrainBlock {
        epoch: 17,
        seed: u64::MAX,
        velocity: params.data.iter().map(|v| v * -1e-3).collect(),
    };
    let bits = |d: &[f64]| d.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    for train in [None, Some(&block)] {
        let path = root.join("model.ckpt");
        checkpoint::save(&path, &params, train).unwrap();
        let bytes = fs::read(&path).unwrap();
        match checkpoint::load(&path) {
            Ok((back, t)) => {
                expect(p, back.config == params.config, "checkpoint config");
                expect(p, bits(&back.data) == bits(&params.data), "checkpoint tensors");
                expect(p, t.as_ref() == train, "checkpoint training block");
                expect(p, checkpoint::encode(&back, t.as_ref()) == bytes, "checkpoint bytes");
            }
            Err(e) => p.push(format!("checkpoint load: {e}")),
        }
    }
    let good = checkpoint::encode(&params, Some(&block));
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    expect(p, matches!(checkpoint::decode(&bad_magic), Err(Error::BadMagic)), "corrupted magic");
    let mut bad_version = good.clone();
    bad_version[4] = 9;
    expect(p, matches!(checkpoint::decode(&bad_version), Err(Error::VersionMismatch { found: 9, .. })), "version mismatch");
    let cut = good.len() / 2;
    expect(p, matches!(checkpoint::decode(&good[..cut]), Err(Error::Truncated { .. })), "truncated mid-tensor");

    // corpus
    let synth = SynthConfig::default();
    let mut r = rng(4);
    let records = synth_corpus(&synth, 3, 2, None, &mut r).unwrap();
    let corpus_dir = root.join("corpus");
    match save_corpus(&corpus_dir, &records).and_then(|c| c.records()) {
        Ok(back) => {
            expect(p, back.len() == records.len(), "corpus line count");
            for (a, b) in records.iter().zip(&back) {
                expect(p, (&a.page, &a.line, &a.text) == (&b.page, &b.line, &b.text), "corpus transcript");
                expect(p, a.image.quantized() == b.image, format!("corpus image {}/{}", a.page, a.line));
            }
            let tsv = fs::read(corpus_dir.join("transcripts.tsv")).unwrap();
            let again = root.join("again");
            save_corpus(&again, &back).unwrap();
            expect(p, fs::read(again.join("transcripts.tsv")).unwrap() == tsv, "transcripts bytes");
            for r in &back {
                let rel = format!("pages/{}/{}.pgm", r.page, r.line);
                expect(p, fs::read(again.join(&rel)).unwrap() == fs::read(corpus_dir.join(&rel)).unwrap(), format!("{rel} bytes"));
            }
        }
        Err(e) => p.push(format!("corpus round trip: {e}")),
    }
    let empty = root.join("empty");
    fs::create_dir(&empty).unwrap();
    expect(p, load_corpus(&empty).map(|c| c.is_empty()).unwrap_or(false), "empty directory is an empty corpus");
    let tsv = corpus_dir.join("transcripts.tsv");
    let original = fs::read_to_string(&tsv).unwrap();
    for (label, content, needle) in [
        ("missing image", format!("{original}p00009\tl000\tghost\n"), "p00009/l000"),
        ("malformed row", format!("{original}p00000 l000 no tabs\n"), ":7:"),
        ("duplicate key", format!("{original}p00000\tl000\tagain\n"), "duplicate"),
    ] {
        fs::write(&tsv, content).unwrap();
        match load_corpus(&corpus_dir) {
            Err(Error::Corpus(msg)) => expect(p, msg.contains(needle), format!("{label}: {msg}")),
            other => p.push(format!("{label}: {other:?}")),
        }
    }
    fs::write(&tsv, original).unwrap();
    let image = corpus_dir.join("pages/p00000/l000.pgm");
    fs::write(&image, b"P2\n1 1\n255\n0\n").unwrap();
    expect(p, matches!(GrayImage::load_pgm(&image), Err(Error::Pgm(_))), "corrupted image");

    // lexicon and alphabet
    let lex = Lexicon::new(["كتاب", "zebra", "abc", "abc"]);
    let lex_path = root.join("words.txt");
    lex.save(&lex_path).unwrap();
    let lex_bytes = fs::read(&lex_path).unwrap();
    let lex_back = Lexicon::load(&lex_path).unwrap();
    expect(p, lex_back == lex && lex_back.len() == 3, "lexicon round trip");
    lex_back.save(&lex_path).unwrap();
    expect(p, fs::read(&lex_path).unwrap() == lex_bytes, "lexicon bytes");

    let alphabet = Alphabet::derive(["ab ...", "كتاب"]).unwrap();
    let alpha_path = root.join("alphabet.txt");
    alphabet.save(&alpha_path).unwrap();
    let alpha_bytes = fs::read(&alpha_path).unwrap();
    match Alphabet::load(&alpha_path) {
        Ok(back) => {
            expect(p, back == alphabet, "alphabet round trip");
            back.save(&alpha_path).unwrap();
            expect(p, fs::read(&alpha_path).unwrap() == alpha_bytes, "alphabet bytes");
        }
        Err(e) => p.push(format!("alphabet load: {e}")),
    }
    fs::write(&alpha_path, "<blank>\na\nb\na\n \n").unwrap();
    expect(p, matches!(Alphabet::load(&alpha_path), Err(Error::Alphabet(m)) if m.contains("duplicate")), "duplicate alphabet class");
    fs::write(&alpha_path, "").unwrap();
    expect(p, matches!(Alphabet::load(&alpha_path), Err(Error::Alphabet(_))), "empty alphabet file");
    problems
}

/// Compares CTC loss and gradient with [`brute_force_ctc`] on fuzzed
/// instances (T <= 6, at most 3 letters); panics on the first mismatch
/// beyond 1e-9. Returns the feasible and infeasible instance counts.
pub fn ctc_oracle(instances: usize, seed: u64) -> (usize, usize) {
    let mut r = rng(seed);
    let (mut feasible, mut infeasible) = (0, 0);
    for case in 0..instances {
        let frames = r.random_range(1..=6);
        let letters = r.random_range(1..=3);
        let probs = random_probs(&mut r, frames, letters + 1, 1.5);
        let len = r.random_range(0..=frames);
        let target: Vec<usize> = (0..len).map(|_| r.random_range(1..=letters)).collect();

        match (brute_force_ctc(&probs, &target), ctc_loss_grad(&probs, &target)) {
            (Some((loss, grad)), Ok(out)) => {
                feasible += 1;
                assert!((out.loss - loss).abs() <= 1e-9 * loss.abs().max(1.0), "case {case}: loss {} vs {loss}", out.loss);
                for (i, (a, b)) in out.grad.iter().zip(&grad).enumerate() {
                    assert!((a - b).abs() <= 1e-9, "case {case}: gradient {i}: {a} vs {b}");
                }
            }
            (None, Err(argus_core::Error::InfeasibleTarget { required, .. })) => {
                infeasible += 1;
                assert_eq!(required, min_frames(&target));
            }
            (oracle, ours) => panic!("case {case}: oracle {oracle:?}, implementation {ours:?}"),
        }
    }
    (feasible, infeasible)
}

pub fn oracle_alphabet() -> Alphabet {
    Alphabet::new(["a", "b", "c", " "]).unwrap()
}

/// Up to 100 words of 1 to 4 letters over {a, b, c}.
pub fn random_lexicon(r: &mut impl Rng) -> Lexicon {
    let size = r.random_range(1..=100);
    let words = (0..size).map(|_| {
        let len = r.random_range(1..=4);
        (0..len).map(|_| *['a', 'b', 'c'].choose(r).unwrap()).collect::<String>()
    });
    Lexicon::new(words)
}

/// Compares [`word_viterbi`] with [`exhaustive_best_word`] on fuzzed
/// instances (T <= 8); panics on a mismatch. Returns how many instances had
/// a feasible word.
pub fn viterbi_oracle(instances: usize, seed: u64) -> usize {
    let a = oracle_alphabet();
    let mut r = rng(seed);
    let mut matched = 0;
    for case in 0..instances {
        let lex = random_lexicon(&mut r);
        let tree = lex.index(&a).unwrap();
        let frames = r.random_range(1..=8);
        let spread = r.random_range(0.5..3.0);
        let probs = random_probs(&mut r, frames, a.output_size(), spread);
        match (exhaustive_best_word(&probs, &lex, &a), word_viterbi(&probs, &tree).unwrap()) {
            (None, None) => {}
            (Some((word, p)), Some(m)) => {
                matched += 1;
                assert_eq!(m.word, word, "case {case}");
                assert!((m.log_prob - p.ln()).abs() <= 1e-9, "case {case}: {} vs {}", m.log_prob, p.ln());
                let score = p.powf(1.0 / frames as f64);
                assert!((m.score - score).abs() <= 1e-12, "case {case}");
            }
            (oracle, ours) => panic!("case {case}: oracle {oracle:?}, viterbi {ours:?}"),
        }
    }
    matched
}

/// Checks that [`decode_segment`] returns the exhaustive best word exactly
/// when its per-frame geometric mean reaches `theta`, and the best path
/// otherwise; panics on a violation. Returns `(corrections, fallbacks)`,
/// where a correction is a kept word that differs from the best path.
pub fn fallback_oracle(theta: f64, instances: usize, seed: u64) -> (usize, usize) {
    let a = oracle_alphabet();
    let cfg = DecoderConfig::with_theta(theta);
    let mut r = rng(seed);
    let (mut kept, mut fell_back) = (0, 0);
    for case in 0..instances {
        let lex = random_lexicon(&mut r);
        let tree = lex.index(&a).unwrap();
        let frames = r.random_range(1..=8);
        let spread = r.random_range(1.0..6.0);
        let probs = random_probs(&mut r, frames, a.output_size(), spread);
        let raw = best_path(&probs, &a);
        let out = decode_segment(&probs, &a, Some(&tree), &cfg).unwrap();
        match exhaustive_best_word(&probs, &lex, &a) {
            Some((word, p)) if p.powf(1.0 / frames as f64) >= theta => {
                assert_eq!(out, word, "theta {theta} case {case}");
                kept += usize::from(word != raw);
            }
            _ => {
                assert_eq!(out, raw, "theta {theta} case {case}");
                fell_back += 1;
            }
        }
    }
    (kept, fell_back)
}
