//! Momentum SGD, the learning-rate schedules, per-page line sampling and the
//! training/evaluation loops.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::alphabet::Alphabet;
use crate::checkpoint::{self, TrainBlock};
use crate::ctc::ctc_loss_grad;
use crate::decoder::{best_path, decode_line, reorder_line, DecoderConfig};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::lexicon::PrefixTree;
use crate::metrics::EditCounts;
use crate::network::{backward_into, forward, posteriors, NetParams};
use crate::preprocess::{preprocess_line, NormConfig};

pub const MOMENTUM: f64 = 0.9;
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const METRICS_HEADER: &str = "epoch,lr,mean_loss,train_cer,val_cer";

/// Network label selecting the learning-rate tail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    S,
    L,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "s" => Ok(Variant::S),
            "l" => Ok(Variant::L),
            other => Err(format!("unknown schedule variant {other:?} (expected s or l)")),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::S => "s",
            Variant::L => "l",
        })
    }
}

/// Inclusive epoch range with its learning rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub first: usize,
    pub last: usize,
    pub rate: f64,
}

/// Piecewise-constant learning rate over epochs; the last rate persists past
/// the final segment.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub label: String,
    segments: Vec<Segment>,
}

impl Schedule {
    pub fn new(label: impl Into<String>, segments: Vec<Segment>) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if segments.is_empty() {
            return bad("schedule needs at least one segment".into());
        }
        let mut next = 1;
        for s in &segments {
            if s.first != next || s.last < s.first {
                return bad(format!("schedule segment {}..{} is not contiguous from epoch {next}", s.first, s.last));
            }
            if !(s.rate > 0.0 && s.rate.is_finite()) {
                return bad(format!("learning rate {} must be positive", s.rate));
            }
            next = s.last + 1;
        }
        Ok(Schedule {
            label: label.into(),
            segments,
        })
    }

    pub fn variant(v: Variant) -> Self {
        let seg = |first, last, rate| Segment { first, last, rate };
        let mut segments = vec![seg(1, 44, 1e-3), seg(45, 60, 5e-4), seg(61, 198, 2e-4)];
        match v {
            Variant::S => segments.extend([seg(199, 228, 1e-4), seg(229, 283, 5e-5)]),
            Variant::L => segments.extend([seg(199, 276, 1e-4), seg(277, 277, 5e-5)]),
        }
        Schedule::new(v.to_string(), segments).expect("built-in schedule")
    }

    pub fn constant(rate: f64) -> Result<Self> {
        Schedule::new(
            format!("constant {rate}"),
            vec![Segment {
                first: 1,
                last: 1,
                rate,
            }],
        )
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Last epoch covered by an explicit segment.
    pub fn final_epoch(&self) -> usize {
        self.segments.last().expect("non-empty").last
    }

    pub fn rate(&self, epoch: usize) -> Result<f64> {
        schedule_lr(self, epoch)
    }
}

pub fn schedule_lr(s: &Schedule, epoch: usize) -> Result<f64> {
    if epoch < 1 {
        return Err(Error::InvalidEpoch(epoch));
    }
    let seg = s
        .segments
        .iter()
        .find(|seg| epoch <= seg.last)
        .unwrap_or_else(|| s.segments.last().expect("non-empty"));
    Ok(seg.rate)
}

/// Parameters, momentum buffer and position in the run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: NetParams,
    pub velocity: NetParams,
    /// Number of completed epochs.
    pub epoch: usize,
    pub seed: u64,
}

impl TrainState {
    pub fn new(params: NetParams, seed: u64) -> Self {
        TrainState {
            velocity: params.zeros_like(),
            params,
            epoch: 0,
            seed,
        }
    }

    /// Rebuilds a state from a checkpoint; a bare parameter file restarts at
    /// epoch 0 with `seed`.
    pub fn from_checkpoint(params: NetParams, train: Option<TrainBlock>, seed: u64) -> Result<Self> {
        match train {
            None => Ok(TrainState::new(params, seed)),
            Some(t) => {
                if t.velocity.len() != params.len() {
                    return Err(Error::Checkpoint(format!(
                        "velocity has {} entries but the network has {} parameters",
                        t.velocity.len(),
                        params.len()
                    )));
                }
                Ok(TrainState {
                    velocity: NetParams {
                        config: params.config.clone(),
                        data: t.velocity,
                    },
                    params,
                    epoch: t.epoch as usize,
                    seed: t.seed,
                })
            }
        }
    }

    pub fn train_block(&self) -> TrainBlock {
        TrainBlock {
            epoch: self.epoch as u64,
            seed: self.seed,
            velocity: self.velocity.data.clone(),
        }
    }

    pub fn load(path: impl AsRef<Path>, seed: u64) -> Result<Self> {
        let (params, train) = checkpoint::load(path)?;
        TrainState::from_checkpoint(params, train, seed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        checkpoint::save(path, &self.params, Some(&self.train_block()))
    }
}

fn first_non_finite(values: &NetParams, what: &str, epoch: usize) -> Result<()> {
    if let Some(i) = values.data.iter().position(|v| !v.is_finite()) {
        let layout = values.config.layout();
        let tensor = layout.block_of(i).map(|b| b.name()).unwrap_or_else(|| "?".into());
        return Err(Error::NonFinite {
            tensor: format!("{what} of {tensor} (index {i})"),
            epoch,
        });
    }
    Ok(())
}

/// `v <- momentum * v - rate * g; p <- p + v`. Non-finite gradients are
/// rejected before anything is modified; the error names the tensor and the
/// epoch in progress.
pub fn sgd_step(state: &mut TrainState, grads: &NetParams, rate: f64, momentum: f64) -> Result<()> {
    if grads.len() != state.params.len() {
        return Err(Error::Shape(format!(
            "gradient has {} entries, parameters {}",
            grads.len(),
            state.params.len()
        )));
    }
    first_non_finite(grads, "gradient", state.epoch + 1)?;
    for ((p, v), g) in state.params.data.iter_mut().zip(&mut state.velocity.data).zip(&grads.data) {
        *v = momentum * *v - rate * g;
        *p += *v;
    }
    Ok(())
}

/// Clamps every component to `[-limit, limit]`, returning how many changed.
pub fn clip_gradient(grads: &mut NetParams, limit: f64) -> usize {
    let mut clipped = 0;
    for g in &mut grads.data {
        if g.abs() > limit {
            *g = g.clamp(-limit, limit);
            clipped += 1;
        }
    }
    clipped
}

/// One uniformly chosen line per page, in shuffled page order, as
/// `(page, line)` indices. `line_counts[i]` is the number of lines of page `i`.
pub fn sample_epoch(line_counts: &[usize], rng: &mut impl Rng) -> Result<Vec<(usize, usize)>> {
    if let Some(p) = line_counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyPage { page: p.to_string() });
    }
    let mut picks: Vec<(usize, usize)> = line_counts
        .iter()
        .enumerate()
        .map(|(p, &n)| (p, rng.random_range(0..n)))
        .collect();
    picks.shuffle(rng);
    Ok(picks)
}

/// RNG of one epoch, independent of how many epochs ran before it.
pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

/// A preprocessed line ready for training or evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    /// Transcript in logical order.
    pub text: String,
    pub writing: GrayImage,
    /// Class labels of the transcript in spatial order.
    pub target: Vec<usize>,
}

impl Sample {
    pub fn new(id: impl Into<String>, text: impl Into<String>, writing: GrayImage, alphabet: &Alphabet) -> Result<Self> {
        let text = text.into();
        let target = alphabet.encode(&reorder_line(&text))?;
        Ok(Sample {
            id: id.into(),
            text,
            writing,
            target,
        })
    }

    /// Preprocesses a raw line image (or takes it as is when `norm` is `None`).
    pub fn from_raw(
        id: impl Into<String>,
        text: impl Into<String>,
        image: &GrayImage,
        norm: Option<&NormConfig>,
        alphabet: &Alphabet,
    ) -> Result<Self> {
        let writing = match norm {
            Some(cfg) => preprocess_line(image, cfg),
            None => image.clone(),
        };
        Sample::new(id, text, writing, alphabet)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainPage {
    pub id: String,
    pub lines: Vec<Sample>,
}

/// Training set grouped by page.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainSet {
    pub pages: Vec<TrainPage>,
}

impl TrainSet {
    /// One page per sample.
    pub fn flat(samples: Vec<Sample>) -> Self {
        TrainSet {
            pages: samples
                .into_iter()
                .map(|s| TrainPage {
                    id: s.id.clone(),
                    lines: vec![s],
                })
                .collect(),
        }
    }

    pub fn line_counts(&self) -> Vec<usize> {
        self.pages.iter().map(|p| p.lines.len()).collect()
    }

    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.pages.iter().flat_map(|p| p.lines.iter())
    }

    pub fn sample_epoch(&self, rng: &mut impl Rng) -> Result<Vec<&Sample>> {
        let picks = sample_epoch(&self.line_counts(), rng).map_err(|e| match e {
            Error::EmptyPage { page } => Error::EmptyPage {
                page: self.pages[page.parse::<usize>().expect("index")].id.clone(),
            },
            e => e,
        })?;
        Ok(picks.into_iter().map(|(p, l)| &self.pages[p].lines[l]).collect())
    }
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub schedule: Schedule,
    /// Train until this many epochs are complete.
    pub epochs: usize,
    pub momentum: f64,
    /// Per-component gradient clamp; `None` disables clipping.
    pub clip: Option<f64>,
    /// Accumulate the gradients of an epoch (in parallel) and step once.
    pub batch: bool,
    /// Abort when more than this fraction of an epoch's lines is infeasible.
    pub max_infeasible: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            schedule: Schedule::variant(Variant::S),
            epochs: 283,
            momentum: MOMENTUM,
            clip: Some(1.0),
            batch: false,
            max_infeasible: 0.01,
        }
    }
}

/// One row of the metrics log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub train_cer: f64,
    pub val_cer: Option<f64>,
    pub infeasible: usize,
    pub clipped: usize,
}

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        let val = self.val_cer.map(|v| format!("{v:.6}")).unwrap_or_default();
        format!("{},{:e},{:.9},{:.6},{}", self.epoch, self.lr, self.mean_loss, self.train_cer, val)
    }
}

struct LineResult {
    loss: f64,
    counts: EditCounts,
    grads: Option<NetParams>,
}

/// Forward, CTC and (optionally) backward for one line. `Ok(None)` means the
/// target does not fit into the available frames.
fn line_pass(sample: &Sample, params: &NetParams, alphabet: &Alphabet, grads: Option<&mut NetParams>) -> Result<Option<(f64, EditCounts)>> {
    let cache = forward(&sample.writing, params)?;
    let hyp = best_path(&cache.probs, alphabet);
    let counts = EditCounts::of(&hyp, &alphabet.decode(&sample.target));
    let out = match ctc_loss_grad(&cache.probs, &sample.target) {
        Ok(o) => o,
        Err(Error::InfeasibleTarget { .. }) => {
            log::warn!("line {}: transcript does not fit into {} frames", sample.id, cache.frames());
            return Ok(None);
        }
        Err(e) => return Err(e),
    };
    if let Some(g) = grads {
        backward_into(&cache, params, &out.grad, g)?;
    }
    Ok(Some((out.loss, counts)))
}

fn run_epoch(state: &mut TrainState, lines: &[&Sample], alphabet: &Alphabet, cfg: &TrainConfig, lr: f64) -> Result<EpochMetrics> {
    let epoch = state.epoch + 1;
    let mut results = Vec::with_capacity(lines.len());
    let mut clipped = 0;
    if cfg.batch {
        let params = &state.params;
        let per_line: Vec<Result<Option<LineResult>>> = lines
            .par_iter()
            .map(|s| {
                let mut g = params.zeros_like();
                Ok(line_pass(s, params, alphabet, Some(&mut g))?.map(|(loss, counts)| LineResult {
                    loss,
                    counts,
                    grads: Some(g),
                }))
            })
            .collect();
        let mut total = state.params.zeros_like();
        for r in per_line {
            if let Some(mut r) = r? {
                total.add_assign(r.grads.as_ref().expect("batch gradient"));
                r.grads = None;
                results.push(r);
            } else {
                results.push(LineResult {
                    loss: f64::NAN,
                    counts: EditCounts::default(),
                    grads: None,
                });
            }
        }
        if let Some(limit) = cfg.clip {
            clipped += clip_gradient(&mut total, limit);
        }
        sgd_step(state, &total, lr, cfg.momentum)?;
    } else {
        let mut g = state.params.zeros_like();
        for s in lines {
            g.data.iter_mut().for_each(|v| *v = 0.0);
            match line_pass(s, &state.params, alphabet, Some(&mut g))? {
                Some((loss, counts)) => {
                    if let Some(limit) = cfg.clip {
                        clipped += clip_gradient(&mut g, limit);
                    }
                    sgd_step(state, &g, lr, cfg.momentum)?;
                    results.push(LineResult { loss, counts, grads: None });
                }
                None => results.push(LineResult {
                    loss: f64::NAN,
                    counts: EditCounts::default(),
                    grads: None,
                }),
            }
        }
    }

    let infeasible = results.iter().filter(|r| r.loss.is_nan()).count();
    if infeasible as f64 > cfg.max_infeasible * lines.len() as f64 {
        return Err(Error::TooManyInfeasible {
            infeasible,
            total: lines.len(),
            epoch,
        });
    }
    first_non_finite(&state.params, "parameters", epoch)?;
    first_non_finite(&state.velocity, "velocity", epoch)?;
    if clipped > 0 {
        log::debug!("epoch {epoch}: clipped {clipped} gradient components");
    }

    let feasible: Vec<&LineResult> = results.iter().filter(|r| !r.loss.is_nan()).collect();
    let mut counts = EditCounts::default();
    feasible.iter().for_each(|r| counts.add(r.counts));
    let mean_loss = if feasible.is_empty() {
        f64::NAN
    } else {
        feasible.iter().map(|r| r.loss).sum::<f64>() / feasible.len() as f64
    };
    state.epoch = epoch;
    Ok(EpochMetrics {
        epoch,
        lr,
        mean_loss,
        train_cer: counts.cer(),
        val_cer: None,
        infeasible,
        clipped,
    })
}

/// Where a run writes its checkpoint and metrics log.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(RunDir { root })
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.root.join(CHECKPOINT_FILE)
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join(METRICS_FILE)
    }

    /// Rewrites the metrics log keeping the rows of epochs `<= completed`.
    fn reset_metrics(&self, completed: usize) -> Result<()> {
        let path = self.metrics();
        let mut out = format!("{METRICS_HEADER}\n");
        if completed > 0 {
            if let Ok(old) = fs::read_to_string(&path) {
                for row in old.lines().skip(1) {
                    let epoch = row.split(',').next().and_then(|e| e.parse::<usize>().ok());
                    if epoch.is_some_and(|e| e <= completed) {
                        out.push_str(row);
                        out.push('\n');
                    }
                }
            }
        }
        fs::write(&path, out).map_err(|e| Error::io(&path, e))
    }

    fn append_metrics(&self, m: &EpochMetrics) -> Result<()> {
        let path = self.metrics();
        let mut f = fs::OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        writeln!(f, "{}", m.csv_row()).map_err(|e| Error::io(&path, e))
    }

    fn save_state(&self, state: &TrainState) -> Result<()> {
        let path = self.checkpoint();
        let tmp = path.with_extension("ckpt.tmp");
        state.save(&tmp)?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}

/// Online (or batch) training from `state.epoch + 1` up to `cfg.epochs`.
/// After every epoch the metrics row is appended and the checkpoint
/// rewritten when `run` is given. `observe` may stop the run early.
pub fn train(
    cfg: &TrainConfig,
    state: &mut TrainState,
    data: &TrainSet,
    validation: Option<&[Sample]>,
    alphabet: &Alphabet,
    run: Option<&RunDir>,
    mut observe: impl FnMut(&EpochMetrics) -> ControlFlow<()>,
) -> Result<Vec<EpochMetrics>> {
    if alphabet.len() != state.params.config.alphabet_size {
        return Err(Error::Shape(format!(
            "alphabet has {} classes but the network expects {}",
            alphabet.len(),
            state.params.config.alphabet_size
        )));
    }
    if let Some(r) = run {
        r.reset_metrics(state.epoch)?;
    }
    let mut history = Vec::new();
    while state.epoch < cfg.epochs {
        let epoch = state.epoch + 1;
        let lr = cfg.schedule.rate(epoch)?;
        let mut rng = epoch_rng(state.seed, epoch);
        let lines = data.sample_epoch(&mut rng)?;
        let mut m = run_epoch(state, &lines, alphabet, cfg, lr)?;
        if let Some(val) = validation.filter(|v| !v.is_empty()) {
            m.val_cer = Some(evaluate(&state.params, val, alphabet, None, &DecoderConfig::raw())?.cer());
        }
        log::info!(
            "epoch {} lr {:e} loss {:.4} train CER {:.2}{}",
            m.epoch,
            m.lr,
            m.mean_loss,
            m.train_cer,
            m.val_cer.map(|v| format!(" val CER {v:.2}")).unwrap_or_default()
        );
        if let Some(r) = run {
            r.save_state(state)?;
            r.append_metrics(&m)?;
        }
        history.push(m);
        if observe(&m).is_break() {
            break;
        }
    }
    Ok(history)
}

/// Decoding result of one evaluated line.
#[derive(Clone, Debug, PartialEq)]
pub struct LineReport {
    pub id: String,
    pub hypothesis: String,
    pub reference: String,
    pub counts: EditCounts,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub total: EditCounts,
    pub lines: Vec<LineReport>,
}

impl Evaluation {
    pub fn wer(&self) -> f64 {
        self.total.wer()
    }

    pub fn cer(&self) -> f64 {
        self.total.cer()
    }
}

/// Decodes every line (in parallel) and scores it against its transcript.
pub fn evaluate(
    params: &NetParams,
    lines: &[Sample],
    alphabet: &Alphabet,
    tree: Option<&PrefixTree>,
    cfg: &DecoderConfig,
) -> Result<Evaluation> {
    if lines.is_empty() {
        return Err(Error::EmptyReference);
    }
    let hyps: Vec<String> = lines
        .par_iter()
        .map(|s| decode_line(&posteriors(&s.writing, params)?, alphabet, tree, cfg))
        .collect::<Result<_>>()?;
    Ok(score(lines.iter().map(|s| (s.id.as_str(), s.text.as_str())).zip(hyps)))
}

/// Scores `((id, reference), hypothesis)` triples.
pub fn score<'a>(pairs: impl IntoIterator<Item = ((&'a str, &'a str), String)>) -> Evaluation {
    let mut total = EditCounts::default();
    let lines = pairs
        .into_iter()
        .map(|((id, reference), hypothesis)| {
            let counts = EditCounts::of(&hypothesis, reference);
            total.add(counts);
            LineReport {
                id: id.to_string(),
                hypothesis,
                reference: reference.to_string(),
                counts,
            }
        })
        .collect();
    Evaluation { total, lines }
}
