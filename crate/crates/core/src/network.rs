//! Hierarchical multi-directional recurrent network.
//!
//! A writing is cut into input tiles, then passes through a stack of levels.
//! Each level runs a recurrent lattice in all four scanning directions (with
//! untied weights), sums the four activation grids, and, except for the last
//! level, feeds the sum through a `tanh` feedforward layer that subsamples by
//! the level's tile. The last level's activations are summed over the
//! vertical axis, giving one feature vector per horizontal position, and an
//! affine output layer with a per-frame softmax yields the posteriors.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cells::{lattice_backward, lattice_forward, CellShape, CellVariant, Direction, LatticeTrace};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::probs::ProbMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub cell: CellVariant,
    /// Input tile `(width, height)` in pixels.
    pub input_tile: (usize, usize),
    /// Recurrent units per level.
    pub levels: Vec<usize>,
    /// Feedforward units between consecutive levels.
    pub feedforward: Vec<usize>,
    /// Subsampling tile `(width, height)` of each feedforward layer.
    pub subsample: Vec<(usize, usize)>,
    /// Number of character classes, excluding the blank.
    pub alphabet_size: usize,
}

impl NetConfig {
    /// Full-size hierarchy: 3/15/75 recurrent and 9/30 feedforward units.
    pub fn standard(cell: CellVariant, alphabet_size: usize) -> Self {
        NetConfig {
            cell,
            input_tile: (2, 2),
            levels: vec![3, 15, 75],
            feedforward: vec![9, 30],
            subsample: vec![(2, 2), (2, 2)],
            alphabet_size,
        }
    }

    /// Desk-scale hierarchy used for gradient checks and overfitting runs.
    pub fn tiny(cell: CellVariant, alphabet_size: usize) -> Self {
        NetConfig {
            cell,
            input_tile: (2, 2),
            levels: vec![2, 3, 4],
            feedforward: vec![3, 4],
            subsample: vec![(2, 2), (2, 2)],
            alphabet_size,
        }
    }

    pub fn output_size(&self) -> usize {
        self.alphabet_size + 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.levels.is_empty() {
            return bad("at least one recurrent level is required".into());
        }
        if self.feedforward.len() + 1 != self.levels.len() {
            return bad(format!(
                "{} levels need {} feedforward layers, got {}",
                self.levels.len(),
                self.levels.len() - 1,
                self.feedforward.len()
            ));
        }
        if self.subsample.len() != self.feedforward.len() {
            return bad("one subsampling tile per feedforward layer is required".into());
        }
        if self.input_tile.0 == 0 || self.input_tile.1 == 0 {
            return bad("input tile must be non-empty".into());
        }
        if self.subsample.iter().any(|&(w, h)| w == 0 || h == 0) {
            return bad("subsampling tiles must be non-empty".into());
        }
        if self.levels.iter().chain(&self.feedforward).any(|&n| n == 0) {
            return bad("layer sizes must be positive".into());
        }
        if self.alphabet_size == 0 {
            return bad("alphabet must hold at least one class".into());
        }
        Ok(())
    }

    /// Input features of the recurrent layer at `level`.
    fn level_inputs(&self, level: usize) -> usize {
        if level == 0 {
            self.input_tile.0 * self.input_tile.1
        } else {
            self.feedforward[level - 1]
        }
    }

    pub fn cell_shape(&self, level: usize) -> CellShape {
        CellShape::new(self.level_inputs(level), self.levels[level])
    }

    /// `(inputs, outputs)` of the feedforward layer after `level`.
    pub fn ff_shape(&self, level: usize) -> (usize, usize) {
        let (sw, sh) = self.subsample[level];
        (sw * sh * self.levels[level], self.feedforward[level])
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self)
    }

    /// Total trainable parameters, as a closed form over the configuration.
    pub fn param_count(&self) -> usize {
        let cells: usize = (0..self.levels.len())
            .map(|l| 4 * self.cell_shape(l).param_count())
            .sum();
        let ff: usize = (0..self.feedforward.len())
            .map(|l| {
                let (i, o) = self.ff_shape(l);
                o * i + o
            })
            .sum();
        let last = *self.levels.last().unwrap();
        cells + ff + self.output_size() * last + self.output_size()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorKind {
    Cell { level: usize, dir: usize },
    FeedForward { level: usize },
    Output,
}

/// One named parameter block inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorBlock {
    pub kind: TensorKind,
    pub range: Range<usize>,
    /// Absolute range of the bias entries inside `range`.
    pub bias: Range<usize>,
}

impl TensorBlock {
    pub fn name(&self) -> String {
        match self.kind {
            TensorKind::Cell { level, dir } => {
                let d = Direction::ALL[dir];
                format!("level{}.cell[{:+},{:+}]", level + 1, d.dx, d.dy)
            }
            TensorKind::FeedForward { level } => format!("level{}.feedforward", level + 1),
            TensorKind::Output => "output".into(),
        }
    }
}

/// Parameter blocks in declaration order: per level the four direction cells
/// and the following feedforward layer, then the output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub blocks: Vec<TensorBlock>,
    pub total: usize,
}

impl Layout {
    fn new(cfg: &NetConfig) -> Self {
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut push = |kind, len: usize, bias_len: usize| {
            blocks.push(TensorBlock {
                kind,
                range: offset..offset + len,
                bias: offset + len - bias_len..offset + len,
            });
            offset += len;
        };
        for level in 0..cfg.levels.len() {
            let shape = cfg.cell_shape(level);
            for dir in 0..4 {
                push(
                    TensorKind::Cell { level, dir },
                    shape.param_count(),
                    5 * shape.units,
                );
            }
            if level + 1 < cfg.levels.len() {
                let (i, o) = cfg.ff_shape(level);
                push(TensorKind::FeedForward { level }, o * i + o, o);
            }
        }
        let last = *cfg.levels.last().unwrap();
        let out = cfg.output_size();
        push(TensorKind::Output, out * last + out, out);
        Layout {
            blocks,
            total: offset,
        }
    }

    pub fn cell(&self, level: usize, dir: usize) -> &TensorBlock {
        self.blocks
            .iter()
            .find(|b| b.kind == TensorKind::Cell { level, dir })
            .expect("cell block")
    }

    pub fn feedforward(&self, level: usize) -> &TensorBlock {
        self.blocks
            .iter()
            .find(|b| b.kind == TensorKind::FeedForward { level })
            .expect("feedforward block")
    }

    pub fn output(&self) -> &TensorBlock {
        self.blocks.last().expect("output block")
    }

    pub fn block_of(&self, index: usize) -> Option<&TensorBlock> {
        self.blocks.iter().find(|b| b.range.contains(&index))
    }
}

/// All trainable weights, stored flat in [`Layout`] order. Gradients and
/// momentum buffers use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct NetParams {
    pub config: NetConfig,
    pub data: Vec<f64>,
}

impl NetParams {
    pub fn zeros(config: &NetConfig) -> Result<Self> {
        config.validate()?;
        Ok(NetParams {
            data: vec![0.0; config.param_count()],
            config: config.clone(),
        })
    }

    pub fn zeros_like(&self) -> Self {
        NetParams {
            config: self.config.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn add_assign(&mut self, other: &NetParams) {
        assert_eq!(self.data.len(), other.data.len(), "parameter shapes differ");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub const INIT_RANGE: f64 = 0.1;

/// Deterministic initialization: weights uniform in `[-0.1, 0.1]`, biases 0.
pub fn init_params(cfg: &NetConfig, seed: u64) -> Result<NetParams> {
    init_params_with_range(cfg, seed, INIT_RANGE)
}

/// Like [`init_params`] with weights uniform in `[-range, range]`.
pub fn init_params_with_range(cfg: &NetConfig, seed: u64, range: f64) -> Result<NetParams> {
    if !(range > 0.0 && range.is_finite()) {
        return Err(Error::InvalidConfig(format!("init range must be positive, got {range}")));
    }
    let mut params = NetParams::zeros(cfg)?;
    let layout = cfg.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for block in &layout.blocks {
        for i in block.range.start..block.bias.start {
            params.data[i] = rng.random_range(-range..=range);
        }
    }
    Ok(params)
}

struct FeedForwardCache {
    width: usize,
    height: usize,
    /// Gathered tile inputs, `(cells, inputs)`.
    inputs: Vec<f64>,
    /// `tanh` outputs, `(cells, outputs)`.
    outputs: Vec<f64>,
}

struct LevelCache {
    width: usize,
    height: usize,
    input: Vec<f64>,
    traces: Vec<LatticeTrace>,
    fused: Vec<f64>,
    ff: Option<FeedForwardCache>,
}

/// Everything the backward pass needs from a forward pass.
pub struct ForwardCache {
    levels: Vec<LevelCache>,
    /// Vertically collapsed final activations, `(frames, units)`.
    collapsed: Vec<f64>,
    pub probs: ProbMatrix,
}

impl ForwardCache {
    pub fn frames(&self) -> usize {
        self.probs.frames()
    }
}

fn tile_input(img: &GrayImage, tile: (usize, usize)) -> (Vec<f64>, usize, usize) {
    let (tw, th) = tile;
    let gw = img.width().div_ceil(tw);
    let gh = img.height().div_ceil(th);
    let feats = tw * th;
    let mut out = vec![0.0; gw * gh * feats];
    for x in 0..gw {
        for y in 0..gh {
            let base = (x * gh + y) * feats;
            for dy in 0..th {
                for dx in 0..tw {
                    let v = img.get_or_zero((x * tw + dx) as isize, (y * th + dy) as isize);
                    out[base + dy * tw + dx] = v as f64;
                }
            }
        }
    }
    (out, gw, gh)
}

/// Collects subsampling tiles of a `(w, h, n)` grid into feature vectors.
fn gather_tiles(grid: &[f64], w: usize, h: usize, n: usize, tile: (usize, usize)) -> (Vec<f64>, usize, usize) {
    let (sw, sh) = tile;
    let ow = w.div_ceil(sw);
    let oh = h.div_ceil(sh);
    let feats = sw * sh * n;
    let mut out = vec![0.0; ow * oh * feats];
    for x in 0..ow {
        for y in 0..oh {
            let base = (x * oh + y) * feats;
            for dy in 0..sh {
                for dx in 0..sw {
                    let (sx, sy) = (x * sw + dx, y * sh + dy);
                    if sx < w && sy < h {
                        let src = (sx * h + sy) * n;
                        let dst = base + (dy * sw + dx) * n;
                        out[dst..dst + n].copy_from_slice(&grid[src..src + n]);
                    }
                }
            }
        }
    }
    (out, ow, oh)
}

/// Adjoint of [`gather_tiles`].
fn scatter_tiles(d_tiles: &[f64], w: usize, h: usize, n: usize, tile: (usize, usize), d_grid: &mut [f64]) {
    let (sw, sh) = tile;
    let ow = w.div_ceil(sw);
    let oh = h.div_ceil(sh);
    let feats = sw * sh * n;
    for x in 0..ow {
        for y in 0..oh {
            let base = (x * oh + y) * feats;
            for dy in 0..sh {
                for dx in 0..sw {
                    let (sx, sy) = (x * sw + dx, y * sh + dy);
                    if sx < w && sy < h {
                        let dst = (sx * h + sy) * n;
                        let src = base + (dy * sw + dx) * n;
                        for k in 0..n {
                            d_grid[dst + k] += d_tiles[src + k];
                        }
                    }
                }
            }
        }
    }
}

/// Affine map `out = W in + b` with `W` stored row-major `(outputs, inputs)`
/// followed by `b`.
fn affine(weights: &[f64], inputs: usize, outputs: usize, x: &[f64], out: &mut [f64]) {
    let (w, b) = weights.split_at(inputs * outputs);
    for o in 0..outputs {
        let row = &w[o * inputs..(o + 1) * inputs];
        out[o] = b[o] + row.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
    }
}

/// Backward of [`affine`]: accumulates weight gradients and input gradients.
fn affine_backward(
    weights: &[f64],
    inputs: usize,
    outputs: usize,
    x: &[f64],
    d_out: &[f64],
    grad: &mut [f64],
    d_x: &mut [f64],
) {
    let (w, _) = weights.split_at(inputs * outputs);
    let (gw, gb) = grad.split_at_mut(inputs * outputs);
    for o in 0..outputs {
        let d = d_out[o];
        if d == 0.0 {
            continue;
        }
        gb[o] += d;
        let row = &w[o * inputs..(o + 1) * inputs];
        let grow = &mut gw[o * inputs..(o + 1) * inputs];
        for i in 0..inputs {
            grow[i] += d * x[i];
            d_x[i] += d * row[i];
        }
    }
}

/// Maps a writing to per-frame posteriors, keeping the activations needed by
/// [`backward`].
pub fn forward(writing: &GrayImage, params: &NetParams) -> Result<ForwardCache> {
    let cfg = &params.config;
    let layout = cfg.layout();
    if params.data.len() != layout.total {
        return Err(Error::Shape(format!(
            "{} parameters for a configuration needing {}",
            params.data.len(),
            layout.total
        )));
    }
    if writing.width() < cfg.input_tile.0 || writing.height() < cfg.input_tile.1 {
        return Err(Error::TooNarrow {
            width: writing.width(),
            tile: cfg.input_tile.0,
        });
    }

    let (mut input, mut gw, mut gh) = tile_input(writing, cfg.input_tile);
    let mut levels = Vec::with_capacity(cfg.levels.len());
    for level in 0..cfg.levels.len() {
        let shape = cfg.cell_shape(level);
        let n = shape.units;
        let traces: Vec<LatticeTrace> = Direction::ALL
            .par_iter()
            .enumerate()
            .map(|(dir, &d)| {
                let block = layout.cell(level, dir);
                lattice_forward(cfg.cell, shape, &params.data[block.range.clone()], &input, gw, gh, d)
            })
            .collect();
        let mut fused = vec![0.0; gw * gh * n];
        for t in &traces {
            for (f, y) in fused.iter_mut().zip(&t.y) {
                *f += y;
            }
        }

        let ff = if level + 1 < cfg.levels.len() {
            let (fi, fo) = cfg.ff_shape(level);
            let (tiles, ow, oh) = gather_tiles(&fused, gw, gh, n, cfg.subsample[level]);
            let weights = &params.data[layout.feedforward(level).range.clone()];
            let mut outputs = vec![0.0; ow * oh * fo];
            for c in 0..ow * oh {
                let out = &mut outputs[c * fo..(c + 1) * fo];
                affine(weights, fi, fo, &tiles[c * fi..(c + 1) * fi], out);
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            Some(FeedForwardCache {
                width: ow,
                height: oh,
                inputs: tiles,
                outputs,
            })
        } else {
            None
        };

        let next = ff.as_ref().map(|f| (f.outputs.clone(), f.width, f.height));
        levels.push(LevelCache {
            width: gw,
            height: gh,
            input: std::mem::take(&mut input),
            traces,
            fused,
            ff,
        });
        if let Some((o, w, h)) = next {
            input = o;
            gw = w;
            gh = h;
        }
    }

    let last = levels.last().unwrap();
    let n = *cfg.levels.last().unwrap();
    let frames = last.width;
    let mut collapsed = vec![0.0; frames * n];
    for x in 0..frames {
        for y in 0..last.height {
            let src = (x * last.height + y) * n;
            for k in 0..n {
                collapsed[x * n + k] += last.fused[src + k];
            }
        }
    }
    let classes = cfg.output_size();
    let out_w = &params.data[layout.output().range.clone()];
    let mut logits = vec![0.0; frames * classes];
    for t in 0..frames {
        affine(
            out_w,
            n,
            classes,
            &collapsed[t * n..(t + 1) * n],
            &mut logits[t * classes..(t + 1) * classes],
        );
    }
    let probs = ProbMatrix::from_logits(frames, classes, &logits)?;
    Ok(ForwardCache {
        levels,
        collapsed,
        probs,
    })
}

/// Convenience wrapper returning only the posteriors.
pub fn posteriors(writing: &GrayImage, params: &NetParams) -> Result<ProbMatrix> {
    forward(writing, params).map(|c| c.probs)
}

/// Accumulates the gradient of a scalar loss into `grads`, given the loss
/// gradient with respect to the pre-softmax logits (`frames x classes`).
pub fn backward_into(cache: &ForwardCache, params: &NetParams, grad_logits: &[f64], grads: &mut NetParams) -> Result<()> {
    let cfg = &params.config;
    let layout = cfg.layout();
    let classes = cfg.output_size();
    let frames = cache.frames();
    if grad_logits.len() != frames * classes {
        return Err(Error::Shape(format!(
            "logit gradient has {} entries, expected {}",
            grad_logits.len(),
            frames * classes
        )));
    }
    if grads.data.len() != params.data.len() {
        return Err(Error::Shape("gradient buffer does not match parameters".into()));
    }

    let n_last = *cfg.levels.last().unwrap();
    let out_block = layout.output().range.clone();
    let mut d_collapsed = vec![0.0; frames * n_last];
    {
        let out_w = &params.data[out_block.clone()];
        let g = &mut grads.data[out_block];
        for t in 0..frames {
            affine_backward(
                out_w,
                n_last,
                classes,
                &cache.collapsed[t * n_last..(t + 1) * n_last],
                &grad_logits[t * classes..(t + 1) * classes],
                g,
                &mut d_collapsed[t * n_last..(t + 1) * n_last],
            );
        }
    }

    // gradient w.r.t. the fused activation grid of the current level
    let last = cache.levels.last().unwrap();
    let mut d_fused = vec![0.0; last.width * last.height * n_last];
    for x in 0..last.width {
        for y in 0..last.height {
            let dst = (x * last.height + y) * n_last;
            d_fused[dst..dst + n_last].copy_from_slice(&d_collapsed[x * n_last..(x + 1) * n_last]);
        }
    }

    for level in (0..cfg.levels.len()).rev() {
        let lc = &cache.levels[level];
        let shape = cfg.cell_shape(level);
        let cells = lc.width * lc.height;
        let need_input_grad = level > 0;

        let blocks: Vec<Range<usize>> = (0..4).map(|d| layout.cell(level, d).range.clone()).collect();
        let mut grad_slices = split_blocks(&mut grads.data, &blocks);
        let d_inputs: Vec<Vec<f64>> = grad_slices
            .par_iter_mut()
            .enumerate()
            .map(|(dir, g)| {
                let mut d_in = vec![0.0; cells * shape.inputs];
                lattice_backward(
                    cfg.cell,
                    shape,
                    &params.data[blocks[dir].clone()],
                    &lc.input,
                    &lc.traces[dir],
                    Direction::ALL[dir],
                    &d_fused,
                    g,
                    &mut d_in,
                );
                d_in
            })
            .collect();

        if !need_input_grad {
            break;
        }
        let mut d_input = vec![0.0; cells * shape.inputs];
        for d in &d_inputs {
            for (a, b) in d_input.iter_mut().zip(d) {
                *a += b;
            }
        }

        // the input of this level is the feedforward output of the level below
        let below = &cache.levels[level - 1];
        let ff = below.ff.as_ref().expect("feedforward cache");
        let (fi, fo) = cfg.ff_shape(level - 1);
        let ff_range = layout.feedforward(level - 1).range.clone();
        let mut d_tiles = vec![0.0; ff.width * ff.height * fi];
        {
            let w = &params.data[ff_range.clone()];
            let g = &mut grads.data[ff_range];
            let mut d_pre = vec![0.0; fo];
            for c in 0..ff.width * ff.height {
                let out = &ff.outputs[c * fo..(c + 1) * fo];
                for k in 0..fo {
                    d_pre[k] = d_input[c * fo + k] * (1.0 - out[k] * out[k]);
                }
                affine_backward(
                    w,
                    fi,
                    fo,
                    &ff.inputs[c * fi..(c + 1) * fi],
                    &d_pre,
                    g,
                    &mut d_tiles[c * fi..(c + 1) * fi],
                );
            }
        }
        let n_below = cfg.levels[level - 1];
        d_fused = vec![0.0; below.width * below.height * n_below];
        scatter_tiles(
            &d_tiles,
            below.width,
            below.height,
            n_below,
            cfg.subsample[level - 1],
            &mut d_fused,
        );
    }
    Ok(())
}

/// Gradient of a scalar loss with respect to every parameter.
pub fn backward(cache: &ForwardCache, params: &NetParams, grad_logits: &[f64]) -> Result<NetParams> {
    let mut grads = params.zeros_like();
    backward_into(cache, params, grad_logits, &mut grads)?;
    Ok(grads)
}

/// Disjoint mutable views of sorted, non-overlapping ranges.
fn split_blocks<'a>(data: &'a mut [f64], ranges: &[Range<usize>]) -> Vec<&'a mut [f64]> {
    let mut out = Vec::with_capacity(ranges.len());
    let mut rest = data;
    let mut consumed = 0;
    for r in ranges {
        let (_, tail) = rest.split_at_mut(r.start - consumed);
        let (block, tail) = tail.split_at_mut(r.len());
        out.push(block);
        rest = tail;
        consumed = r.end;
    }
    out
}
