//! Central finite-difference checks of the analytic gradients.
//!
//! Errors are reported in vector form: `|a - n| / max(|a|, |n|)` over all
//! checked components, with the Euclidean norm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cells::{cell_backward, cell_forward, lattice_backward, lattice_forward, CellShape, CellState, CellVariant, CellWeights, Direction};
use crate::ctc::ctc_loss_grad;
use crate::error::Result;
use crate::image::GrayImage;
use crate::network::{backward, forward, init_params, NetConfig, NetParams};

pub const EPS: f64 = 1e-5;
pub const CELL_TOLERANCE: f64 = 1e-6;
pub const NET_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub what: String,
    pub components: usize,
    pub rel_error: f64,
}

impl GradReport {
    fn new(what: impl Into<String>, analytic: &[f64], numeric: &[f64]) -> Self {
        GradReport {
            what: what.into(),
            components: analytic.len(),
            rel_error: relative_error(analytic, numeric),
        }
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.rel_error < tolerance
    }
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `f` w.r.t. every entry of `x`.
pub fn numeric_gradient(x: &mut [f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + EPS;
        let plus = f(x);
        x[i] = orig - EPS;
        let minus = f(x);
        x[i] = orig;
        out.push((plus - minus) / (2.0 * EPS));
    }
    out
}

fn uniform(n: usize, scale: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..=scale)).collect()
}

/// One cell with both predecessors present; the loss is a random linear
/// projection of the new state and output.
pub fn check_cell(variant: CellVariant, seed: u64) -> Vec<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = CellShape::new(3, 2);
    let n = shape.units;
    let mut w = uniform(shape.param_count(), 0.8, &mut rng);
    let mut x = uniform(shape.inputs, 1.0, &mut rng);
    let mut prev = uniform(4 * n, 0.8, &mut rng);
    let (cy, cs) = (uniform(n, 1.0, &mut rng), uniform(n, 1.0, &mut rng));

    let state = |p: &[f64], k: usize| CellState {
        s: p[2 * k * n..(2 * k + 1) * n].to_vec(),
        y: p[(2 * k + 1) * n..(2 * k + 2) * n].to_vec(),
    };
    let loss = |w: &[f64], x: &[f64], p: &[f64]| {
        let cw = CellWeights::from_vec(shape, w.to_vec());
        let t = cell_forward(variant, x, Some(&state(p, 0)), Some(&state(p, 1)), &cw);
        (0..n).map(|u| cy[u] * t.state.y[u] + cs[u] * t.state.s[u]).sum::<f64>()
    };

    let cw = CellWeights::from_vec(shape, w.clone());
    let (p1, p2) = (state(&prev, 0), state(&prev, 1));
    let trace = cell_forward(variant, &x, Some(&p1), Some(&p2), &cw);
    let g = cell_backward(variant, &x, Some(&p1), Some(&p2), &cw, &trace, &cy, &cs);
    let dprev: Vec<f64> = [&g.dprev1.ds, &g.dprev1.dy, &g.dprev2.ds, &g.dprev2.dy]
        .into_iter()
        .flatten()
        .copied()
        .collect();

    let (x0, p0) = (x.clone(), prev.clone());
    let nw = numeric_gradient(&mut w, |w| loss(w, &x0, &p0));
    let w0 = w.clone();
    let nx = numeric_gradient(&mut x, |x| loss(&w0, x, &p0));
    let np = numeric_gradient(&mut prev, |p| loss(&w0, &x0, p));
    vec![
        GradReport::new(format!("{variant} cell weights"), &g.dw, &nw),
        GradReport::new(format!("{variant} cell input"), &g.dx, &nx),
        GradReport::new(format!("{variant} cell predecessors"), &dprev, &np),
    ]
}

/// A 4x4 lattice with 3 units in every scan direction; the loss is a random
/// projection of all outputs.
pub fn check_lattice(variant: CellVariant, seed: u64) -> Vec<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = CellShape::new(2, 3);
    let (w, h) = (4, 4);
    let mut out = Vec::new();
    for dir in Direction::ALL {
        let mut weights = uniform(shape.param_count(), 0.5, &mut rng);
        let mut input = uniform(w * h * shape.inputs, 1.0, &mut rng);
        let c = uniform(w * h * shape.units, 1.0, &mut rng);
        let loss = |weights: &[f64], input: &[f64]| {
            let t = lattice_forward(variant, shape, weights, input, w, h, dir);
            t.y.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>()
        };
        let trace = lattice_forward(variant, shape, &weights, &input, w, h, dir);
        let mut gw = vec![0.0; weights.len()];
        let mut gx = vec![0.0; input.len()];
        lattice_backward(variant, shape, &weights, &input, &trace, dir, &c, &mut gw, &mut gx);
        let i0 = input.clone();
        let nw = numeric_gradient(&mut weights, |wt| loss(wt, &i0));
        let w0 = weights.clone();
        let nx = numeric_gradient(&mut input, |inp| loss(&w0, inp));
        let tag = format!("{variant} lattice [{:+},{:+}]", dir.dx, dir.dy);
        out.push(GradReport::new(format!("{tag} weights"), &gw, &nw));
        out.push(GradReport::new(format!("{tag} input"), &gx, &nx));
    }
    out
}

/// The tiny network (alphabet of 3) on a random 12x8 writing with the CTC
/// loss of a two-label target, over every parameter.
pub fn check_network(variant: CellVariant, seed: u64) -> Result<GradReport> {
    let cfg = NetConfig::tiny(variant, 3);
    let mut params = init_params(&cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    // larger weights than the default init so every path carries signal
    for v in &mut params.data {
        *v = rng.random_range(-0.5..=0.5);
    }
    let pixels: Vec<f32> = (0..12 * 8).map(|_| rng.random_range(0.0..=1.0)).collect();
    let img = GrayImage::from_pixels(12, 8, pixels)?;
    let target = [1, 2];

    let cache = forward(&img, &params)?;
    let ctc = ctc_loss_grad(&cache.probs, &target)?;
    let analytic = backward(&cache, &params, &ctc.grad)?;

    let config = params.config.clone();
    let loss = |data: &[f64]| {
        let p = NetParams {
            config: config.clone(),
            data: data.to_vec(),
        };
        let c = forward(&img, &p).expect("forward");
        ctc_loss_grad(&c.probs, &target).expect("feasible").loss
    };
    let numeric = numeric_gradient(&mut params.data, loss);
    Ok(GradReport::new(format!("{variant} tiny network"), &analytic.data, &numeric))
}
