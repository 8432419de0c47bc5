//! Two-dimensional recurrent cells (MDLeaky and the MDLSTM baseline), the
//! four column-first scanning directions and the lattice recurrences built
//! from them, with exact backward passes.
//!
//! Both cell variants use five gate blocks per unit, each with input weights,
//! one recurrent weight set per predecessor and a bias:
//!
//! | block | MDLeaky                    | MDLSTM            |
//! |-------|----------------------------|-------------------|
//! | 0     | input coefficient logit    | input gate        |
//! | 1     | predecessor-1 coefficient  | forget gate 1     |
//! | 2     | predecessor-2 coefficient  | forget gate 2     |
//! | 3     | output gate                | output gate       |
//! | 4     | cell input                 | cell input        |
//!
//! MDLeaky turns blocks 0-2 into a softmax, so the new state is a convex
//! combination of the two predecessor states and `tanh(cell input)` and can
//! never leave `[-1, 1]`. MDLSTM gates each term with an independent sigmoid
//! and its state can grow with the number of lattice paths.

use std::fmt;

pub const GATES: usize = 5;
pub const GATE_INPUT: usize = 0;
pub const GATE_FORGET1: usize = 1;
pub const GATE_FORGET2: usize = 2;
pub const GATE_OUTPUT: usize = 3;
pub const GATE_CELL: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellVariant {
    MdLeaky,
    MdLstm,
}

impl CellVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            CellVariant::MdLeaky => "mdleaky",
            CellVariant::MdLstm => "mdlstm",
        }
    }
}

impl fmt::Display for CellVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CellVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mdleaky" | "leaky" => Ok(CellVariant::MdLeaky),
            "mdlstm" | "lstm" => Ok(CellVariant::MdLstm),
            other => Err(format!("unknown cell variant {other:?}")),
        }
    }
}

/// A column-first scanning direction. Columns are visited in the order of
/// `dx`, rows inside a column in the order of `dy`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Direction {
    pub dx: i8,
    pub dy: i8,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction { dx: 1, dy: 1 },
        Direction { dx: 1, dy: -1 },
        Direction { dx: -1, dy: 1 },
        Direction { dx: -1, dy: -1 },
    ];

    pub fn new(dx: i8, dy: i8) -> Self {
        assert!(dx.abs() == 1 && dy.abs() == 1, "direction components must be +-1");
        Direction { dx, dy }
    }
}

/// One lattice position in scan order with its two predecessors:
/// `prev_x = (x - dx, y)` and `prev_y = (x, y - dy)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScanStep {
    pub x: usize,
    pub y: usize,
    pub prev_x: Option<(usize, usize)>,
    pub prev_y: Option<(usize, usize)>,
}

fn step_back(v: usize, d: i8, len: usize) -> Option<usize> {
    let p = v as isize - d as isize;
    (p >= 0 && (p as usize) < len).then_some(p as usize)
}

/// Visits every cell of a `w x h` grid exactly once, column-first.
pub fn scan_order(w: usize, h: usize, d: Direction) -> Vec<ScanStep> {
    assert!(w >= 1 && h >= 1, "grid must be non-empty");
    let xs: Vec<usize> = if d.dx > 0 { (0..w).collect() } else { (0..w).rev().collect() };
    let ys: Vec<usize> = if d.dy > 0 { (0..h).collect() } else { (0..h).rev().collect() };
    let mut out = Vec::with_capacity(w * h);
    for &x in &xs {
        for &y in &ys {
            out.push(ScanStep {
                x,
                y,
                prev_x: step_back(x, d.dx, w).map(|px| (px, y)),
                prev_y: step_back(y, d.dy, h).map(|py| (x, py)),
            });
        }
    }
    out
}

/// Input and unit counts of one recurrent layer instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellShape {
    pub inputs: usize,
    pub units: usize,
}

impl CellShape {
    pub fn new(inputs: usize, units: usize) -> Self {
        CellShape { inputs, units }
    }

    pub fn param_count(&self) -> usize {
        GATES * self.units * (self.inputs + 2 * self.units + 1)
    }

    fn rows(&self) -> usize {
        GATES * self.units
    }

    fn rec1_offset(&self) -> usize {
        self.rows() * self.inputs
    }

    fn rec2_offset(&self) -> usize {
        self.rec1_offset() + self.rows() * self.units
    }

    fn bias_offset(&self) -> usize {
        self.rec2_offset() + self.rows() * self.units
    }
}

/// Owned weights of one cell layer instance.
#[derive(Clone, Debug, PartialEq)]
pub struct CellWeights {
    pub shape: CellShape,
    pub data: Vec<f64>,
}

impl CellWeights {
    pub fn zeros(shape: CellShape) -> Self {
        CellWeights {
            shape,
            data: vec![0.0; shape.param_count()],
        }
    }

    pub fn from_vec(shape: CellShape, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), shape.param_count(), "weight count mismatch");
        CellWeights { shape, data }
    }

    pub fn input_weight_mut(&mut self, gate: usize, unit: usize, input: usize) -> &mut f64 {
        let s = self.shape;
        &mut self.data[(gate * s.units + unit) * s.inputs + input]
    }

    pub fn rec1_weight_mut(&mut self, gate: usize, unit: usize, from: usize) -> &mut f64 {
        let s = self.shape;
        &mut self.data[s.rec1_offset() + (gate * s.units + unit) * s.units + from]
    }

    pub fn rec2_weight_mut(&mut self, gate: usize, unit: usize, from: usize) -> &mut f64 {
        let s = self.shape;
        &mut self.data[s.rec2_offset() + (gate * s.units + unit) * s.units + from]
    }

    pub fn bias_mut(&mut self, gate: usize, unit: usize) -> &mut f64 {
        let s = self.shape;
        &mut self.data[s.bias_offset() + gate * s.units + unit]
    }
}

/// Internal state and activation of one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellState {
    pub s: Vec<f64>,
    pub y: Vec<f64>,
}

impl CellState {
    pub fn zeros(units: usize) -> Self {
        CellState {
            s: vec![0.0; units],
            y: vec![0.0; units],
        }
    }
}

/// Forward values of a single cell needed by [`cell_backward`]. `gates` holds
/// the activated gate blocks (softmax coefficients or sigmoids, output gate,
/// `tanh` of the cell input) laid out block-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CellTrace {
    pub gates: Vec<f64>,
    pub state: CellState,
}

impl CellTrace {
    /// Softmax coefficients `(input, predecessor 1, predecessor 2)` of a unit.
    pub fn coefficients(&self, unit: usize) -> (f64, f64, f64) {
        let n = self.state.s.len();
        (
            self.gates[GATE_INPUT * n + unit],
            self.gates[GATE_FORGET1 * n + unit],
            self.gates[GATE_FORGET2 * n + unit],
        )
    }
}

#[inline]
fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

fn preactivations(shape: CellShape, w: &[f64], x: &[f64], y1: &[f64], y2: &[f64], a: &mut [f64]) {
    let (ni, n) = (shape.inputs, shape.units);
    let rows = shape.rows();
    let (w_in, rest) = w.split_at(rows * ni);
    let (rec1, rest) = rest.split_at(rows * n);
    let (rec2, bias) = rest.split_at(rows * n);
    for k in 0..rows {
        let mut acc = bias[k];
        acc += dot(&w_in[k * ni..(k + 1) * ni], x);
        acc += dot(&rec1[k * n..(k + 1) * n], y1);
        acc += dot(&rec2[k * n..(k + 1) * n], y2);
        a[k] = acc;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Turns pre-activations into gate values, new state and activation.
fn activate(
    variant: CellVariant,
    n: usize,
    a: &[f64],
    s1: &[f64],
    s2: &[f64],
    gates: &mut [f64],
    s: &mut [f64],
    y: &mut [f64],
) {
    for u in 0..n {
        let (ai, af1, af2) = (a[u], a[n + u], a[2 * n + u]);
        let o = sigmoid(a[3 * n + u]);
        let g = a[4 * n + u].tanh();
        let (ci, c1, c2) = match variant {
            CellVariant::MdLeaky => {
                let m = ai.max(af1).max(af2);
                let (ei, e1, e2) = ((ai - m).exp(), (af1 - m).exp(), (af2 - m).exp());
                let z = ei + e1 + e2;
                (ei / z, e1 / z, e2 / z)
            }
            CellVariant::MdLstm => (sigmoid(ai), sigmoid(af1), sigmoid(af2)),
        };
        let state = c1 * s1[u] + c2 * s2[u] + ci * g;
        gates[u] = ci;
        gates[n + u] = c1;
        gates[2 * n + u] = c2;
        gates[3 * n + u] = o;
        gates[4 * n + u] = g;
        s[u] = state;
        y[u] = o * state.tanh();
    }
}

/// Scratch buffers for the per-cell backward kernel.
struct BackwardScratch {
    da: Vec<f64>,
    ds1: Vec<f64>,
    ds2: Vec<f64>,
    dy1: Vec<f64>,
    dy2: Vec<f64>,
}

impl BackwardScratch {
    fn new(n: usize) -> Self {
        BackwardScratch {
            da: vec![0.0; GATES * n],
            ds1: vec![0.0; n],
            ds2: vec![0.0; n],
            dy1: vec![0.0; n],
            dy2: vec![0.0; n],
        }
    }
}

/// Backward kernel for one cell. Accumulates into `grad_w` and `dx`, and
/// writes the predecessor gradients into `scratch`.
#[allow(clippy::too_many_arguments)]
fn backward_kernel(
    variant: CellVariant,
    shape: CellShape,
    w: &[f64],
    x: &[f64],
    y1: &[f64],
    s1: &[f64],
    y2: &[f64],
    s2: &[f64],
    gates: &[f64],
    s: &[f64],
    dy: &[f64],
    ds: &[f64],
    grad_w: &mut [f64],
    dx: &mut [f64],
    scratch: &mut BackwardScratch,
) {
    let (ni, n) = (shape.inputs, shape.units);
    let da = &mut scratch.da;
    for u in 0..n {
        let ts = s[u].tanh();
        let o = gates[3 * n + u];
        let g = gates[4 * n + u];
        let dst = ds[u] + dy[u] * o * (1.0 - ts * ts);
        da[3 * n + u] = dy[u] * ts * o * (1.0 - o);
        let (ci, c1, c2) = (gates[u], gates[n + u], gates[2 * n + u]);
        match variant {
            CellVariant::MdLeaky => {
                let (dci, dc1, dc2) = (dst * g, dst * s1[u], dst * s2[u]);
                let mean = ci * dci + c1 * dc1 + c2 * dc2;
                da[u] = ci * (dci - mean);
                da[n + u] = c1 * (dc1 - mean);
                da[2 * n + u] = c2 * (dc2 - mean);
            }
            CellVariant::MdLstm => {
                da[u] = dst * g * ci * (1.0 - ci);
                da[n + u] = dst * s1[u] * c1 * (1.0 - c1);
                da[2 * n + u] = dst * s2[u] * c2 * (1.0 - c2);
            }
        }
        da[4 * n + u] = dst * ci * (1.0 - g * g);
        scratch.ds1[u] = dst * c1;
        scratch.ds2[u] = dst * c2;
    }

    let rows = shape.rows();
    let (w_in, rest) = w.split_at(rows * ni);
    let (rec1, rest) = rest.split_at(rows * n);
    let (rec2, _) = rest.split_at(rows * n);
    let (g_in, rest) = grad_w.split_at_mut(rows * ni);
    let (g_rec1, rest) = rest.split_at_mut(rows * n);
    let (g_rec2, g_bias) = rest.split_at_mut(rows * n);

    scratch.dy1.iter_mut().for_each(|v| *v = 0.0);
    scratch.dy2.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..rows {
        let d = da[k];
        if d == 0.0 {
            continue;
        }
        g_bias[k] += d;
        let wr = &w_in[k * ni..(k + 1) * ni];
        let gr = &mut g_in[k * ni..(k + 1) * ni];
        for j in 0..ni {
            gr[j] += d * x[j];
            dx[j] += d * wr[j];
        }
        let r1 = &rec1[k * n..(k + 1) * n];
        let r2 = &rec2[k * n..(k + 1) * n];
        let gr1 = &mut g_rec1[k * n..(k + 1) * n];
        let gr2 = &mut g_rec2[k * n..(k + 1) * n];
        for j in 0..n {
            gr1[j] += d * y1[j];
            gr2[j] += d * y2[j];
            scratch.dy1[j] += d * r1[j];
            scratch.dy2[j] += d * r2[j];
        }
    }
}

/// Forward pass of one cell. Absent predecessors act as zero states.
pub fn cell_forward(
    variant: CellVariant,
    x: &[f64],
    prev1: Option<&CellState>,
    prev2: Option<&CellState>,
    w: &CellWeights,
) -> CellTrace {
    let shape = w.shape;
    let n = shape.units;
    assert_eq!(x.len(), shape.inputs, "input length mismatch");
    let zero = CellState::zeros(n);
    let p1 = prev1.unwrap_or(&zero);
    let p2 = prev2.unwrap_or(&zero);
    let mut a = vec![0.0; GATES * n];
    preactivations(shape, &w.data, x, &p1.y, &p2.y, &mut a);
    let mut gates = vec![0.0; GATES * n];
    let mut state = CellState::zeros(n);
    activate(variant, n, &a, &p1.s, &p2.s, &mut gates, &mut state.s, &mut state.y);
    CellTrace { gates, state }
}

pub fn mdleaky_forward(
    x: &[f64],
    prev1: Option<&CellState>,
    prev2: Option<&CellState>,
    w: &CellWeights,
) -> CellState {
    cell_forward(CellVariant::MdLeaky, x, prev1, prev2, w).state
}

pub fn mdlstm_forward(
    x: &[f64],
    prev1: Option<&CellState>,
    prev2: Option<&CellState>,
    w: &CellWeights,
) -> CellState {
    cell_forward(CellVariant::MdLstm, x, prev1, prev2, w).state
}

/// Gradient of a predecessor state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateGrad {
    pub ds: Vec<f64>,
    pub dy: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellGrads {
    pub dx: Vec<f64>,
    pub dprev1: StateGrad,
    pub dprev2: StateGrad,
    pub dw: Vec<f64>,
}

/// Exact gradients of one cell given upstream `dL/dy` and `dL/ds`.
pub fn cell_backward(
    variant: CellVariant,
    x: &[f64],
    prev1: Option<&CellState>,
    prev2: Option<&CellState>,
    w: &CellWeights,
    trace: &CellTrace,
    dy: &[f64],
    ds: &[f64],
) -> CellGrads {
    let shape = w.shape;
    let n = shape.units;
    let zero = CellState::zeros(n);
    let p1 = prev1.unwrap_or(&zero);
    let p2 = prev2.unwrap_or(&zero);
    let mut dw = vec![0.0; shape.param_count()];
    let mut dx = vec![0.0; shape.inputs];
    let mut scratch = BackwardScratch::new(n);
    backward_kernel(
        variant,
        shape,
        &w.data,
        x,
        &p1.y,
        &p1.s,
        &p2.y,
        &p2.s,
        &trace.gates,
        &trace.state.s,
        dy,
        ds,
        &mut dw,
        &mut dx,
        &mut scratch,
    );
    CellGrads {
        dx,
        dprev1: StateGrad {
            ds: scratch.ds1,
            dy: scratch.dy1,
        },
        dprev2: StateGrad {
            ds: scratch.ds2,
            dy: scratch.dy2,
        },
        dw,
    }
}

/// Forward values of a whole lattice for one direction. Grids are indexed
/// column-major: cell `(x, y)` lives at `x * height + y`.
#[derive(Clone, Debug)]
pub struct LatticeTrace {
    pub width: usize,
    pub height: usize,
    pub units: usize,
    pub gates: Vec<f64>,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
}

impl LatticeTrace {
    pub fn max_abs_state(&self) -> f64 {
        self.s.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Runs one direction of a recurrent layer over an input grid of
/// `width x height` feature vectors.
pub fn lattice_forward(
    variant: CellVariant,
    shape: CellShape,
    weights: &[f64],
    input: &[f64],
    width: usize,
    height: usize,
    dir: Direction,
) -> LatticeTrace {
    let (ni, n) = (shape.inputs, shape.units);
    assert_eq!(weights.len(), shape.param_count(), "weight count mismatch");
    assert_eq!(input.len(), width * height * ni, "input grid size mismatch");
    let cells = width * height;
    let mut trace = LatticeTrace {
        width,
        height,
        units: n,
        gates: vec![0.0; cells * GATES * n],
        s: vec![0.0; cells * n],
        y: vec![0.0; cells * n],
    };
    let zeros = vec![0.0; n];
    let mut a = vec![0.0; GATES * n];
    let mut s_new = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    for step in scan_order(width, height, dir) {
        let idx = step.x * height + step.y;
        let pidx = |p: Option<(usize, usize)>| p.map(|(px, py)| px * height + py);
        let (i1, i2) = (pidx(step.prev_x), pidx(step.prev_y));
        {
            let y1 = i1.map_or(&zeros[..], |i| &trace.y[i * n..(i + 1) * n]);
            let y2 = i2.map_or(&zeros[..], |i| &trace.y[i * n..(i + 1) * n]);
            let s1 = i1.map_or(&zeros[..], |i| &trace.s[i * n..(i + 1) * n]);
            let s2 = i2.map_or(&zeros[..], |i| &trace.s[i * n..(i + 1) * n]);
            let x = &input[idx * ni..(idx + 1) * ni];
            preactivations(shape, weights, x, y1, y2, &mut a);
            let gates = &mut trace.gates[idx * GATES * n..(idx + 1) * GATES * n];
            activate(variant, n, &a, s1, s2, gates, &mut s_new, &mut y_new);
        }
        trace.s[idx * n..(idx + 1) * n].copy_from_slice(&s_new);
        trace.y[idx * n..(idx + 1) * n].copy_from_slice(&y_new);
    }
    trace
}

/// Backpropagates `d_out` (gradient w.r.t. every cell activation) through one
/// lattice direction. Weight gradients accumulate into `grad_w`, input
/// gradients into `d_input`.
#[allow(clippy::too_many_arguments)]
pub fn lattice_backward(
    variant: CellVariant,
    shape: CellShape,
    weights: &[f64],
    input: &[f64],
    trace: &LatticeTrace,
    dir: Direction,
    d_out: &[f64],
    grad_w: &mut [f64],
    d_input: &mut [f64],
) {
    let (ni, n) = (shape.inputs, shape.units);
    let (width, height) = (trace.width, trace.height);
    let cells = width * height;
    assert_eq!(d_out.len(), cells * n, "output gradient size mismatch");
    assert_eq!(d_input.len(), cells * ni, "input gradient size mismatch");
    let mut dy_acc = d_out.to_vec();
    let mut ds_acc = vec![0.0; cells * n];
    let zeros = vec![0.0; n];
    let mut scratch = BackwardScratch::new(n);
    let order = scan_order(width, height, dir);
    for step in order.iter().rev() {
        let idx = step.x * height + step.y;
        let pidx = |p: Option<(usize, usize)>| p.map(|(px, py)| px * height + py);
        let (i1, i2) = (pidx(step.prev_x), pidx(step.prev_y));
        let y1 = i1.map_or(&zeros[..], |i| &trace.y[i * n..(i + 1) * n]);
        let y2 = i2.map_or(&zeros[..], |i| &trace.y[i * n..(i + 1) * n]);
        let s1 = i1.map_or(&zeros[..], |i| &trace.s[i * n..(i + 1) * n]);
        let s2 = i2.map_or(&zeros[..], |i| &trace.s[i * n..(i + 1) * n]);
        backward_kernel(
            variant,
            shape,
            weights,
            &input[idx * ni..(idx + 1) * ni],
            y1,
            s1,
            y2,
            s2,
            &trace.gates[idx * GATES * n..(idx + 1) * GATES * n],
            &trace.s[idx * n..(idx + 1) * n],
            &dy_acc[idx * n..(idx + 1) * n],
            &ds_acc[idx * n..(idx + 1) * n],
            grad_w,
            &mut d_input[idx * ni..(idx + 1) * ni],
            &mut scratch,
        );
        if let Some(i) = i1 {
            for u in 0..n {
                dy_acc[i * n + u] += scratch.dy1[u];
                ds_acc[i * n + u] += scratch.ds1[u];
            }
        }
        if let Some(i) = i2 {
            for u in 0..n {
                dy_acc[i * n + u] += scratch.dy2[u];
                ds_acc[i * n + u] += scratch.ds2[u];
            }
        }
    }
}
