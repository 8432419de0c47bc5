use crate::error::{Error, Result};

/// Per-frame class posteriors, `frames x classes`, row-major. Class 0 is the
/// CTC blank.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMatrix {
    frames: usize,
    classes: usize,
    data: Vec<f64>,
}

impl ProbMatrix {
    pub fn new(frames: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if classes == 0 {
            return Err(Error::Shape("probability matrix needs at least one class".into()));
        }
        if data.len() != frames * classes {
            return Err(Error::Shape(format!(
                "{} values for {frames} frames x {classes} classes",
                data.len()
            )));
        }
        Ok(ProbMatrix {
            frames,
            classes,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let classes = rows.first().map_or(1, Vec::len);
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::Shape("ragged probability rows".into()));
        }
        ProbMatrix::new(rows.len(), classes, rows.concat())
    }

    /// Row-wise softmax of a `frames x classes` logit matrix.
    pub fn from_logits(frames: usize, classes: usize, logits: &[f64]) -> Result<Self> {
        let mut data = logits.to_vec();
        if data.len() != frames * classes {
            return Err(Error::Shape("logit matrix size mismatch".into()));
        }
        for row in data.chunks_mut(classes.max(1)) {
            softmax_in_place(row);
        }
        ProbMatrix::new(frames, classes, data)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn is_empty(&self) -> bool {
        self.frames == 0
    }

    #[inline]
    pub fn get(&self, t: usize, k: usize) -> f64 {
        self.data[t * self.classes + k]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.classes..(t + 1) * self.classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.classes)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Frames `start..end` as a new matrix.
    pub fn slice(&self, start: usize, end: usize) -> ProbMatrix {
        ProbMatrix {
            frames: end - start,
            classes: self.classes,
            data: self.data[start * self.classes..end * self.classes].to_vec(),
        }
    }

    /// Index of the largest entry of frame `t`; ties go to the lowest index.
    pub fn argmax(&self, t: usize) -> usize {
        let row = self.row(t);
        let mut best = 0;
        for (k, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = k;
            }
        }
        best
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        z += *v;
    }
    for v in row.iter_mut() {
        *v /= z;
    }
}
