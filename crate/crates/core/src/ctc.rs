//! Connectionist temporal classification: the path-collapse map and the
//! log-space forward-backward loss with its gradient.

use crate::error::{Error, Result};
use crate::probs::ProbMatrix;

pub const BLANK: usize = 0;

/// Merges adjacent repeats, then drops blanks.
pub fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &k in path {
        if Some(k) != prev && k != BLANK {
            out.push(k);
        }
        prev = Some(k);
    }
    out
}

/// Fewest frames able to emit `target`: one per label plus one blank between
/// each pair of equal neighbours.
pub fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

#[inline]
pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CtcOutput {
    /// `-ln P(target | probs)`.
    pub loss: f64,
    /// Gradient of the loss w.r.t. the pre-softmax logits, `frames x classes`.
    pub grad: Vec<f64>,
}

fn check_target(probs: &ProbMatrix, target: &[usize]) -> Result<()> {
    for &l in target {
        if l == BLANK || l >= probs.classes() {
            return Err(Error::LabelOutOfRange {
                label: l,
                size: probs.classes(),
            });
        }
    }
    let required = min_frames(target);
    if required > probs.frames() {
        return Err(Error::InfeasibleTarget {
            target_len: target.len(),
            required,
            frames: probs.frames(),
        });
    }
    Ok(())
}

/// CTC loss and its gradient w.r.t. the logits that produced `probs`.
pub fn ctc_loss_grad(probs: &ProbMatrix, target: &[usize]) -> Result<CtcOutput> {
    check_target(probs, target)?;
    let frames = probs.frames();
    let classes = probs.classes();
    if frames == 0 {
        return Ok(CtcOutput {
            loss: 0.0,
            grad: Vec::new(),
        });
    }

    // blank-augmented target: blank, l1, blank, l2, ..., blank
    let ext: Vec<usize> = std::iter::once(BLANK)
        .chain(target.iter().flat_map(|&l| [l, BLANK]))
        .collect();
    let states = ext.len();
    let skip_allowed: Vec<bool> = (0..states)
        .map(|s| s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2])
        .collect();
    let lp: Vec<f64> = probs.data().iter().map(|p| p.ln()).collect();
    let emit = |t: usize, s: usize| lp[t * classes + ext[s]];
    let ninf = f64::NEG_INFINITY;

    let mut alpha = vec![ninf; frames * states];
    alpha[0] = emit(0, 0);
    if states > 1 {
        alpha[1] = emit(0, 1);
    }
    for t in 1..frames {
        let (prev, cur) = alpha.split_at_mut(t * states);
        let prev = &prev[(t - 1) * states..];
        for s in 0..states {
            let mut acc = prev[s];
            if s >= 1 {
                acc = log_add(acc, prev[s - 1]);
            }
            if skip_allowed[s] {
                acc = log_add(acc, prev[s - 2]);
            }
            cur[s] = acc + emit(t, s);
        }
    }

    let mut beta = vec![ninf; frames * states];
    let last = (frames - 1) * states;
    beta[last + states - 1] = 0.0;
    if states > 1 {
        beta[last + states - 2] = 0.0;
    }
    for t in (0..frames - 1).rev() {
        for s in 0..states {
            let next = (t + 1) * states;
            let mut acc = beta[next + s] + emit(t + 1, s);
            if s + 1 < states {
                acc = log_add(acc, beta[next + s + 1] + emit(t + 1, s + 1));
            }
            if s + 2 < states && skip_allowed[s + 2] {
                acc = log_add(acc, beta[next + s + 2] + emit(t + 1, s + 2));
            }
            beta[t * states + s] = acc;
        }
    }

    let mut log_p = alpha[last + states - 1];
    if states > 1 {
        log_p = log_add(log_p, alpha[last + states - 2]);
    }
    if !log_p.is_finite() {
        return Err(Error::InfeasibleTarget {
            target_len: target.len(),
            required: min_frames(target),
            frames,
        });
    }

    let mut grad = probs.data().to_vec();
    let mut occupancy = vec![ninf; classes];
    for t in 0..frames {
        occupancy.iter_mut().for_each(|v| *v = ninf);
        for s in 0..states {
            let v = alpha[t * states + s] + beta[t * states + s];
            occupancy[ext[s]] = log_add(occupancy[ext[s]], v);
        }
        for k in 0..classes {
            grad[t * classes + k] -= (occupancy[k] - log_p).exp();
        }
    }
    Ok(CtcOutput { loss: -log_p, grad })
}

/// CTC loss only.
pub fn ctc_loss(probs: &ProbMatrix, target: &[usize]) -> Result<f64> {
    ctc_loss_grad(probs, target).map(|o| o.loss)
}
