//! Decoding of posterior matrices into text: best path, dictionary Viterbi
//! with a confidence fallback, and the Arabic/Latin order fix.

use crate::alphabet::Alphabet;
use crate::ctc::{collapse, BLANK};
use crate::error::{Error, Result};
use crate::lexicon::PrefixTree;
use crate::probs::ProbMatrix;

/// Default dictionary threshold, `1/e`.
pub const THETA_DEFAULT: f64 = 0.367_879_441_171_442_33;
/// Enlarged threshold `1/sqrt(e)` that prefers the raw reading.
pub const THETA_ENLARGED: f64 = 0.606_530_659_712_633_4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecoderConfig {
    /// Minimum per-frame geometric-mean probability of the best dictionary word.
    pub theta: f64,
    pub use_dictionary: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            theta: THETA_DEFAULT,
            use_dictionary: true,
        }
    }
}

impl DecoderConfig {
    pub fn raw() -> Self {
        DecoderConfig {
            use_dictionary: false,
            ..Default::default()
        }
    }

    pub fn with_theta(theta: f64) -> Self {
        DecoderConfig {
            theta,
            use_dictionary: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidConfig(format!("theta {} outside (0, 1)", self.theta)));
        }
        Ok(())
    }
}

/// Per-frame argmax path (ties to the lowest class).
pub fn argmax_path(probs: &ProbMatrix) -> Vec<usize> {
    (0..probs.frames()).map(|t| probs.argmax(t)).collect()
}

/// Most likely class per frame, collapsed and spelled out.
pub fn best_path(probs: &ProbMatrix, alphabet: &Alphabet) -> String {
    alphabet.decode(&collapse(&argmax_path(probs)))
}

/// Winner of a dictionary Viterbi search.
#[derive(Clone, Debug, PartialEq)]
pub struct WordMatch {
    pub word: String,
    /// Best alignment probability, as a per-frame geometric mean.
    pub score: f64,
    /// Natural log of the best alignment probability.
    pub log_prob: f64,
}

/// Best dictionary word for a segment: maximizes the probability of a single
/// CTC alignment over all words, by token passing through the prefix tree.
/// Returns `Ok(None)` when the segment is too short for every word.
pub fn word_viterbi(segment: &ProbMatrix, tree: &PrefixTree) -> Result<Option<WordMatch>> {
    if tree.is_empty() {
        return Err(Error::EmptyLexicon);
    }
    let frames = segment.frames();
    if frames == 0 {
        return Ok(None);
    }
    let nodes = &tree.nodes;
    let ninf = f64::NEG_INFINITY;
    // in_label[v]: last frame emitted v's class; after_blank[v]: v completed,
    // currently in blank frames (for the root: leading blanks)
    let mut in_label = vec![ninf; nodes.len()];
    let mut after_blank = vec![ninf; nodes.len()];
    let mut next_label = vec![ninf; nodes.len()];
    let mut next_blank = vec![ninf; nodes.len()];

    let lp = |t: usize, k: usize| segment.get(t, k).ln();
    after_blank[0] = lp(0, BLANK);
    for &c in &nodes[0].children {
        in_label[c] = lp(0, nodes[c].label);
    }

    for t in 1..frames {
        next_label.iter_mut().for_each(|v| *v = ninf);
        next_blank.iter_mut().for_each(|v| *v = ninf);
        let blank = lp(t, BLANK);
        for (v, node) in nodes.iter().enumerate() {
            let stay = if v == 0 { after_blank[0] } else { in_label[v].max(after_blank[v]) };
            if stay > ninf {
                next_blank[v] = stay + blank;
            }
            for &c in &node.children {
                let label = nodes[c].label;
                let mut best = in_label[c].max(after_blank[v]);
                if v != 0 && node.label != label {
                    best = best.max(in_label[v]);
                }
                if best > ninf {
                    let cand = best + lp(t, label);
                    if cand > next_label[c] {
                        next_label[c] = cand;
                    }
                }
            }
        }
        std::mem::swap(&mut in_label, &mut next_label);
        std::mem::swap(&mut after_blank, &mut next_blank);
    }

    let mut best: Option<(usize, f64)> = None;
    let mut ends: Vec<(usize, f64)> = nodes
        .iter()
        .enumerate()
        .filter_map(|(v, n)| n.word.map(|w| (w, in_label[v].max(after_blank[v]))))
        .collect();
    ends.sort_by_key(|&(w, _)| w);
    for (w, score) in ends {
        if score > ninf && best.is_none_or(|(_, b)| score > b) {
            best = Some((w, score));
        }
    }
    Ok(best.map(|(w, log_prob)| WordMatch {
        word: tree.words[w].clone(),
        score: (log_prob / frames as f64).exp(),
        log_prob,
    }))
}

/// Dictionary word when its score reaches `theta`, otherwise the best path.
/// Both are returned in spatial order, like the segment itself.
pub fn decode_segment(
    segment: &ProbMatrix,
    alphabet: &Alphabet,
    tree: Option<&PrefixTree>,
    cfg: &DecoderConfig,
) -> Result<String> {
    let raw = || best_path(segment, alphabet);
    let tree = match tree {
        Some(t) if cfg.use_dictionary => t,
        _ => return Ok(raw()),
    };
    match word_viterbi(segment, tree)? {
        Some(m) if m.score >= cfg.theta => Ok(reorder_line(&m.word)),
        _ => Ok(raw()),
    }
}

/// Spatial (left-to-right) word segments of a line with their frame ranges.
pub fn segment_line(probs: &ProbMatrix, alphabet: &Alphabet) -> Vec<(std::ops::Range<usize>, String)> {
    let path = argmax_path(probs);
    let space = alphabet.space();
    let mut out = Vec::new();
    let mut start = 0;
    while start < path.len() {
        if path[start] == space {
            start += 1;
            continue;
        }
        let mut end = start;
        while end < path.len() && path[end] != space {
            end += 1;
        }
        let text = alphabet.decode(&collapse(&path[start..end]));
        if !text.is_empty() {
            out.push((start..end, text));
        }
        start = end;
    }
    out
}

/// Decodes a whole line: splits at space frames, looks Arabic segments up in
/// the dictionary and returns the words in logical reading order.
pub fn decode_line(
    probs: &ProbMatrix,
    alphabet: &Alphabet,
    tree: Option<&PrefixTree>,
    cfg: &DecoderConfig,
) -> Result<String> {
    let mut words = Vec::new();
    for (range, raw) in segment_line(probs, alphabet) {
        let word = if tree.is_some() && cfg.use_dictionary && is_arabic_word(&raw) {
            decode_segment(&probs.slice(range.start, range.end), alphabet, tree, cfg)?
        } else {
            raw
        };
        words.push(word);
    }
    let flags: Vec<bool> = words.iter().map(|w| is_arabic_word(w)).collect();
    Ok(bidi_fix(&words, &flags))
}

/// Arabic script blocks: Arabic, Arabic Supplement, Presentation Forms A and B.
pub fn is_arabic_char(c: char) -> bool {
    matches!(c as u32,
        0x0600..=0x06FF | 0x0750..=0x077F | 0xFB50..=0xFDFF | 0xFE70..=0xFEFF)
}

/// True when the word has at least one letter and all its letters are Arabic.
pub fn is_arabic_word(word: &str) -> bool {
    let mut letters = word.chars().filter(|c| c.is_alphabetic()).peekable();
    letters.peek().is_some() && letters.all(is_arabic_char)
}

/// Converts spatial (left-to-right image) word order into logical reading
/// order: reverses the word sequence and the characters of Arabic words.
pub fn bidi_fix<S: AsRef<str>>(words: &[S], arabic: &[bool]) -> String {
    assert_eq!(words.len(), arabic.len(), "one flag per word");
    words
        .iter()
        .zip(arabic)
        .rev()
        .map(|(w, &ar)| {
            if ar {
                w.as_ref().chars().rev().collect()
            } else {
                w.as_ref().to_string()
            }
        })
        .collect::<Vec<String>>()
        .join(" ")
}

/// Applies [`bidi_fix`] to a space-separated line. The map is its own inverse,
/// so it converts logical order to spatial order as well.
pub fn reorder_line(line: &str) -> String {
    let words: Vec<&str> = line.split(' ').filter(|w| !w.is_empty()).collect();
    let flags: Vec<bool> = words.iter().map(|w| is_arabic_word(w)).collect();
    bidi_fix(&words, &flags)
}
