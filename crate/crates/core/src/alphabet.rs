//! Character classes of the network output.
//!
//! A class is a non-empty string, usually one codepoint; runs of two or three
//! dots get classes of their own. Index 0 is the blank, real classes start at 1.
//!
//! File format: UTF-8, one entry per line. The first line is the blank
//! placeholder, every following line one class (a line holding a single space
//! is the space class).

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_BLANK: &str = "<blank>";
pub const SPACE: &str = " ";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    blank_symbol: String,
    /// `classes[0]` is the blank placeholder.
    classes: Vec<String>,
    space: usize,
}

impl Alphabet {
    /// Builds an alphabet from its classes (blank excluded), in output order.
    pub fn new<S: Into<String>>(classes: impl IntoIterator<Item = S>) -> Result<Self> {
        Alphabet::with_blank(DEFAULT_BLANK, classes)
    }

    pub fn with_blank<S: Into<String>>(blank: &str, classes: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut all = vec![blank.to_string()];
        let mut seen = BTreeSet::new();
        for c in classes {
            let c: String = c.into();
            if c.is_empty() {
                return Err(Error::Alphabet("empty class".into()));
            }
            if !seen.insert(c.clone()) {
                return Err(Error::Alphabet(format!("duplicate class {c:?}")));
            }
            all.push(c);
        }
        let space = all
            .iter()
            .skip(1)
            .position(|c| c == SPACE)
            .map(|i| i + 1)
            .ok_or_else(|| Error::Alphabet("no space class".into()))?;
        Ok(Alphabet {
            blank_symbol: blank.to_string(),
            classes: all,
            space,
        })
    }

    /// Number of real classes (blank excluded).
    pub fn len(&self) -> usize {
        self.classes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Network output width, blank included.
    pub fn output_size(&self) -> usize {
        self.classes.len()
    }

    pub fn space(&self) -> usize {
        self.space
    }

    pub fn blank_symbol(&self) -> &str {
        &self.blank_symbol
    }

    /// Text of class `index` (the blank maps to "").
    pub fn class(&self, index: usize) -> &str {
        if index == 0 {
            ""
        } else {
            &self.classes[index]
        }
    }

    pub fn classes(&self) -> &[String] {
        &self.classes[1..]
    }

    pub fn index_of(&self, class: &str) -> Option<usize> {
        self.classes.iter().skip(1).position(|c| c == class).map(|i| i + 1)
    }

    /// Spells `text` by greedy longest match over the classes.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        let max_len = self.classes.iter().skip(1).map(|c| c.len()).max().unwrap_or(1);
        let mut out = Vec::new();
        let mut rest = text;
        while !rest.is_empty() {
            let mut found = None;
            let mut end = rest.len().min(max_len);
            while end > 0 {
                if rest.is_char_boundary(end) {
                    if let Some(i) = self.index_of(&rest[..end]) {
                        found = Some((i, end));
                        break;
                    }
                }
                end -= 1;
            }
            let (i, used) = found.ok_or_else(|| Error::Unspellable { text: text.to_string() })?;
            out.push(i);
            rest = &rest[used..];
        }
        Ok(out)
    }

    pub fn can_spell(&self, text: &str) -> bool {
        self.encode(text).is_ok()
    }

    pub fn decode(&self, labels: &[usize]) -> String {
        labels.iter().map(|&l| self.class(l)).collect()
    }

    pub fn parse(content: &str) -> Result<Self> {
        let mut lines: Vec<&str> = content.split('\n').collect();
        if lines.last() == Some(&"") {
            lines.pop();
        }
        let mut lines = lines.into_iter().map(|l| l.strip_suffix('\r').unwrap_or(l));
        let blank = lines
            .next()
            .ok_or_else(|| Error::Alphabet("empty alphabet file".into()))?;
        Alphabet::with_blank(blank, lines)
    }

    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for c in &self.classes {
            s.push_str(c);
            s.push('\n');
        }
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Alphabet::parse(&content)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    /// Collects the classes needed to spell every transcript. Runs of dots
    /// become triple- and double-dot classes; the space class is always present.
    pub fn derive<'a>(transcripts: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut classes = BTreeSet::new();
        let mut any = false;
        for t in transcripts {
            any = true;
            classes.extend(tokenize(t));
        }
        if !any {
            return Err(Error::Alphabet("cannot derive an alphabet from an empty corpus".into()));
        }
        classes.insert(SPACE.to_string());
        Alphabet::new(classes)
    }
}

/// Splits text into class tokens: single codepoints, with every run of `.`
/// cut greedily into pieces of three, then two or one.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut dots = 0usize;
    let flush = |dots: &mut usize, out: &mut Vec<String>| {
        while *dots > 0 {
            let take = (*dots).min(3);
            out.push(".".repeat(take));
            *dots -= take;
        }
    };
    for c in text.chars() {
        if c == '.' {
            dots += 1;
        } else {
            flush(&mut dots, &mut out);
            out.push(c.to_string());
        }
    }
    flush(&mut dots, &mut out);
    out
}
