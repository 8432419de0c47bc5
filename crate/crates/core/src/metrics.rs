//! Word and character error rates.

/// Levenshtein distance between two token sequences (unit costs).
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn words(line: &str) -> Vec<&str> {
    line.split(' ').filter(|w| !w.is_empty()).collect()
}

/// Edit counts of one hypothesis/reference pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub word_errors: usize,
    pub ref_words: usize,
    pub char_errors: usize,
    pub ref_chars: usize,
}

impl EditCounts {
    pub fn of(hyp: &str, reference: &str) -> Self {
        let (hw, rw) = (words(hyp), words(reference));
        let hc: Vec<char> = hyp.chars().collect();
        let rc: Vec<char> = reference.chars().collect();
        EditCounts {
            word_errors: levenshtein(&hw, &rw),
            ref_words: rw.len(),
            char_errors: levenshtein(&hc, &rc),
            ref_chars: rc.len(),
        }
    }

    pub fn add(&mut self, other: EditCounts) {
        self.word_errors += other.word_errors;
        self.ref_words += other.ref_words;
        self.char_errors += other.char_errors;
        self.ref_chars += other.ref_chars;
    }

    /// Word error rate in percent.
    pub fn wer(&self) -> f64 {
        percent(self.word_errors, self.ref_words)
    }

    /// Character error rate in percent.
    pub fn cer(&self) -> f64 {
        percent(self.char_errors, self.ref_chars)
    }
}

fn percent(errors: usize, total: usize) -> f64 {
    if total == 0 {
        if errors == 0 {
            0.0
        } else {
            100.0
        }
    } else {
        100.0 * errors as f64 / total as f64
    }
}

/// Corpus-level edit counts over `(hypothesis, reference)` pairs.
pub fn score_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> EditCounts {
    let mut total = EditCounts::default();
    for (h, r) in pairs {
        total.add(EditCounts::of(h, r));
    }
    total
}
