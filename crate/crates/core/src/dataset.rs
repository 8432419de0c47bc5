//! Synthetic line generation, corpus directories and dictionary building.
//!
//! Corpus layout:
//!
//! ```text
//! <dir>/transcripts.tsv         page_id<TAB>line_id<TAB>text, one row per line
//! <dir>/pages/<page_id>/<line_id>.pgm
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::alphabet::Alphabet;
use crate::decoder::{is_arabic_word, reorder_line, THETA_DEFAULT, THETA_ENLARGED};
use crate::error::{Error, Result};
use crate::glyphs::{glyph, SPACE_ADVANCE};
use crate::image::GrayImage;
use crate::lexicon::Lexicon;

pub const TRANSCRIPTS: &str = "transcripts.tsv";

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    /// Characters the generator may draw (space is always allowed).
    pub glyphs: String,
    /// Inclusive range of words per generated line.
    pub words_per_line: (usize, usize),
    /// Inclusive range of letters per generated word.
    pub word_length: (usize, usize),
    /// Peak displacement of the sinusoidal baseline, in pixels.
    pub wobble_amplitude: f64,
    /// Wavelength range of the baseline wobble, in pixels.
    pub wobble_period: (f64, f64),
    /// Slant is drawn uniformly from `[-slant_range, slant_range]` radians.
    pub slant_range: f64,
    pub stroke_thickness: f64,
    /// Standard deviation of additive Gaussian noise.
    pub noise: f64,
    /// x-height in pixels.
    pub x_height: f64,
    /// Extra space between glyphs, in x-height units.
    pub letter_gap: f64,
    /// Inclusive range of image heights in pixels.
    pub height: (usize, usize),
    pub margin: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            glyphs: crate::glyphs::LATIN.to_string(),
            words_per_line: (1, 3),
            word_length: (2, 5),
            wobble_amplitude: 8.0,
            wobble_period: (250.0, 500.0),
            slant_range: 0.25,
            stroke_thickness: 5.0,
            noise: 0.03,
            x_height: 40.0,
            letter_gap: 0.3,
            height: (120, 260),
            margin: 20,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Letters usable in generated words (the configured glyphs minus space).
    pub fn letters(&self) -> Vec<char> {
        let mut v: Vec<char> = self.glyphs.chars().filter(|&c| c != ' ').collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    fn allows(&self, c: char) -> bool {
        c == ' ' || self.glyphs.contains(c)
    }
}

fn segment_distance(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

/// Draws an anti-aliased thick segment, keeping the maximum intensity.
fn draw_segment(img: &mut GrayImage, a: (f64, f64), b: (f64, f64), radius: f64) {
    let reach = radius + 1.0;
    let x0 = (a.0.min(b.0) - reach).floor().max(0.0) as usize;
    let y0 = (a.1.min(b.1) - reach).floor().max(0.0) as usize;
    let x1 = ((a.0.max(b.0) + reach).ceil() as usize).min(img.width() - 1);
    let y1 = ((a.1.max(b.1) + reach).ceil() as usize).min(img.height() - 1);
    if x0 > x1 || y0 > y1 {
        return;
    }
    for y in y0..=y1 {
        for x in x0..=x1 {
            let d = segment_distance(x as f64, y as f64, a, b);
            let v = (radius + 0.5 - d).clamp(0.0, 1.0) as f32;
            if v > img.get(x, y) {
                img.set(x, y, v);
            }
        }
    }
}

/// Renders `text` (given in logical order) as a raw handwriting line. Words
/// are laid out in spatial order, so Arabic words run right to left.
pub fn synth_line(text: &str, cfg: &SynthConfig, rng: &mut impl Rng) -> Result<GrayImage> {
    if let Some(bad) = text.chars().find(|&c| !cfg.allows(c) || glyph(c).is_none()) {
        return Err(Error::Unspellable {
            text: format!("{text} (no glyph for {bad:?})"),
        });
    }
    let (hmin, hmax) = cfg.height;
    let height = rng.random_range(hmin..=hmax.max(hmin));
    let unit = cfg.x_height;
    let visual = reorder_line(text);

    let mut placed: Vec<(f64, Vec<Vec<(f64, f64)>>)> = Vec::new();
    let mut cursor = cfg.margin as f64;
    let words: Vec<&str> = visual.split(' ').collect();
    for (wi, word) in words.iter().enumerate() {
        if wi > 0 {
            cursor += SPACE_ADVANCE * unit;
        }
        for c in word.chars() {
            let g = glyph(c).expect("checked above");
            placed.push((cursor, g.strokes));
            cursor += (g.advance + cfg.letter_gap) * unit;
        }
    }
    let width = if placed.is_empty() {
        2 * cfg.margin
    } else {
        (cursor + cfg.margin as f64).ceil() as usize
    };
    let mut img = GrayImage::new(width.max(1), height);
    if placed.is_empty() {
        return Ok(img);
    }

    let amp = cfg.wobble_amplitude;
    let period = if cfg.wobble_period.1 > cfg.wobble_period.0 {
        rng.random_range(cfg.wobble_period.0..cfg.wobble_period.1)
    } else {
        cfg.wobble_period.0.max(1.0)
    };
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let slant = if cfg.slant_range > 0.0 {
        rng.random_range(-cfg.slant_range..=cfg.slant_range)
    } else {
        0.0
    };
    // keep ascenders (1.6) and descenders (0.6) inside the canvas
    let top_room = 1.6 * unit + amp + cfg.stroke_thickness;
    let bottom_room = 0.6 * unit + amp + cfg.stroke_thickness;
    let free = (height as f64 - top_room - bottom_room).max(0.0);
    let y0 = top_room + free * rng.random_range(0.3..=0.7);
    let baseline = |x: f64| y0 + amp * (std::f64::consts::TAU * x / period + phase).sin();
    let tan = slant.tan();
    let radius = cfg.stroke_thickness / 2.0;

    for (origin, strokes) in &placed {
        for stroke in strokes {
            let pts: Vec<(f64, f64)> = stroke
                .iter()
                .map(|&(gx, gy)| {
                    let x = origin + gx * unit;
                    (x + gy * unit * tan, baseline(x) - gy * unit)
                })
                .collect();
            if pts.len() == 1 {
                draw_segment(&mut img, pts[0], pts[0], radius * 1.3);
            }
            for w in pts.windows(2) {
                draw_segment(&mut img, w[0], w[1], radius);
            }
        }
    }

    if cfg.noise > 0.0 {
        let normal = Normal::new(0.0, cfg.noise).expect("valid noise level");
        for y in 0..img.height() {
            for x in 0..img.width() {
                let v = img.get(x, y) + normal.sample(rng) as f32;
                img.set(x, y, v);
            }
        }
    }
    Ok(img)
}

/// `count` distinct random words over `letters`.
pub fn random_vocabulary(letters: &[char], count: usize, length: (usize, usize), rng: &mut impl Rng) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        assert!(attempts < 1000 * (count + 1), "cannot draw {count} distinct words");
        let len = rng.random_range(length.0..=length.1.max(length.0));
        let w: String = (0..len).map(|_| *letters.choose(rng).expect("letters")).collect();
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// A random line of words, either drawn from `vocabulary` or made up.
pub fn random_text(cfg: &SynthConfig, vocabulary: Option<&[String]>, rng: &mut impl Rng) -> String {
    let (lo, hi) = cfg.words_per_line;
    let n = rng.random_range(lo.max(1)..=hi.max(lo.max(1)));
    let letters = cfg.letters();
    (0..n)
        .map(|_| match vocabulary {
            Some(v) => v.choose(rng).expect("vocabulary").clone(),
            None => {
                let len = rng.random_range(cfg.word_length.0..=cfg.word_length.1.max(cfg.word_length.0));
                (0..len).map(|_| *letters.choose(rng).expect("letters")).collect()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// One transcribed line image.
#[derive(Clone, Debug, PartialEq)]
pub struct LineRecord {
    pub page: String,
    pub line: String,
    pub text: String,
    pub image: GrayImage,
}

/// Generates `pages x lines_per_page` synthetic lines.
pub fn synth_corpus(
    cfg: &SynthConfig,
    pages: usize,
    lines_per_page: usize,
    vocabulary: Option<&[String]>,
    rng: &mut impl Rng,
) -> Result<Vec<LineRecord>> {
    let mut out = Vec::with_capacity(pages * lines_per_page);
    for p in 0..pages {
        for l in 0..lines_per_page {
            let text = random_text(cfg, vocabulary, rng);
            let image = synth_line(&text, cfg, rng)?;
            out.push(LineRecord {
                page: format!("p{p:05}"),
                line: format!("l{l:03}"),
                text,
                image,
            });
        }
    }
    Ok(out)
}

/// Transcript row of a corpus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusLine {
    pub line: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Page {
    pub id: String,
    pub lines: Vec<CorpusLine>,
}

/// A corpus directory: transcripts in memory, images loaded on demand.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub root: PathBuf,
    pub pages: Vec<Page>,
}

fn check_id(id: &str, what: &str) -> Result<()> {
    if id.is_empty() || id.contains(['/', '\\', '\t', '\n']) || id == "." || id == ".." {
        return Err(Error::Corpus(format!("invalid {what} id {id:?}")));
    }
    Ok(())
}

impl Corpus {
    pub fn image_path(&self, page: &str, line: &str) -> PathBuf {
        image_path(&self.root, page, line)
    }

    pub fn load_image(&self, page: &str, line: &str) -> Result<GrayImage> {
        GrayImage::load_pgm(self.image_path(page, line))
    }

    pub fn line_count(&self) -> usize {
        self.pages.iter().map(|p| p.lines.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    /// `(page, line, text)` for every line in file order.
    pub fn lines(&self) -> impl Iterator<Item = (&str, &CorpusLine)> {
        self.pages
            .iter()
            .flat_map(|p| p.lines.iter().map(move |l| (p.id.as_str(), l)))
    }

    pub fn transcripts(&self) -> impl Iterator<Item = &str> {
        self.lines().map(|(_, l)| l.text.as_str())
    }

    /// Loads every image, returning the records in file order.
    pub fn records(&self) -> Result<Vec<LineRecord>> {
        self.lines()
            .map(|(page, l)| {
                Ok(LineRecord {
                    page: page.to_string(),
                    line: l.line.clone(),
                    text: l.text.clone(),
                    image: self.load_image(page, &l.line)?,
                })
            })
            .collect()
    }
}

fn image_path(root: &Path, page: &str, line: &str) -> PathBuf {
    root.join("pages").join(page).join(format!("{line}.pgm"))
}

/// Reads a corpus directory. A directory without a transcript file is an
/// empty corpus.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus> {
    let root = dir.as_ref().to_path_buf();
    let tsv = root.join(TRANSCRIPTS);
    let mut corpus = Corpus {
        root: root.clone(),
        pages: Vec::new(),
    };
    if !tsv.exists() {
        if !root.is_dir() {
            return Err(Error::Corpus(format!("{} is not a directory", root.display())));
        }
        return Ok(corpus);
    }
    let content = fs::read_to_string(&tsv).map_err(|e| Error::io(&tsv, e))?;
    let mut page_index: HashMap<String, usize> = HashMap::new();
    let mut keys = HashSet::new();
    for (n, raw) in content.split('\n').enumerate() {
        let row = raw.strip_suffix('\r').unwrap_or(raw);
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.splitn(3, '\t').collect();
        if fields.len() != 3 {
            return Err(Error::Corpus(format!(
                "{}:{}: expected page<TAB>line<TAB>text",
                tsv.display(),
                n + 1
            )));
        }
        let (page, line, text) = (fields[0], fields[1], fields[2]);
        check_id(page, "page")?;
        check_id(line, "line")?;
        if text.contains('\t') {
            return Err(Error::Corpus(format!("{}:{}: tab inside transcript", tsv.display(), n + 1)));
        }
        if !keys.insert((page.to_string(), line.to_string())) {
            return Err(Error::Corpus(format!(
                "{}:{}: duplicate line {page}/{line}",
                tsv.display(),
                n + 1
            )));
        }
        let path = image_path(&root, page, line);
        if !path.is_file() {
            return Err(Error::Corpus(format!(
                "{}:{}: missing image {} for line {page}/{line}",
                tsv.display(),
                n + 1,
                path.display()
            )));
        }
        let idx = *page_index.entry(page.to_string()).or_insert_with(|| {
            corpus.pages.push(Page {
                id: page.to_string(),
                lines: Vec::new(),
            });
            corpus.pages.len() - 1
        });
        corpus.pages[idx].lines.push(CorpusLine {
            line: line.to_string(),
            text: text.to_string(),
        });
    }
    Ok(corpus)
}

/// Writes records as a corpus directory (images and transcript file).
pub fn save_corpus(dir: impl AsRef<Path>, records: &[LineRecord]) -> Result<Corpus> {
    let root = dir.as_ref();
    let mut tsv = String::new();
    let mut keys = HashSet::new();
    for r in records {
        check_id(&r.page, "page")?;
        check_id(&r.line, "line")?;
        if r.text.contains(['\t', '\n', '\r']) {
            return Err(Error::Corpus(format!("transcript of {}/{} contains a tab or newline", r.page, r.line)));
        }
        if !keys.insert((&r.page, &r.line)) {
            return Err(Error::Corpus(format!("duplicate line {}/{}", r.page, r.line)));
        }
        let path = image_path(root, &r.page, &r.line);
        let parent = path.parent().expect("page directory");
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        r.image.save_pgm(&path)?;
        tsv.push_str(&format!("{}\t{}\t{}\n", r.page, r.line, r.text));
    }
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let tsv_path = root.join(TRANSCRIPTS);
    fs::write(&tsv_path, tsv).map_err(|e| Error::io(&tsv_path, e))?;
    load_corpus(root)
}

/// Classes needed to spell every transcript of a corpus.
pub fn derive_alphabet(corpus: &Corpus) -> Result<Alphabet> {
    if corpus.is_empty() {
        return Err(Error::Alphabet("cannot derive an alphabet from an empty corpus".into()));
    }
    Alphabet::derive(corpus.transcripts())
}

/// Space-separated tokens occurring at least `min_occurrences` times,
/// optionally restricted to Arabic words.
pub fn build_dictionary<'a>(
    transcripts: impl IntoIterator<Item = &'a str>,
    min_occurrences: usize,
    arabic_only: bool,
) -> Lexicon {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in transcripts {
        for w in t.split(' ').filter(|w| !w.is_empty()) {
            *counts.entry(w).or_default() += 1;
        }
    }
    Lexicon::new(
        counts
            .into_iter()
            .filter(|&(w, c)| c >= min_occurrences.max(1) && (!arabic_only || is_arabic_word(w)))
            .map(|(w, _)| w.to_string()),
    )
}

/// Source sub-corpora of a dictionary build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SubCorpus {
    /// Stand-in for the training sets.
    Train,
    /// Stand-in for the first evaluation set.
    Eval,
    /// Stand-in for the dry-run evaluation set.
    DryRun,
}

/// A named dictionary/threshold combination. Decoder #1 (no dictionary) is
/// plain best-path decoding and has no profile.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderProfile {
    pub number: u8,
    pub sources: Vec<SubCorpus>,
    pub min_occurrences: usize,
    pub theta: f64,
}

impl DecoderProfile {
    pub fn build<'a>(&self, sources: &HashMap<SubCorpus, Vec<&'a str>>) -> Lexicon {
        let texts = self
            .sources
            .iter()
            .filter_map(|s| sources.get(s))
            .flat_map(|v| v.iter().copied());
        build_dictionary(texts, self.min_occurrences, true)
    }
}

/// Decoder profiles #2 to #6.
pub fn decoder_profiles() -> Vec<DecoderProfile> {
    use SubCorpus::*;
    let base = vec![Train, Eval];
    let with_dryrun = vec![Train, Eval, DryRun];
    vec![
        DecoderProfile { number: 2, sources: base.clone(), min_occurrences: 1, theta: THETA_DEFAULT },
        DecoderProfile { number: 3, sources: base.clone(), min_occurrences: 1, theta: THETA_ENLARGED },
        DecoderProfile { number: 4, sources: base, min_occurrences: 3, theta: THETA_DEFAULT },
        DecoderProfile { number: 5, sources: with_dryrun.clone(), min_occurrences: 1, theta: THETA_DEFAULT },
        DecoderProfile { number: 6, sources: with_dryrun, min_occurrences: 3, theta: THETA_DEFAULT },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{estimate_median_curve, preprocess_line, NormConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn clean() -> SynthConfig {
        SynthConfig {
            wobble_amplitude: 0.0,
            slant_range: 0.0,
            noise: 0.0,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn clean_line_gives_flat_curve_after_preprocessing() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = synth_line("ab", &clean(), &mut rng).unwrap();
        assert!((120..=260).contains(&img.height()));
        assert!(!img.is_blank());
        let cfg = NormConfig::default();
        let out = preprocess_line(&img, &cfg);
        let curve = estimate_median_curve(&out, &cfg);
        assert!(curve.max_deviation() <= 1.0, "deviation {}", curve.max_deviation());
    }

    #[test]
    fn generation_is_seeded() {
        let cfg = SynthConfig::default();
        let a = synth_line("hello", &cfg, &mut ChaCha8Rng::seed_from_u64(5));
        let b = synth_line("hello", &cfg, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a.unwrap(), b.unwrap());
    }

    #[test]
    fn empty_text_is_blank_margin_image() {
        let cfg = SynthConfig::default();
        let img = synth_line("", &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(img.width(), 2 * cfg.margin);
        assert!(img.is_blank());
    }

    #[test]
    fn unspellable_text_is_rejected() {
        let cfg = SynthConfig::default();
        assert!(synth_line("abz", &cfg, &mut ChaCha8Rng::seed_from_u64(5)).is_err());
        assert!(synth_line("ab1", &cfg, &mut ChaCha8Rng::seed_from_u64(5)).is_err());
    }

    #[test]
    fn dictionary_filters() {
        let texts = ["x x y", "x x", "x y"];
        assert_eq!(build_dictionary(texts, 3, false).words(), ["x"]);
        assert_eq!(build_dictionary(texts, 1, false).words(), ["x", "y"]);
        let mixed = ["كتاب abc", "كتاب abc abc", "كتاب abc", "كتاب abc abc abc abc abc"];
        assert_eq!(build_dictionary(mixed, 1, true).words(), ["كتاب"]);
    }

    #[test]
    fn dictionary_is_monotone_in_min_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let vocab = random_vocabulary(&['a', 'b', 'c'], 12, (1, 3), &mut rng);
        let texts: Vec<String> = (0..40)
            .map(|_| random_text(&SynthConfig::default(), Some(&vocab), &mut rng))
            .collect();
        let mut prev: Option<Lexicon> = None;
        for k in 1..8 {
            let lex = build_dictionary(texts.iter().map(String::as_str), k, false);
            if let Some(p) = &prev {
                assert!(lex.words().iter().all(|w| p.contains(w)));
            }
            prev = Some(lex);
        }
    }

    #[test]
    fn profiles_mirror_decoder_table() {
        let p = decoder_profiles();
        assert_eq!(p.iter().map(|d| d.number).collect::<Vec<_>>(), vec![2, 3, 4, 5, 6]);
        assert_eq!(p.iter().filter(|d| d.theta == THETA_ENLARGED).count(), 1);
        assert_eq!(p.iter().filter(|d| d.min_occurrences == 3).map(|d| d.number).collect::<Vec<_>>(), vec![4, 6]);
        assert_eq!(
            p.iter().filter(|d| d.sources.contains(&SubCorpus::DryRun)).map(|d| d.number).collect::<Vec<_>>(),
            vec![5, 6]
        );
    }

    #[test]
    fn corpus_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let records = synth_corpus(&SynthConfig::default(), 2, 2, None, &mut rng).unwrap();
        let corpus = save_corpus(dir.path(), &records).unwrap();
        assert_eq!(corpus.line_count(), 4);
        let back = load_corpus(dir.path()).unwrap().records().unwrap();
        for (a, b) in records.iter().zip(&back) {
            assert_eq!((&a.page, &a.line, &a.text), (&b.page, &b.line, &b.text));
            assert_eq!(a.image.quantized(), b.image);
        }
        let alphabet = derive_alphabet(&corpus).unwrap();
        assert!(corpus.transcripts().all(|t| alphabet.can_spell(t)));

        fs::remove_file(corpus.image_path("p00001", "l000")).unwrap();
        let err = load_corpus(dir.path()).unwrap_err().to_string();
        assert!(err.contains("p00001/l000"), "{err}");

        fs::write(dir.path().join(TRANSCRIPTS), "p\tl\n").unwrap();
        assert!(load_corpus(dir.path()).is_err());

        let empty = tempfile::tempdir().unwrap();
        assert!(load_corpus(empty.path()).unwrap().is_empty());
    }
}
