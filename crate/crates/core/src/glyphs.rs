//! Built-in polyline stroke font for synthetic handwriting.
//!
//! Coordinates are in x-height units: `y = 0` is the baseline, `y = 1` the
//! top of the main body, ascenders reach 1.6 and descenders -0.6. Each glyph
//! spans `0..advance` horizontally. Arabic letters use simplified isolated
//! forms; they only need to be distinct, not calligraphic.

use std::f64::consts::PI;

pub type Stroke = Vec<(f64, f64)>;

#[derive(Clone, Debug, PartialEq)]
pub struct Glyph {
    pub advance: f64,
    pub strokes: Vec<Stroke>,
}

/// Advance of the space character.
pub const SPACE_ADVANCE: f64 = 0.8;

pub const LATIN: &str = "abcdehiklnorstux";
pub const DIGITS: &str = "0123456789";
pub const PUNCT: &str = ".,";
pub const ARABIC: &str = "ابتدرسعفلمهون";

/// Every character the font can draw, space included.
pub fn charset() -> String {
    format!("{LATIN}{DIGITS}{PUNCT}{ARABIC} ")
}

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, from_deg: f64, to_deg: f64) -> Stroke {
    let steps = (((to_deg - from_deg).abs() / 15.0).ceil() as usize).max(2);
    (0..=steps)
        .map(|i| {
            let a = (from_deg + (to_deg - from_deg) * i as f64 / steps as f64) * PI / 180.0;
            (cx + rx * a.cos(), cy + ry * a.sin())
        })
        .collect()
}

fn line(points: &[(f64, f64)]) -> Stroke {
    points.to_vec()
}

fn dot(x: f64, y: f64) -> Stroke {
    vec![(x, y)]
}

fn chain(parts: &[Stroke]) -> Stroke {
    parts.iter().flatten().copied().collect()
}

fn tray() -> Stroke {
    line(&[(0.0, 0.5), (0.03, 0.1), (0.2, 0.0), (0.8, 0.0), (0.97, 0.1), (1.0, 0.5)])
}

/// Stroke glyph of `c`, or `None` when the font lacks it. Space has no strokes.
pub fn glyph(c: char) -> Option<Glyph> {
    let g = |advance: f64, strokes: Vec<Stroke>| Some(Glyph { advance, strokes });
    match c {
        ' ' => g(SPACE_ADVANCE, vec![]),
        'a' => g(0.8, vec![arc(0.35, 0.5, 0.33, 0.5, 0.0, 360.0), line(&[(0.7, 1.0), (0.7, 0.0)])]),
        'b' => g(0.85, vec![line(&[(0.05, 1.6), (0.05, 0.0)]), arc(0.4, 0.5, 0.35, 0.5, 0.0, 360.0)]),
        'c' => g(0.75, vec![arc(0.38, 0.5, 0.36, 0.5, 40.0, 320.0)]),
        'd' => g(0.8, vec![arc(0.35, 0.5, 0.33, 0.5, 0.0, 360.0), line(&[(0.7, 1.6), (0.7, 0.0)])]),
        'e' => g(0.8, vec![line(&[(0.02, 0.5), (0.72, 0.5)]), arc(0.37, 0.5, 0.35, 0.5, 0.0, 300.0)]),
        'h' => g(
            0.8,
            vec![
                line(&[(0.05, 1.6), (0.05, 0.0)]),
                chain(&[arc(0.35, 0.6, 0.3, 0.4, 180.0, 0.0), line(&[(0.65, 0.0)])]),
            ],
        ),
        'i' => g(0.35, vec![line(&[(0.15, 0.0), (0.15, 1.0)]), dot(0.15, 1.35)]),
        'k' => g(
            0.75,
            vec![
                line(&[(0.05, 1.6), (0.05, 0.0)]),
                line(&[(0.6, 1.0), (0.05, 0.4)]),
                line(&[(0.25, 0.6), (0.65, 0.0)]),
            ],
        ),
        'l' => g(0.35, vec![line(&[(0.15, 0.0), (0.15, 1.6)])]),
        'n' => g(
            0.8,
            vec![
                line(&[(0.05, 1.0), (0.05, 0.0)]),
                chain(&[arc(0.35, 0.6, 0.3, 0.4, 180.0, 0.0), line(&[(0.65, 0.0)])]),
            ],
        ),
        'o' => g(0.8, vec![arc(0.38, 0.5, 0.36, 0.5, 0.0, 360.0)]),
        'r' => g(0.6, vec![line(&[(0.05, 1.0), (0.05, 0.0)]), arc(0.35, 0.6, 0.3, 0.35, 180.0, 45.0)]),
        's' => g(
            0.7,
            vec![chain(&[arc(0.35, 0.75, 0.3, 0.25, 30.0, 270.0), arc(0.35, 0.25, 0.3, 0.25, 90.0, -150.0)])],
        ),
        't' => g(
            0.6,
            vec![line(&[(0.25, 1.45), (0.25, 0.15), (0.45, 0.0)]), line(&[(0.02, 1.0), (0.5, 1.0)])],
        ),
        'u' => g(
            0.8,
            vec![
                chain(&[line(&[(0.05, 1.0)]), arc(0.35, 0.4, 0.3, 0.4, 180.0, 360.0), line(&[(0.65, 1.0)])]),
                line(&[(0.65, 1.0), (0.65, 0.0)]),
            ],
        ),
        'x' => g(0.7, vec![line(&[(0.0, 1.0), (0.65, 0.0)]), line(&[(0.0, 0.0), (0.65, 1.0)])]),
        '0' => g(0.75, vec![arc(0.35, 0.7, 0.33, 0.7, 0.0, 360.0)]),
        '1' => g(0.6, vec![line(&[(0.15, 1.1), (0.4, 1.4), (0.4, 0.0)])]),
        '2' => g(
            0.75,
            vec![chain(&[arc(0.35, 1.05, 0.3, 0.33, 160.0, -30.0), line(&[(0.02, 0.0), (0.68, 0.0)])])],
        ),
        '3' => g(
            0.75,
            vec![chain(&[arc(0.33, 1.05, 0.3, 0.33, 150.0, -90.0), arc(0.33, 0.37, 0.33, 0.37, 90.0, -150.0)])],
        ),
        '4' => g(0.75, vec![line(&[(0.5, 0.0), (0.5, 1.4), (0.0, 0.45), (0.7, 0.45)])]),
        '5' => g(
            0.75,
            vec![chain(&[line(&[(0.65, 1.4), (0.1, 1.4), (0.05, 0.8)]), arc(0.35, 0.45, 0.32, 0.45, 130.0, -150.0)])],
        ),
        '6' => g(0.75, vec![line(&[(0.6, 1.4), (0.12, 0.55)]), arc(0.37, 0.4, 0.32, 0.4, 0.0, 360.0)]),
        '7' => g(0.75, vec![line(&[(0.02, 1.4), (0.68, 1.4), (0.25, 0.0)])]),
        '8' => g(
            0.75,
            vec![arc(0.35, 1.05, 0.27, 0.35, 0.0, 360.0), arc(0.35, 0.37, 0.32, 0.37, 0.0, 360.0)],
        ),
        '9' => g(0.75, vec![arc(0.35, 1.0, 0.3, 0.4, 0.0, 360.0), line(&[(0.65, 1.0), (0.45, 0.0)])]),
        '.' => g(0.35, vec![dot(0.15, 0.05)]),
        ',' => g(0.35, vec![line(&[(0.18, 0.1), (0.08, -0.25)])]),
        'ا' => g(0.35, vec![line(&[(0.15, 0.0), (0.15, 1.5)])]),
        'ب' => g(1.05, vec![tray(), dot(0.5, -0.35)]),
        'ت' => g(1.05, vec![tray(), dot(0.38, 0.55), dot(0.62, 0.55)]),
        'د' => g(0.7, vec![line(&[(0.15, 1.0), (0.55, 0.45), (0.55, 0.0), (0.05, 0.0)])]),
        'ر' => g(0.7, vec![line(&[(0.55, 0.7), (0.5, 0.1), (0.3, -0.35), (0.0, -0.5)])]),
        'س' => g(
            1.3,
            vec![chain(&[
                line(&[(1.2, 0.5), (1.2, 0.05), (1.05, 0.05), (1.0, 0.45), (0.95, 0.05), (0.8, 0.05), (0.76, 0.45)]),
                arc(0.4, 0.1, 0.36, 0.55, 0.0, -180.0),
            ])],
        ),
        'ع' => g(
            0.85,
            vec![
                arc(0.45, 0.9, 0.28, 0.28, 20.0, 270.0),
                line(&[(0.45, 0.62), (0.25, 0.35), (0.2, -0.1), (0.35, -0.45), (0.7, -0.5)]),
            ],
        ),
        'ف' => g(
            1.05,
            vec![
                arc(0.8, 0.5, 0.18, 0.2, 0.0, 360.0),
                line(&[(0.62, 0.45), (0.6, 0.05), (0.4, 0.0), (0.05, 0.0), (0.0, 0.3)]),
                dot(0.8, 1.05),
            ],
        ),
        'ل' => g(
            0.9,
            vec![line(&[(0.75, 1.6), (0.75, 0.1), (0.6, -0.35), (0.3, -0.45), (0.05, -0.3), (0.0, 0.1)])],
        ),
        'م' => g(0.85, vec![arc(0.6, 0.2, 0.2, 0.22, 0.0, 360.0), line(&[(0.4, 0.2), (0.3, -0.1), (0.25, -0.6)])]),
        'ه' => g(0.85, vec![arc(0.4, 0.4, 0.35, 0.4, 0.0, 360.0), line(&[(0.2, 0.3), (0.5, 0.6)])]),
        'و' => g(
            0.9,
            vec![chain(&[
                arc(0.55, 0.4, 0.2, 0.22, -90.0, 270.0),
                line(&[(0.75, 0.4), (0.7, 0.0), (0.4, -0.4), (0.0, -0.5)]),
            ])],
        ),
        'ن' => g(1.0, vec![arc(0.45, 0.3, 0.42, 0.55, 190.0, 350.0), dot(0.45, 0.85)]),
        _ => None,
    }
}
