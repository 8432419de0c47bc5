//! Line normalization: median-curve estimation, height normalization around
//! the main body, global slant correction and the final downscale.

use crate::image::GrayImage;

/// Geometry of the normalized writing.
#[derive(Clone, Debug, PartialEq)]
pub struct NormConfig {
    /// Main-body extent above the median curve, in pixels.
    pub above: f64,
    /// Main-body extent below the median curve, in pixels.
    pub below: f64,
    pub target_height: usize,
    pub scale: f64,
    /// Pixels at or above this intensity count as ink.
    pub ink_threshold: f32,
    /// Width in columns of the sliding window used for the local median (odd).
    pub median_window: usize,
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig {
            above: 80.0,
            below: 60.0,
            target_height: 180,
            scale: 0.5,
            ink_threshold: 0.5,
            median_window: 61,
        }
    }
}

impl NormConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.above >= 0.0 && self.below >= 0.0) {
            return Err("main-body extents must be non-negative".into());
        }
        if self.above + self.below > self.target_height as f64 {
            return Err(format!(
                "main body {}+{} does not fit into target height {}",
                self.above, self.below, self.target_height
            ));
        }
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(format!("scale {} outside (0, 1]", self.scale));
        }
        if self.median_window == 0 || self.median_window % 2 == 0 {
            return Err(format!("median window {} must be odd", self.median_window));
        }
        if self.target_height == 0 {
            return Err("target height must be positive".into());
        }
        Ok(())
    }

    /// First output row of the main-body band in the normalized canvas.
    pub fn band_top(&self) -> f64 {
        ((self.target_height as f64 - self.above - self.below) / 2.0).floor()
    }

    /// Row the median curve is mapped onto.
    pub fn baseline_row(&self) -> f64 {
        self.band_top() + self.above
    }

    /// Height of the final writing presented to the network.
    pub fn output_height(&self) -> usize {
        ((self.target_height as f64 * self.scale).round() as usize).max(1)
    }
}

/// One row coordinate per image column.
#[derive(Clone, Debug, PartialEq)]
pub struct MedianCurve {
    pub values: Vec<f64>,
}

impl MedianCurve {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest deviation of any column from the curve's own median value.
    pub fn max_deviation(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        let mut sorted = self.values.clone();
        sorted.sort_by(f64::total_cmp);
        let center = sorted[sorted.len() / 2];
        self.values
            .iter()
            .map(|v| (v - center).abs())
            .fold(0.0, f64::max)
    }
}

/// Per-column median row of the ink pixels inside a sliding window of
/// `cfg.median_window` columns. Columns whose window holds no ink are
/// interpolated from the nearest ink-bearing columns.
pub fn estimate_median_curve(img: &GrayImage, cfg: &NormConfig) -> MedianCurve {
    let (w, h) = (img.width(), img.height());
    let half = cfg.median_window / 2;

    let mut column_rows: Vec<Vec<usize>> = vec![Vec::new(); w];
    for y in 0..h {
        for (x, &v) in img.row(y).iter().enumerate() {
            if v >= cfg.ink_threshold {
                column_rows[x].push(y);
            }
        }
    }

    let mut hist = vec![0usize; h];
    let mut count = 0usize;
    let add = |hist: &mut Vec<usize>, count: &mut usize, col: &[usize], sign: bool| {
        for &r in col {
            if sign {
                hist[r] += 1;
                *count += 1;
            } else {
                hist[r] -= 1;
                *count -= 1;
            }
        }
    };
    for col in column_rows.iter().take(half.min(w - 1) + 1) {
        add(&mut hist, &mut count, col, true);
    }

    let mut raw: Vec<Option<f64>> = Vec::with_capacity(w);
    for x in 0..w {
        if x > 0 {
            let entering = x + half;
            if entering < w {
                add(&mut hist, &mut count, &column_rows[entering], true);
            }
            if x > half {
                add(&mut hist, &mut count, &column_rows[x - half - 1], false);
            }
        }
        raw.push(histogram_median(&hist, count));
    }

    let values = fill_gaps(&raw, h as f64 / 2.0)
        .into_iter()
        .map(|v| v.clamp(0.0, (h - 1) as f64))
        .collect();
    MedianCurve { values }
}

fn histogram_median(hist: &[usize], count: usize) -> Option<f64> {
    if count == 0 {
        return None;
    }
    let kth = |k: usize| {
        let mut seen = 0;
        for (row, &c) in hist.iter().enumerate() {
            seen += c;
            if seen > k {
                return row;
            }
        }
        unreachable!("histogram count out of sync")
    };
    if count % 2 == 1 {
        Some(kth(count / 2) as f64)
    } else {
        Some((kth(count / 2 - 1) + kth(count / 2)) as f64 / 2.0)
    }
}

/// Linear interpolation across `None` runs, constant extrapolation at the ends.
fn fill_gaps(raw: &[Option<f64>], fallback: f64) -> Vec<f64> {
    let known: Vec<(usize, f64)> = raw
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    if known.is_empty() {
        return vec![fallback; raw.len()];
    }
    let mut out = Vec::with_capacity(raw.len());
    let mut next = 0usize;
    for i in 0..raw.len() {
        while next < known.len() && known[next].0 < i {
            next += 1;
        }
        let v = if next < known.len() && known[next].0 == i {
            known[next].1
        } else if next == 0 {
            known[0].1
        } else if next == known.len() {
            known[known.len() - 1].1
        } else {
            let (x0, y0) = known[next - 1];
            let (x1, y1) = known[next];
            y0 + (y1 - y0) * (i - x0) as f64 / (x1 - x0) as f64
        };
        out.push(v);
    }
    out
}

/// Piecewise-linear map with linear extrapolation past the outer knots.
struct PiecewiseLinear {
    knots: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    fn new(points: &[(f64, f64)]) -> Self {
        let mut knots: Vec<(f64, f64)> = Vec::with_capacity(points.len());
        for &(x, y) in points {
            match knots.last() {
                Some(&(px, _)) if x <= px => {}
                _ => knots.push((x, y)),
            }
        }
        PiecewiseLinear { knots }
    }

    fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        if k.len() == 1 {
            return k[0].1 + (x - k[0].0);
        }
        let seg = k
            .windows(2)
            .position(|w| x <= w[1].0)
            .unwrap_or(k.len() - 2);
        let (x0, y0) = k[seg];
        let (x1, y1) = k[seg + 1];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// Value of a 1-D signal (pixel `i` centered at `i`, background outside)
/// over the source span `[a, b]`: linear interpolation at the center when the
/// span is at most one pixel, otherwise the box average.
fn sample_span(signal: impl Fn(isize) -> f32, a: f64, b: f64) -> f32 {
    if b - a <= 1.0 + 1e-12 {
        let c = 0.5 * (a + b);
        let i0 = c.floor();
        let t = (c - i0) as f32;
        let i0 = i0 as isize;
        return signal(i0) * (1.0 - t) + signal(i0 + 1) * t;
    }
    let first = (a + 0.5).floor() as isize;
    let last = (b + 0.5).floor() as isize;
    let mut acc = 0.0f64;
    for i in first..=last {
        let lo = a.max(i as f64 - 0.5);
        let hi = b.min(i as f64 + 0.5);
        if hi > lo {
            acc += signal(i) as f64 * (hi - lo);
        }
    }
    ((acc / (b - a)) as f32).clamp(0.0, 1.0)
}

/// Maps the band `[curve - above, curve + below]` of every column onto the
/// fixed band starting at [`NormConfig::band_top`], rescaling the parts above
/// and below to fill a canvas of `cfg.target_height` rows.
pub fn normalize_height(img: &GrayImage, curve: &MedianCurve, cfg: &NormConfig) -> GrayImage {
    assert_eq!(curve.len(), img.width(), "curve length must equal image width");
    let (w, h) = (img.width(), img.height());
    let out_h = cfg.target_height;
    let band_top = cfg.band_top();
    let band_bottom = band_top + cfg.above + cfg.below;
    let mut out = GrayImage::new(w, out_h);

    for x in 0..w {
        let c = curve.values[x];
        let src_top = (c - cfg.above).min(0.0);
        let src_bottom = (c + cfg.below).max((h - 1) as f64);
        let map = PiecewiseLinear::new(&[
            (0.0, src_top),
            (band_top, c - cfg.above),
            (band_bottom, c + cfg.below),
            ((out_h - 1) as f64, src_bottom),
        ]);
        let column = |y: isize| img.get_or_zero(x as isize, y);
        for r in 0..out_h {
            let a = map.eval(r as f64 - 0.5);
            let b = map.eval(r as f64 + 0.5);
            out.set(x, r, sample_span(column, a, b));
        }
    }
    out
}

pub const SLANT_LIMIT: f64 = 0.7;
pub const SLANT_CANDIDATES: usize = 29;

/// Candidate shear angles, ordered by distance from zero.
fn slant_candidates() -> Vec<f64> {
    let step = 2.0 * SLANT_LIMIT / (SLANT_CANDIDATES - 1) as f64;
    let half = (SLANT_CANDIDATES - 1) / 2;
    let mut out = vec![0.0];
    for k in 1..=half {
        let a = k as f64 * step;
        out.push(a);
        out.push(-a);
    }
    out
}

/// Global slant of a writing: the angle in `[-0.7, 0.7]` which, passed to
/// [`correct_slant`], maximizes the variance of the column ink sums.
/// Positive angles denote writing leaning to the right.
pub fn estimate_slant(img: &GrayImage) -> f64 {
    if img.is_blank() {
        return 0.0;
    }
    let (w, h) = (img.width(), img.height());
    let pad = (h as f64 * SLANT_LIMIT.tan()).ceil() as usize + 2;
    let canvas = w + 2 * pad;
    let mut sums = vec![0.0f64; canvas];

    let mut best = (0.0, f64::NEG_INFINITY);
    for angle in slant_candidates() {
        sums.iter_mut().for_each(|s| *s = 0.0);
        let t = angle.tan();
        for y in 0..h {
            let shift = y as f64 * t + pad as f64;
            for (x, &v) in img.row(y).iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let pos = x as f64 + shift;
                let i = pos.floor();
                let f = pos - i;
                let i = i as usize;
                sums[i] += v as f64 * (1.0 - f);
                sums[i + 1] += v as f64 * f;
            }
        }
        let score: f64 = sums.iter().map(|s| s * s).sum();
        if score > best.1 {
            best = (angle, score);
        }
    }
    best.0
}

/// Columns added on the left and right by [`correct_slant`].
pub fn shear_padding(height: usize, angle: f64, baseline_row: f64) -> (usize, usize) {
    let t = angle.tan();
    let s0 = (0.0 - baseline_row) * t;
    let s1 = ((height - 1) as f64 - baseline_row) * t;
    let (lo, hi) = (s0.min(s1), s0.max(s1));
    let left = if lo < 0.0 { (-lo - 1e-9).ceil().max(0.0) as usize } else { 0 };
    let right = if hi > 0.0 { (hi - 1e-9).ceil().max(0.0) as usize } else { 0 };
    (left, right)
}

/// Shifts row `r` horizontally by `(r - baseline_row) * tan(angle)`, widening
/// the canvas so no ink is clipped.
pub fn correct_slant(img: &GrayImage, angle: f64, baseline_row: f64) -> GrayImage {
    if angle == 0.0 {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let (left, right) = shear_padding(h, angle, baseline_row);
    let out_w = w + left + right;
    let t = angle.tan();
    let mut out = GrayImage::new(out_w, h);
    for y in 0..h {
        let shift = (y as f64 - baseline_row) * t + left as f64;
        let i0 = shift.floor();
        let f = (shift - i0) as f32;
        let i0 = i0 as isize;
        let row = img.row(y);
        let src = |x: isize| {
            if x < 0 || x as usize >= w {
                0.0
            } else {
                row[x as usize]
            }
        };
        for xo in 0..out_w {
            // out[xo] = src(xo - shift), split between the two nearest source pixels
            let base = xo as isize - i0;
            let v = src(base) * (1.0 - f) + src(base - 1) * f;
            out.set(xo, y, v);
        }
    }
    out
}

/// Bilinear resampling to an explicit size; output pixel centers map onto
/// the source through the actual size ratio.
pub fn resize_bilinear(img: &GrayImage, out_w: usize, out_h: usize) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let sx = w as f64 / out_w as f64;
    let sy = h as f64 / out_h as f64;
    let mut out = GrayImage::new(out_w, out_h);
    for yo in 0..out_h {
        let ys = ((yo as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = ys.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = (ys - y0 as f64) as f32;
        for xo in 0..out_w {
            let xs = ((xo as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = xs.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = (xs - x0 as f64) as f32;
            let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
            let bottom = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
            out.set(xo, yo, top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Full line normalization: median curve, height normalization, slant
/// correction and the final downscale by `cfg.scale`.
pub fn preprocess_line(img: &GrayImage, cfg: &NormConfig) -> GrayImage {
    let curve = estimate_median_curve(img, cfg);
    let normalized = normalize_height(img, &curve, cfg);
    let angle = estimate_slant(&normalized);
    let deslanted = correct_slant(&normalized, angle, cfg.baseline_row());
    let out_h = cfg.output_height();
    let out_w = ((deslanted.width() as f64 * cfg.scale).round() as usize).max(1);
    if out_w == deslanted.width() && out_h == deslanted.height() {
        return deslanted;
    }
    resize_bilinear(&deslanted, out_w, out_h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vertical_strokes(w: usize, h: usize, xs: &[usize], rows: std::ops::Range<usize>) -> GrayImage {
        let mut img = GrayImage::new(w, h);
        for &x in xs {
            for y in rows.clone() {
                img.set(x, y, 1.0);
            }
        }
        img
    }

    #[test]
    fn constant_single_row_gives_constant_curve() {
        let mut img = GrayImage::new(50, 80);
        for x in 0..50 {
            img.set(x, 40, 1.0);
        }
        let curve = estimate_median_curve(&img, &NormConfig::default());
        assert!(curve.values.iter().all(|&v| v == 40.0));
    }

    #[test]
    fn window_median_takes_middle_row() {
        let mut img = GrayImage::new(1, 100);
        for y in [10, 20, 90] {
            img.set(0, y, 1.0);
        }
        let curve = estimate_median_curve(&img, &NormConfig::default());
        assert_eq!(curve.values, vec![20.0]);
    }

    #[test]
    fn blank_image_curve_is_half_height() {
        let img = GrayImage::new(100, 60);
        let curve = estimate_median_curve(&img, &NormConfig::default());
        assert_eq!(curve.len(), 100);
        assert!(curve.values.iter().all(|&v| v == 30.0));
    }

    #[test]
    fn gaps_are_interpolated_between_ink_columns() {
        let cfg = NormConfig {
            median_window: 1,
            ..NormConfig::default()
        };
        let mut img = GrayImage::new(5, 30);
        img.set(0, 10, 1.0);
        img.set(4, 20, 1.0);
        let curve = estimate_median_curve(&img, &cfg);
        assert_eq!(curve.values, vec![10.0, 12.5, 15.0, 17.5, 20.0]);
    }

    #[test]
    fn bar_on_curve_lands_on_baseline_row() {
        let cfg = NormConfig::default();
        let mut img = GrayImage::new(40, 120);
        let mut values = Vec::new();
        for x in 0..40 {
            let y = 50 + (x % 7);
            img.set(x, y, 1.0);
            values.push(y as f64);
        }
        let out = normalize_height(&img, &MedianCurve { values }, &cfg);
        assert_eq!(out.height(), 180);
        let base = cfg.baseline_row() as usize;
        for x in 0..40 {
            let peak = (0..180)
                .max_by(|&a, &b| out.get(x, a).total_cmp(&out.get(x, b)))
                .unwrap();
            assert!(peak.abs_diff(base) <= 1, "column {x}: peak at {peak}");
        }
    }

    #[test]
    fn blank_normalizes_to_blank() {
        let img = GrayImage::new(30, 77);
        let curve = estimate_median_curve(&img, &NormConfig::default());
        let out = normalize_height(&img, &curve, &NormConfig::default());
        assert_eq!((out.width(), out.height()), (30, 180));
        assert!(out.is_blank());
    }

    #[test]
    fn canonical_input_is_left_unchanged() {
        let cfg = NormConfig::default();
        let mut img = GrayImage::new(20, 180);
        for y in 0..180 {
            for x in 0..20 {
                img.set(x, y, ((x * 7 + y * 13) % 17) as f32 / 16.0);
            }
        }
        let curve = MedianCurve {
            values: vec![cfg.baseline_row(); 20],
        };
        let out = normalize_height(&img, &curve, &cfg);
        for y in 0..180 {
            for x in 0..20 {
                assert!((out.get(x, y) - img.get(x, y)).abs() <= 1.0 / 255.0);
            }
        }
    }

    #[test]
    fn slant_of_blank_and_vertical_strokes_is_zero() {
        assert_eq!(estimate_slant(&GrayImage::new(40, 30)), 0.0);
        let img = vertical_strokes(60, 90, &[10, 25, 40], 20..70);
        assert_eq!(estimate_slant(&img), 0.0);
    }

    #[test]
    fn sheared_strokes_recover_their_angle() {
        let base = vertical_strokes(120, 90, &[30, 55, 80], 20..80);
        // leaning right by 0.2 rad is undone by correcting with +0.2
        let sheared = correct_slant(&base, -0.2, 89.0);
        let est = estimate_slant(&sheared);
        assert!((est - 0.2).abs() < 1e-9, "estimated {est}");
    }

    #[test]
    fn zero_angle_is_identity_and_baseline_pixel_stays() {
        let img = vertical_strokes(10, 10, &[3], 2..8);
        assert_eq!(correct_slant(&img, 0.0, 5.0), img);

        let mut dot = GrayImage::new(10, 10);
        dot.set(4, 6, 1.0);
        for angle in [-0.5, 0.3, 0.7] {
            let out = correct_slant(&dot, angle, 6.0);
            let (left, _) = shear_padding(10, angle, 6.0);
            assert_eq!(out.get(4 + left, 6), 1.0);
        }
    }

    #[test]
    fn slant_round_trip_is_close() {
        let mut img = GrayImage::new(60, 40);
        for y in 5..35 {
            for x in [12usize, 30, 44] {
                img.set(x + y / 6, y, 1.0);
                img.set(x + 1 + y / 6, y, 0.6);
            }
        }
        for a in [0.15, -0.4, 0.6] {
            let once = correct_slant(&img, a, 20.0);
            let twice = correct_slant(&once, -a, 20.0);
            let (l1, _) = shear_padding(40, a, 20.0);
            let (l2, _) = shear_padding(40, -a, 20.0);
            let back = twice.crop((l1 + l2) as isize, 0, 60, 40);
            // two linear interpolations blur one-pixel strokes but move no ink
            assert!(back.mean_abs_diff(&img) < 0.03, "{a}: {}", back.mean_abs_diff(&img));
            assert!((back.ink_mass() - img.ink_mass()).abs() < 1e-3 * img.ink_mass());
        }
    }

    #[test]
    fn preprocess_blank_line_halves_to_ninety_rows() {
        let out = preprocess_line(&GrayImage::new(400, 200), &NormConfig::default());
        assert_eq!((out.width(), out.height()), (200, 90));
        assert!(out.is_blank());
    }

    #[test]
    fn config_validation() {
        assert!(NormConfig::default().validate().is_ok());
        let bad = NormConfig {
            median_window: 60,
            ..NormConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = NormConfig {
            above: 150.0,
            ..NormConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    fn arb_image() -> impl Strategy<Value = GrayImage> {
        (4usize..40, 4usize..40).prop_flat_map(|(w, h)| {
            proptest::collection::vec(prop_oneof![3 => Just(0.0f32), 1 => 0.0f32..=1.0], w * h)
                .prop_map(move |px| GrayImage::from_pixels(w, h, px).unwrap())
        })
    }

    proptest! {
        #[test]
        fn intensities_stay_in_unit_interval(img in arb_image(), angle in -0.7f64..0.7) {
            let cfg = NormConfig { median_window: 5, ..NormConfig::default() };
            let curve = estimate_median_curve(&img, &cfg);
            let norm = normalize_height(&img, &curve, &cfg);
            let sheared = correct_slant(&norm, angle, cfg.baseline_row());
            let out = preprocess_line(&img, &cfg);
            for im in [&norm, &sheared, &out] {
                prop_assert!(im.pixels().iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
            prop_assert_eq!(out.height(), 90);
        }

        #[test]
        fn shear_preserves_ink_mass(img in arb_image(), angle in -0.7f64..0.7) {
            let out = correct_slant(&img, angle, img.height() as f64 / 2.0);
            let (m0, m1) = (img.ink_mass(), out.ink_mass());
            prop_assert!((m0 - m1).abs() <= 0.02 * m0 + 1e-4);
        }

        #[test]
        fn median_curve_follows_vertical_translation(img in arb_image(), k in 1usize..20) {
            prop_assume!(!img.pixels().iter().all(|&v| v < 0.5));
            let cfg = NormConfig { median_window: 7, ..NormConfig::default() };
            let c0 = estimate_median_curve(&img, &cfg);
            let c1 = estimate_median_curve(&img.shifted_down(k), &cfg);
            for (a, b) in c0.values.iter().zip(&c1.values) {
                prop_assert_eq!(a + k as f64, *b);
            }
        }
    }
}
