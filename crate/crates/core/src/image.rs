//! Grayscale line images and 8-bit binary PGM ("P5") input/output.
//!
//! Intensities are ink amounts in `[0, 1]`: 1 is full ink, 0 is background.
//! PGM stores brightness, so loading maps `raw -> 1 - raw/255` and saving
//! applies the inverse.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl GrayImage {
    /// Blank (all-background) image. Panics on a zero dimension.
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be >= 1");
        GrayImage {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    /// Builds an image from row-major intensities, clamping into `[0, 1]`.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("empty image {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::Shape(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        let pixels = pixels
            .into_iter()
            .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
            .collect();
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// Intensity at signed coordinates; outside the canvas reads as background.
    #[inline]
    pub fn get_or_zero(&self, x: isize, y: isize) -> f32 {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            0.0
        } else {
            self.pixels[y as usize * self.width + x as usize]
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.pixels[y * self.width + x] = v.clamp(0.0, 1.0);
    }

    pub fn row(&self, y: usize) -> &[f32] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    /// Sum of all intensities.
    pub fn ink_mass(&self) -> f64 {
        self.pixels.iter().map(|&v| v as f64).sum()
    }

    pub fn is_blank(&self) -> bool {
        self.pixels.iter().all(|&v| v == 0.0)
    }

    /// Mean absolute pixel difference; images must have equal dimensions.
    pub fn mean_abs_diff(&self, other: &GrayImage) -> f64 {
        assert_eq!(
            (self.width, self.height),
            (other.width, other.height),
            "image dimensions differ"
        );
        let total: f64 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum();
        total / self.pixels.len() as f64
    }

    /// Sub-image `[x0, x0+width) x [y0, y0+height)`; out-of-canvas parts read as background.
    pub fn crop(&self, x0: isize, y0: isize, width: usize, height: usize) -> GrayImage {
        let mut out = GrayImage::new(width, height);
        for y in 0..height {
            for x in 0..width {
                out.pixels[y * width + x] = self.get_or_zero(x0 + x as isize, y0 + y as isize);
            }
        }
        out
    }

    /// Copy shifted down by `dy` rows on a canvas `dy` rows taller.
    pub fn shifted_down(&self, dy: usize) -> GrayImage {
        let mut out = GrayImage::new(self.width, self.height + dy);
        out.pixels[dy * self.width..].copy_from_slice(&self.pixels);
        out
    }

    /// Decodes a binary PGM. Any maxval up to 255 is accepted.
    pub fn decode_pgm(data: &[u8]) -> Result<GrayImage> {
        let mut pos = 0usize;
        if data.len() < 2 || &data[..2] != b"P5" {
            return Err(Error::Pgm("missing P5 magic".into()));
        }
        pos += 2;
        let width = read_header_number(data, &mut pos)?;
        let height = read_header_number(data, &mut pos)?;
        let maxval = read_header_number(data, &mut pos)?;
        if width == 0 || height == 0 {
            return Err(Error::Pgm(format!("empty image {width}x{height}")));
        }
        if maxval == 0 || maxval > 255 {
            return Err(Error::Pgm(format!("unsupported maxval {maxval}")));
        }
        // exactly one whitespace byte separates the header from the raster
        if pos >= data.len() || !data[pos].is_ascii_whitespace() {
            return Err(Error::Pgm("missing whitespace after header".into()));
        }
        pos += 1;
        let raster = &data[pos..];
        if raster.len() < width * height {
            return Err(Error::Pgm(format!(
                "raster has {} bytes, expected {}",
                raster.len(),
                width * height
            )));
        }
        let scale = maxval as f32;
        let pixels = raster[..width * height]
            .iter()
            .map(|&raw| 1.0 - raw.min(maxval as u8) as f32 / scale)
            .collect();
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn encode_pgm(&self) -> Vec<u8> {
        let header = format!("P5\n{} {}\n255\n", self.width, self.height);
        let mut out = Vec::with_capacity(header.len() + self.pixels.len());
        out.extend_from_slice(header.as_bytes());
        out.extend(
            self.pixels
                .iter()
                .map(|&v| (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8),
        );
        out
    }

    pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
        let path = path.as_ref();
        let data = fs::read(path).map_err(|e| Error::io(path, e))?;
        GrayImage::decode_pgm(&data)
            .map_err(|e| Error::Pgm(format!("{}: {e}", path.display())))
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode_pgm()).map_err(|e| Error::io(path, e))
    }

    /// Rounds every intensity to the nearest 8-bit level, as a save/load cycle would.
    pub fn quantized(&self) -> GrayImage {
        let pixels = self
            .pixels
            .iter()
            .map(|&v| {
                let raw = (255.0 * (1.0 - v)).round() as u8;
                1.0 - raw as f32 / 255.0
            })
            .collect();
        GrayImage {
            width: self.width,
            height: self.height,
            pixels,
        }
    }
}

fn read_header_number(data: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        match data.get(*pos) {
            Some(b'#') => {
                while let Some(&c) = data.get(*pos) {
                    *pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            }
            Some(c) if c.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::Pgm("truncated header".into())),
        }
    }
    let start = *pos;
    while data.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Pgm("expected a number in header".into()));
    }
    std::str::from_utf8(&data[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Pgm("header number out of range".into()))
}
