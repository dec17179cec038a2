//! Grayscale image buffer and binary PGM (P5) serialization.
//!
//! Pixels are stored as `f64` in [0, 255] so intermediate vision stages
//! (blur, gradients) keep full precision; quantization happens only at the
//! PGM boundary.

use std::io::{self, Read, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("pgm: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Row-major grayscale image; `data[y * width + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    /// All-black image of the given size.
    pub fn new(width: usize, height: usize) -> Self {
        GrayImage { width, height, data: vec![0.0; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if data.len() != width * height {
            return Err(ImageError::Malformed(format!(
                "buffer holds {} samples, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(GrayImage { width, height, data })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    /// Serializes as binary PGM with maxval 255. Samples are clamped to
    /// [0, 255] and rounded half-up.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<(), ImageError> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.data.iter().map(|&v| v.clamp(0.0, 255.0).round() as u8).collect();
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn save_pgm(&self, path: &std::path::Path) -> Result<(), ImageError> {
        let mut buf = Vec::with_capacity(self.width * self.height + 32);
        self.write_pgm(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// Parses binary PGM. Accepts `#` comments and arbitrary whitespace in
    /// the header and any maxval up to 255 (samples are rescaled to the
    /// [0, 255] range used internally).
    pub fn read_pgm<R: Read>(mut r: R) -> Result<Self, ImageError> {
        let mut raw = Vec::new();
        r.read_to_end(&mut raw)?;
        if raw.len() < 2 || &raw[..2] != b"P5" {
            return Err(ImageError::Malformed("missing P5 magic".into()));
        }
        let mut pos = 2;
        let mut fields = [0usize; 3];
        for field in fields.iter_mut() {
            *field = parse_header_int(&raw, &mut pos)?;
        }
        let [width, height, maxval] = fields;
        if width == 0 || height == 0 {
            return Err(ImageError::Malformed("zero image dimension".into()));
        }
        if maxval == 0 || maxval > 255 {
            return Err(ImageError::Malformed(format!("unsupported maxval {maxval}")));
        }
        // Exactly one whitespace byte separates the header from the samples.
        if pos >= raw.len() || !raw[pos].is_ascii_whitespace() {
            return Err(ImageError::Malformed("missing header terminator".into()));
        }
        pos += 1;
        let need = width * height;
        if raw.len() - pos < need {
            return Err(ImageError::Malformed(format!(
                "expected {} samples, found {}",
                need,
                raw.len() - pos
            )));
        }
        // Multiply before dividing so full-scale samples map to exactly 255.
        let data = raw[pos..pos + need]
            .iter()
            .map(|&b| b as f64 * 255.0 / maxval as f64)
            .collect();
        Ok(GrayImage { width, height, data })
    }

    pub fn load_pgm(path: &std::path::Path) -> Result<Self, ImageError> {
        let raw = std::fs::read(path)?;
        Self::read_pgm(&raw[..])
    }
}

/// Reads the next header integer, skipping whitespace and `#` comments.
fn parse_header_int(raw: &[u8], pos: &mut usize) -> Result<usize, ImageError> {
    loop {
        while *pos < raw.len() && raw[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < raw.len() && raw[*pos] == b'#' {
            while *pos < raw.len() && raw[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < raw.len() && raw[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if *pos == start {
        return Err(ImageError::Malformed("truncated header".into()));
    }
    std::str::from_utf8(&raw[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ImageError::Malformed("bad header integer".into()))
}
