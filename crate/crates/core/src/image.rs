//! Single-channel real-valued images and binary PGM (P5) input/output.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A row-major grid of real intensities.
///
/// Values read from 8-bit files live in `[0, 255]`, but iterates produced by
/// the solver are unconstrained reals; clamping happens only on write.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension {
                expected: width * height,
                actual: data.len(),
            });
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Image {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Image {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Returns a copy with every pixel clamped to `[lo, hi]`.
    pub fn clamped(&self, lo: f64, hi: f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v.clamp(lo, hi)).collect(),
        }
    }

    /// Quantizes to 8 bits: clamp to `[0, 255]`, round half away from zero.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| {
                let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 255.0) };
                v.round() as u8
            })
            .collect()
    }

    /// Frobenius norm of the pixel grid.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Encodes an image as binary PGM with maxval 255.
pub fn encode_pgm(image: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.to_u8());
    out
}

pub fn write_pgm(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_pgm(image))
        .map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

fn pgm_error(reason: impl Into<String>) -> Error {
    Error::Format {
        kind: "PGM",
        reason: reason.into(),
    }
}

/// Decodes a binary 8-bit PGM. Header comments (`#` to end of line) are skipped.
pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(pgm_error("missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(pgm_error("truncated header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(pgm_error("expected a decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| pgm_error("header field out of range"))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(pgm_error(format!("unsupported maxval {maxval}, expected 255")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(pgm_error("missing separator after header")),
    }
    let raster = &bytes[pos..];
    if raster.len() < width * height {
        return Err(pgm_error(format!(
            "raster holds {} bytes, expected {}",
            raster.len(),
            width * height
        )));
    }
    let data = raster[..width * height].iter().map(|&b| b as f64).collect();
    Image::new(width, height, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_preserves_8bit_values() {
        let img = Image::from_fn(5, 3, |r, c| (r * 40 + c * 7) as f64);
        let decoded = decode_pgm(&encode_pgm(&img)).unwrap();
        assert_eq!(decoded, img);
    }

    #[test]
    fn quantization_clamps_and_rounds_half_away() {
        let img = Image::new(5, 1, vec![-3.0, 0.5, 1.49, 254.5, 300.0]).unwrap();
        assert_eq!(img.to_u8(), vec![0, 1, 1, 255, 255]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend([10u8, 20]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img.data(), &[10.0, 20.0]);
    }

    #[test]
    fn rejects_ascii_pgm_and_short_rasters() {
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n4 4\n255\n\x00\x01").is_err());
        assert!(decode_pgm(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }

    #[test]
    fn new_checks_length() {
        assert!(Image::new(3, 3, vec![0.0; 8]).is_err());
    }
}
