//! Image quality metrics.

use crate::error::{Error, Result};
use crate::image::Image;

/// Peak value for 8-bit images.
pub const PEAK: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    /// `+∞` for identical images.
    pub psnr_db: f64,
    pub mse: f64,
}

/// Peak signal-to-noise ratio against a reference, with peak 255.
pub fn psnr(x: &Image, reference: &Image) -> Result<QualityReport> {
    if !x.same_shape(reference) {
        return Err(Error::Dimension {
            expected: reference.len(),
            actual: x.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::Domain("PSNR of an empty image".into()));
    }
    let mse = x
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.len() as f64;
    let psnr_db = if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    };
    Ok(QualityReport { psnr_db, mse })
}

/// Two-decimal rendering used in CSV output; `inf` for the sentinel.
pub fn format_db(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.2}")
    }
}
