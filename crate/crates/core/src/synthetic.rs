//! Seeded synthetic test images.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::Image;

/// A tiling of one smooth random `period × period` motif.
///
/// The motif is a mean level plus two low-frequency cosines with random
/// amplitudes and phases, so every patch group built from the image has a
/// small numerical rank. Values stay inside `[0, 255]`.
pub fn repeated_motif(width: usize, height: usize, period: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = period.max(1) as f64;
    let terms: Vec<(f64, f64, f64, f64)> = [(0.0, 1.0), (1.0, 0.0)]
        .into_iter()
        .map(|(u, v)| (u, v, rng.random_range(15.0..35.0), rng.random_range(0.0..2.0 * PI)))
        .collect();
    let motif = |r: usize, c: usize| {
        let (r, c) = ((r % period.max(1)) as f64, (c % period.max(1)) as f64);
        let mut v = 128.0;
        for &(u, w, amp, phase) in &terms {
            v += amp * (2.0 * PI * (u * r + w * c) / p + phase).cos();
        }
        v
    };
    Image::from_fn(width, height, |r, c| motif(r, c).clamp(0.0, 255.0))
}
