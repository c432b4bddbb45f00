//! Nonlocal patch grouping: overlapping patch extraction, block matching
//! inside a search window, and averaging of groups back into an image.
//!
//! Patches are vectorized column-major within the patch: entry
//! `dc * side + dr` holds pixel `(row + dr, col + dc)`. Aggregation uses the
//! same order, so `aggregate_groups` inverts extraction exactly.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupingConfig {
    /// Side of a square patch in pixels.
    pub patch_side: usize,
    /// Spacing between reference patch anchors.
    pub stride: usize,
    /// Side of the square search window centered on each reference patch.
    pub window_side: usize,
    /// Number of patches per group.
    pub group_size: usize,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        GroupingConfig {
            patch_side: 6,
            stride: 4,
            window_side: 20,
            group_size: 60,
        }
    }
}

impl GroupingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_side == 0 || self.stride == 0 || self.group_size == 0 {
            return Err(Error::Config(
                "patch_side, stride and group_size must be at least 1".into(),
            ));
        }
        if self.window_side < self.patch_side {
            return Err(Error::Config(format!(
                "window_side {} is smaller than patch_side {}",
                self.window_side, self.patch_side
            )));
        }
        Ok(())
    }

    /// Patch length `B_s = patch_side²`.
    pub fn patch_len(&self) -> usize {
        self.patch_side * self.patch_side
    }
}

/// A `B_s × c` matrix of similar patches with their top-left anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGroup {
    pub matrix: DMatrix<f64>,
    pub positions: Vec<(usize, usize)>,
    pub ref_index: usize,
    pub patch_side: usize,
}

impl PatchGroup {
    /// Same anchors, new patch contents.
    pub fn with_matrix(&self, matrix: DMatrix<f64>) -> PatchGroup {
        debug_assert_eq!(matrix.shape(), self.matrix.shape());
        PatchGroup {
            matrix,
            positions: self.positions.clone(),
            ref_index: self.ref_index,
            patch_side: self.patch_side,
        }
    }
}

fn check_fits(image: &Image, (row, col): (usize, usize), side: usize) -> Result<()> {
    if side == 0 || row + side > image.height() || col + side > image.width() {
        return Err(Error::OutOfBounds {
            row,
            col,
            side,
            width: image.width(),
            height: image.height(),
        });
    }
    Ok(())
}

fn copy_patch(image: &Image, (row, col): (usize, usize), side: usize, out: &mut [f64]) {
    for dc in 0..side {
        for dr in 0..side {
            out[dc * side + dr] = image.get(row + dr, col + dc);
        }
    }
}

pub fn extract_patch(image: &Image, pos: (usize, usize), patch_side: usize) -> Result<Vec<f64>> {
    check_fits(image, pos, patch_side)?;
    let mut out = vec![0.0; patch_side * patch_side];
    copy_patch(image, pos, patch_side, &mut out);
    Ok(out)
}

/// Inclusive range of candidate anchors along one axis: a window of `window`
/// pixels centered on the reference patch, clipped to the image.
fn window_range(anchor: usize, extent: usize, side: usize, window: usize) -> (usize, usize) {
    let slack = window - side;
    let before = slack / 2;
    let after = slack - before;
    let lo = anchor.saturating_sub(before);
    let hi = (anchor + after).min(extent - side);
    (lo, hi)
}

/// Collects the `group_size` patches nearest (squared Euclidean distance) to
/// the reference patch at `ref_pos`.
///
/// The reference occupies column 0. Remaining columns are ordered by
/// distance, ties broken by raster order of the candidate anchor.
pub fn match_group(image: &Image, ref_pos: (usize, usize), cfg: &GroupingConfig) -> Result<PatchGroup> {
    cfg.validate()?;
    let side = cfg.patch_side;
    check_fits(image, ref_pos, side)?;
    let len = side * side;

    let (r_lo, r_hi) = window_range(ref_pos.0, image.height(), side, cfg.window_side);
    let (c_lo, c_hi) = window_range(ref_pos.1, image.width(), side, cfg.window_side);
    let available = (r_hi - r_lo + 1) * (c_hi - c_lo + 1);
    if available < cfg.group_size {
        return Err(Error::InsufficientCandidates {
            available,
            required: cfg.group_size,
        });
    }

    let mut reference = vec![0.0; len];
    copy_patch(image, ref_pos, side, &mut reference);

    // (distance, not-reference, raster index, anchor)
    let mut scratch = vec![0.0; len];
    let mut candidates = Vec::with_capacity(available);
    for r in r_lo..=r_hi {
        for c in c_lo..=c_hi {
            copy_patch(image, (r, c), side, &mut scratch);
            let dist: f64 = scratch
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            candidates.push((dist, (r, c) != ref_pos, (r, c)));
        }
    }
    // total order: raster position is unique per candidate
    candidates.sort_by(|a, b| {
        a.1.cmp(&b.1)
            .then(a.0.total_cmp(&b.0))
            .then(a.2.cmp(&b.2))
    });
    candidates.truncate(cfg.group_size);

    let mut matrix = DMatrix::zeros(len, cfg.group_size);
    let mut positions = Vec::with_capacity(cfg.group_size);
    for (j, &(_, _, pos)) in candidates.iter().enumerate() {
        copy_patch(image, pos, side, &mut scratch);
        matrix.column_mut(j).copy_from_slice(&scratch);
        positions.push(pos);
    }
    Ok(PatchGroup {
        matrix,
        positions,
        ref_index: 0,
        patch_side: side,
    })
}

/// Reference anchors along one axis: a regular lattice, filler anchors in
/// any gap a stride wider than the patch leaves, and the last valid anchor
/// so the far edge is covered.
pub fn lattice_anchors(extent: usize, side: usize, stride: usize) -> Vec<usize> {
    let last = extent - side;
    let mut anchors = Vec::new();
    // pixels [0, covered) lie inside some anchor's patch
    let mut covered = 0;
    for a in (0..=last).step_by(stride) {
        while covered < a {
            anchors.push(covered);
            covered += side;
        }
        anchors.push(a);
        covered = a + side;
    }
    while covered < extent {
        let a = covered.min(last);
        anchors.push(a);
        covered = a + side;
    }
    anchors
}

/// Builds one group per reference anchor on the stride lattice. Every pixel
/// of the image lies in at least one reference patch.
pub fn build_groups(image: &Image, cfg: &GroupingConfig) -> Result<Vec<PatchGroup>> {
    cfg.validate()?;
    if image.width() < cfg.patch_side || image.height() < cfg.patch_side {
        return Err(Error::OutOfBounds {
            row: 0,
            col: 0,
            side: cfg.patch_side,
            width: image.width(),
            height: image.height(),
        });
    }
    let rows = lattice_anchors(image.height(), cfg.patch_side, cfg.stride);
    let cols = lattice_anchors(image.width(), cfg.patch_side, cfg.stride);
    let refs: Vec<(usize, usize)> = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
        .collect();
    refs.par_iter()
        .map(|&pos| match_group(image, pos, cfg))
        .collect()
}

/// Averages every patch of every group back onto the pixel grid.
///
/// Each pixel accumulates its contributions relative to the first one it
/// receives, so pixels whose contributions all agree are reproduced bit for
/// bit.
pub fn aggregate_groups(groups: &[PatchGroup], width: usize, height: usize) -> Result<Image> {
    let n = width * height;
    let mut base = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let mut count = vec![0u32; n];
    for group in groups {
        let side = group.patch_side;
        if group.matrix.nrows() != side * side || group.matrix.ncols() != group.positions.len() {
            return Err(Error::Contract(format!(
                "group matrix {}x{} does not match {} patches of side {side}",
                group.matrix.nrows(),
                group.matrix.ncols(),
                group.positions.len()
            )));
        }
        for (j, &(row, col)) in group.positions.iter().enumerate() {
            if row + side > height || col + side > width {
                return Err(Error::OutOfBounds {
                    row,
                    col,
                    side,
                    width,
                    height,
                });
            }
            let column = group.matrix.column(j);
            for dc in 0..side {
                for dr in 0..side {
                    let idx = (row + dr) * width + col + dc;
                    let v = column[dc * side + dr];
                    if count[idx] == 0 {
                        base[idx] = v;
                    } else {
                        delta[idx] += v - base[idx];
                    }
                    count[idx] += 1;
                }
            }
        }
    }
    let mut data = Vec::with_capacity(n);
    for idx in 0..n {
        if count[idx] == 0 {
            return Err(Error::Uncovered {
                row: idx / width,
                col: idx % width,
            });
        }
        data.push(base[idx] + delta[idx] / count[idx] as f64);
    }
    Image::new(width, height, data)
}
