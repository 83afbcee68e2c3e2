//! Pyramid histogram of oriented gradients (PHOG) and sliding-window
//! feature sequences.
//!
//! With 3 pyramid levels (0, 1, 2) and 8 orientation bins a descriptor has
//! `8 + 4·8 + 16·8 = 168` entries. Level blocks are stored in order, cells
//! row-major inside a level and bins by ascending angle inside a cell. Each
//! level is L1-normalized on its own.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::math;
use crate::raster::{BinaryImage, Component, GrayImage};

pub const PHOG_LEVELS: usize = 2;
pub const PHOG_BINS: usize = 8;
pub const PHOG_DIM: usize = 168;
pub const MODIFIER_SIZE: usize = 150;

pub const DEFAULT_WINDOW_WIDTH: usize = 8;
pub const DEFAULT_WINDOW_SHIFT: usize = 3;

/// Descriptor length for a pyramid with levels `0..=levels`.
pub fn phog_len(levels: usize, bins: usize) -> usize {
    (0..=levels).map(|l| (1usize << (2 * l)) * bins).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhogVector(Vec<f64>);

impl PhogVector {
    pub fn new(values: Vec<f64>) -> Self {
        PhogVector(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// L1 norm of each pyramid level block.
    pub fn level_norms(&self, bins: usize) -> Vec<f64> {
        let mut out = Vec::new();
        let mut start = 0;
        let mut level = 0;
        while start < self.0.len() {
            let len = (1usize << (2 * level)) * bins;
            out.push(self.0[start..start + len].iter().map(|v| v.abs()).sum());
            start += len;
            level += 1;
        }
        out
    }
}

impl AsRef<[f64]> for PhogVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Window geometry of a feature sequence, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WindowGeometry {
    pub width: usize,
    pub shift: usize,
}

impl Default for WindowGeometry {
    fn default() -> Self {
        WindowGeometry {
            width: DEFAULT_WINDOW_WIDTH,
            shift: DEFAULT_WINDOW_SHIFT,
        }
    }
}

impl WindowGeometry {
    /// Pixel range `[start, end)` covered by frames `first..=last`.
    pub fn frame_span_to_x(&self, first: usize, last: usize) -> (usize, usize) {
        (first * self.shift, last * self.shift + self.width)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub frames: Vec<PhogVector>,
    pub geometry: WindowGeometry,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// PHOG of a whole gray image.
pub fn phog(img: &GrayImage, levels: usize, bins: usize) -> Result<PhogVector> {
    phog_region(img, 0, 0, img.width(), img.height(), levels, bins)
}

/// PHOG of the `w`×`h` region at (`x0`,`y0`).
///
/// Gradients are central differences with replicated borders, taken inside
/// the region. Orientation is unsigned, `[0, π)`, hard-binned and weighted
/// by gradient magnitude.
pub fn phog_region(
    img: &GrayImage,
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    levels: usize,
    bins: usize,
) -> Result<PhogVector> {
    if w == 0 || h == 0 || x0 + w > img.width() || y0 + h > img.height() || bins == 0 {
        return Err(Error::EmptyRegion);
    }
    let px = |x: usize, y: usize| img.get(x0 + x, y0 + y) as f64;
    let mut mag = vec![0.0; w * h];
    let mut bin = vec![0usize; w * h];
    let bin_width = PI / bins as f64;
    for y in 0..h {
        for x in 0..w {
            let gx = px((x + 1).min(w - 1), y) - px(x.saturating_sub(1), y);
            let gy = px(x, (y + 1).min(h - 1)) - px(x, y.saturating_sub(1));
            let m = math::sqrt(gx * gx + gy * gy);
            if m == 0.0 {
                continue;
            }
            let mut theta = math::atan2(gy, gx);
            if theta < 0.0 {
                theta += PI;
            }
            if theta >= PI {
                theta -= PI;
            }
            mag[y * w + x] = m;
            bin[y * w + x] = ((theta / bin_width) as usize).min(bins - 1);
        }
    }

    let mut out = Vec::with_capacity(phog_len(levels, bins));
    for level in 0..=levels {
        let cells = 1usize << level;
        let start = out.len();
        out.resize(start + cells * cells * bins, 0.0);
        for cy in 0..cells {
            let (ya, yb) = (cy * h / cells, (cy + 1) * h / cells);
            for cx in 0..cells {
                let (xa, xb) = (cx * w / cells, (cx + 1) * w / cells);
                let base = start + (cy * cells + cx) * bins;
                for y in ya..yb {
                    for x in xa..xb {
                        let m = mag[y * w + x];
                        if m > 0.0 {
                            out[base + bin[y * w + x]] += m;
                        }
                    }
                }
            }
        }
        let total: f64 = out[start..].iter().sum();
        if total > 0.0 {
            for v in &mut out[start..] {
                *v /= total;
            }
        }
    }
    Ok(PhogVector(out))
}

/// Sliding-window PHOG frames over a binary middle-zone strip.
///
/// Frames start at `x = 0, shift, 2·shift, …` while the window fits. A strip
/// narrower than the window yields a single right-padded frame; strips lower
/// than 4 rows are padded at the bottom.
pub fn window_features(
    middle: &BinaryImage,
    width: usize,
    shift: usize,
) -> Result<FeatureSequence> {
    if width < 4 || shift == 0 || shift > width {
        return Err(Error::InvalidArgument(alloc::format!(
            "window width {width} / shift {shift}"
        )));
    }
    let h = middle.height().max(4);
    let padded_w = middle.width().max(width);
    let canvas = if h != middle.height() || padded_w != middle.width() {
        middle.crop(0, 0, padded_w, h)
    } else {
        middle.clone()
    };
    let gray = GrayImage::from_binary(&canvas);
    let count = (padded_w - width) / shift + 1;
    let frames = (0..count)
        .map(|i| phog_region(&gray, i * shift, 0, width, h, PHOG_LEVELS, PHOG_BINS))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureSequence {
        frames,
        geometry: WindowGeometry { width, shift },
    })
}

/// PHOG of a modifier component after a nearest-neighbor resize to 150×150.
pub fn modifier_features(comp: &Component) -> Result<PhogVector> {
    if comp.is_empty() {
        return Err(Error::EmptyComponent);
    }
    binary_shape_features(&comp.to_binary())
}

/// PHOG of a binary shape after a nearest-neighbor resize to 150×150.
pub fn binary_shape_features(shape: &BinaryImage) -> Result<PhogVector> {
    if shape.width() == 0 || shape.height() == 0 || shape.is_blank() {
        return Err(Error::EmptyComponent);
    }
    let resized = shape.resize_nearest(MODIFIER_SIZE, MODIFIER_SIZE);
    phog(&GrayImage::from_binary(&resized), PHOG_LEVELS, PHOG_BINS)
}
