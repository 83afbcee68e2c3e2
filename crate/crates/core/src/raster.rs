//! Gray and binary rasters plus the low-level binary image operations used
//! by every later stage: global thresholding, 8-connected labeling,
//! thinning and projection profiles.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const INK_GRAY: u8 = 0;
pub const PAPER_GRAY: u8 = 255;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidDimensions {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image must be non-empty");
        GrayImage {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn histogram(&self) -> [u64; 256] {
        let mut hist = [0u64; 256];
        for &v in &self.data {
            hist[v as usize] += 1;
        }
        hist
    }

    /// Ink pixels become [`INK_GRAY`], background [`PAPER_GRAY`].
    pub fn from_binary(bin: &BinaryImage) -> Self {
        let data = bin
            .data
            .iter()
            .map(|&b| if b { INK_GRAY } else { PAPER_GRAY })
            .collect();
        GrayImage {
            width: bin.width.max(1),
            height: bin.height.max(1),
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize) -> Self {
        BinaryImage {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidDimensions {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(BinaryImage {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut img = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.data[y * width + x] = f(x, y);
            }
        }
        img
    }

    /// Parses rows of `#` (ink) and `.` (background); handy for fixtures.
    pub fn from_ascii(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        Self::from_fn(width, height, |x, y| rows[y].as_bytes()[x] == b'#')
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Out-of-bounds coordinates read as background.
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.data[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn ink_count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_blank(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn ink_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// Copies the `w`×`h` window at (`x0`,`y0`); pixels outside the source
    /// read as background.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> BinaryImage {
        BinaryImage::from_fn(w, h, |x, y| {
            let (sx, sy) = (x0 + x, y0 + y);
            sx < self.width && sy < self.height && self.get(sx, sy)
        })
    }

    /// Nearest-neighbor resize with `src = floor(dst * src_len / dst_len)`.
    pub fn resize_nearest(&self, w: usize, h: usize) -> BinaryImage {
        let (sw, sh) = (self.width, self.height);
        BinaryImage::from_fn(w, h, |x, y| self.get(x * sw / w, y * sh / h))
    }

    pub fn invert(&self) -> BinaryImage {
        BinaryImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|b| !b).collect(),
        }
    }

    /// Bounding box of the ink, if any.
    pub fn ink_bbox(&self) -> Option<BBox> {
        BBox::enclosing(self.ink_pixels())
    }
}

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    pub fn enclosing(mut pixels: impl Iterator<Item = (usize, usize)>) -> Option<BBox> {
        let (x, y) = pixels.next()?;
        let mut b = BBox {
            x0: x,
            y0: y,
            x1: x,
            y1: y,
        };
        for (x, y) in pixels {
            b.x0 = b.x0.min(x);
            b.x1 = b.x1.max(x);
            b.y0 = b.y0.min(y);
            b.y1 = b.y1.max(y);
        }
        Some(b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pixels: Vec<(usize, usize)>,
    bbox: BBox,
    centroid: (f64, f64),
}

impl Component {
    pub fn from_pixels(pixels: Vec<(usize, usize)>) -> Result<Self> {
        let bbox = BBox::enclosing(pixels.iter().copied()).ok_or(Error::EmptyComponent)?;
        let n = pixels.len() as f64;
        let (sx, sy) = pixels
            .iter()
            .fold((0.0, 0.0), |(sx, sy), &(x, y)| (sx + x as f64, sy + y as f64));
        Ok(Component {
            pixels,
            bbox,
            centroid: (sx / n, sy / n),
        })
    }

    pub fn pixels(&self) -> &[(usize, usize)] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn centroid(&self) -> (f64, f64) {
        self.centroid
    }

    /// The component rasterized inside its own bounding box.
    pub fn to_binary(&self) -> BinaryImage {
        let b = self.bbox;
        let mut img = BinaryImage::new(b.width(), b.height());
        for &(x, y) in &self.pixels {
            img.set(x - b.x0, y - b.y0, true);
        }
        img
    }
}

/// Otsu's threshold on a 256-bin histogram: the smallest `t` maximizing the
/// between-class variance of the split `[0, t]` / `[t+1, 255]`. `None` when
/// fewer than two intensities are present.
pub fn otsu_split(hist: &[u64; 256]) -> Option<u8> {
    let total: u64 = hist.iter().sum();
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    let total_f = total as f64;
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as f64 * c as f64)
        .sum();
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    let mut best = (f64::NEG_INFINITY, 0u8);
    for t in 0..255usize {
        w0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total_f - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best.0 {
            best = (between, t as u8);
        }
    }
    Some(best.1)
}

/// Global Otsu binarization, dark ink on light paper. If more than half of
/// the pixels end up as ink the polarity is flipped.
pub fn binarize(img: &GrayImage) -> BinaryImage {
    let Some(t) = otsu_split(&img.histogram()) else {
        return BinaryImage::new(img.width, img.height);
    };
    let data: Vec<bool> = img.data.iter().map(|&v| v <= t).collect();
    let bin = BinaryImage {
        width: img.width,
        height: img.height,
        data,
    };
    if bin.ink_count() * 2 > bin.data.len() {
        bin.invert()
    } else {
        bin
    }
}

const NEIGHBORS8: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// 8-connected components of the ink, ordered by `(y0, x0)` and then by the
/// first pixel in raster order.
pub fn connected_components(bin: &BinaryImage) -> Vec<Component> {
    let (w, h) = (bin.width, bin.height);
    let mut seen = vec![false; w * h];
    let mut out: Vec<(usize, Component)> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !bin.data[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            pixels.push((x as usize, y as usize));
            for (dx, dy) in NEIGHBORS8 {
                let (nx, ny) = (x + dx, y + dy);
                if bin.get_signed(nx, ny) {
                    let j = ny as usize * w + nx as usize;
                    if !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        out.push((start, Component::from_pixels(pixels).expect("non-empty")));
    }
    out.sort_by_key(|(first, c)| (c.bbox.y0, c.bbox.x0, *first));
    out.into_iter().map(|(_, c)| c).collect()
}

/// Row-wise ink counts.
pub fn h_projection(bin: &BinaryImage) -> Vec<usize> {
    bin.data
        .chunks(bin.width.max(1))
        .take(bin.height)
        .map(|row| row.iter().filter(|&&b| b).count())
        .collect()
}

/// Column-wise ink counts.
pub fn v_projection(bin: &BinaryImage) -> Vec<usize> {
    let mut out = vec![0; bin.width];
    for (x, _) in bin.ink_pixels() {
        out[x] += 1;
    }
    out
}

/// Neighbors in counter-clockwise order starting east:
/// E, NE, N, NW, W, SW, S, SE.
fn ring(bin: &BinaryImage, x: usize, y: usize) -> [bool; 8] {
    let (x, y) = (x as isize, y as isize);
    [
        bin.get_signed(x + 1, y),
        bin.get_signed(x + 1, y - 1),
        bin.get_signed(x, y - 1),
        bin.get_signed(x - 1, y - 1),
        bin.get_signed(x - 1, y),
        bin.get_signed(x - 1, y + 1),
        bin.get_signed(x, y + 1),
        bin.get_signed(x + 1, y + 1),
    ]
}

/// Yokoi connectivity number for 8-connected foreground.
fn connectivity8(n: &[bool; 8]) -> usize {
    let inv = |k: usize| usize::from(!n[k % 8]);
    [0usize, 2, 4, 6]
        .iter()
        .map(|&k| inv(k) - inv(k) * inv(k + 1) * inv(k + 2))
        .sum()
}

/// Morphological thinning to a one-pixel skeleton.
///
/// Each pass visits the four border directions in turn (N, S, E, W) and
/// removes, one pixel at a time, border pixels that are simple (Yokoi
/// number 1) and not end points. Sequential removal of simple points keeps
/// the 8-connectivity of every component intact.
pub fn thin(bin: &BinaryImage) -> BinaryImage {
    let mut img = bin.clone();
    let (w, h) = (img.width, img.height);
    // index into the ring of the neighbor that must be background
    let directions = [2usize, 6, 0, 4];
    loop {
        let mut changed = false;
        for &dir in &directions {
            let candidates: Vec<(usize, usize)> = (0..h)
                .flat_map(|y| (0..w).map(move |x| (x, y)))
                .filter(|&(x, y)| img.get(x, y) && !ring(&img, x, y)[dir])
                .collect();
            for (x, y) in candidates {
                let n = ring(&img, x, y);
                if n[dir] {
                    continue;
                }
                let neighbors = n.iter().filter(|&&b| b).count();
                if neighbors >= 2 && connectivity8(&n) == 1 {
                    img.set(x, y, false);
                    changed = true;
                }
            }
        }
        if !changed {
            return img;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_image_rejects_bad_dimensions() {
        assert!(GrayImage::new(2, 2, vec![0; 3]).is_err());
        assert!(GrayImage::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn constant_image_has_no_ink() {
        let img = GrayImage::filled(10, 7, 200);
        assert!(binarize(&img).is_blank());
    }

    #[test]
    fn bimodal_block_becomes_exactly_the_ink() {
        let mut img = GrayImage::filled(12, 9, 255);
        for y in 2..5 {
            for x in 3..8 {
                img.set(x, y, 0);
            }
        }
        let bin = binarize(&img);
        for y in 0..9 {
            for x in 0..12 {
                assert_eq!(bin.get(x, y), (3..8).contains(&x) && (2..5).contains(&y));
            }
        }
    }

    #[test]
    fn light_ink_on_dark_paper_is_inverted() {
        let mut img = GrayImage::filled(10, 10, 10);
        img.set(4, 4, 240);
        let bin = binarize(&img);
        assert_eq!(bin.ink_count(), 1);
        assert!(bin.get(4, 4));
    }

    #[test]
    fn two_blocks_give_two_components() {
        let bin = BinaryImage::from_ascii(&[
            "......", //
            ".##...", //
            ".##.##", //
            "....##", //
        ]);
        let comps = connected_components(&bin);
        assert_eq!(comps.len(), 2);
        assert_eq!(
            comps[0].bbox(),
            BBox {
                x0: 1,
                y0: 1,
                x1: 2,
                y1: 2
            }
        );
        assert_eq!(
            comps[1].bbox(),
            BBox {
                x0: 4,
                y0: 2,
                x1: 5,
                y1: 3
            }
        );
    }

    #[test]
    fn diagonal_strokes_are_one_component() {
        let bin = BinaryImage::from_ascii(&["#..", ".#.", "..#"]);
        assert_eq!(connected_components(&bin).len(), 1);
        assert!(connected_components(&BinaryImage::new(4, 4)).is_empty());
    }

    #[test]
    fn thin_keeps_one_pixel_lines() {
        let line = BinaryImage::from_ascii(&[".......", ".#####.", "......."]);
        assert_eq!(thin(&line), line);
        let blank = BinaryImage::new(5, 5);
        assert_eq!(thin(&blank), blank);
    }

    #[test]
    fn thin_reduces_a_bar_to_a_horizontal_chain() {
        let bar = BinaryImage::from_fn(20, 5, |_, _| true);
        let sk = thin(&bar);
        // one pixel per column at most, a single component, long horizontal extent
        for c in v_projection(&sk) {
            assert!(c <= 1, "column has {c} pixels");
        }
        assert_eq!(connected_components(&sk).len(), 1);
        let b = sk.ink_bbox().unwrap();
        assert!(b.width() >= 14, "skeleton too short: {b:?}");
        assert!(b.height() <= 2);
    }

    #[test]
    fn thin_does_not_erase_small_squares() {
        let sq = BinaryImage::from_ascii(&["....", ".##.", ".##.", "...."]);
        let sk = thin(&sq);
        assert_eq!(connected_components(&sk).len(), 1);
    }

    #[test]
    fn projection_counts_rows() {
        let bin = BinaryImage::from_ascii(&["....", "####", ".#.."]);
        assert_eq!(h_projection(&bin), vec![0, 4, 1]);
    }
}
