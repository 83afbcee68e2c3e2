//! Splitting a word image into headline band, middle strip and positioned
//! upper and lower modifier components.
//!
//! * Headline: peak of the horizontal projection in the upper half, grown
//!   over adjacent rows holding at least 70% of the peak.
//! * Upper zone: components of the ink above the headline, cut at its top
//!   row. Blobs too small to carry a stroke skeleton are set aside as noise.
//! * Busy zone: the run of rows below the headline whose projection reaches
//!   10% of the peak row below the headline.
//! * Lower zone: components below the busy zone that correlate with a lower
//!   modifier template at 0.6 or more; the rest stay in the middle strip.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::raster::{binarize, connected_components, h_projection, thin, BinaryImage, Component, GrayImage};

pub const BAND_FRACTION: f64 = 0.7;
pub const BUSY_FRACTION: f64 = 0.1;
pub const NCC_THRESHOLD: f64 = 0.6;
/// Components with fewer pixels are noise, never modifiers.
pub const MIN_COMPONENT_PIXELS: usize = 6;
const NCC_SIZE: usize = 24;
const BLUR_RADIUS: usize = 1;
const BLUR_PASSES: usize = 3;

/// A component with its inclusive column range in full-image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Placed {
    pub component: Component,
    pub x_range: (usize, usize),
    /// Label of the best-matching template, for lower components.
    pub matched: Option<char>,
}

impl Placed {
    fn new(component: Component, matched: Option<char>) -> Self {
        let bb = component.bbox();
        Placed {
            x_range: (bb.x0, bb.x1),
            component,
            matched,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerTemplate {
    pub label: char,
    pub shape: BinaryImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoneSplit {
    /// Inclusive headline rows.
    pub matra: (usize, usize),
    pub middle: BinaryImage,
    /// Column of the full image where `middle` starts.
    pub x_offset: usize,
    pub upper: Vec<Placed>,
    pub lower: Vec<Placed>,
    /// Inclusive rows of the busy (middle) zone.
    pub busy: (usize, usize),
    /// Specks removed from the upper and lower zones.
    pub noise: Vec<Component>,
    pub matra_ink: usize,
    pub total_ink: usize,
}

impl ZoneSplit {
    pub fn extracted_ink(&self) -> usize {
        self.upper.iter().chain(&self.lower).map(|p| p.component.len()).sum::<usize>()
            + self.noise.iter().map(Component::len).sum::<usize>()
    }

    /// Middle + headline + extracted + noise ink equals the image's ink.
    pub fn conserves_ink(&self) -> bool {
        self.middle.ink_count() + self.matra_ink + self.extracted_ink() == self.total_ink
    }
}

pub fn detect_matra(bin: &BinaryImage) -> Result<(usize, usize)> {
    if bin.is_blank() {
        return Err(Error::BlankImage);
    }
    let proj = h_projection(bin);
    let half = bin.height().div_ceil(2);
    let mut peak = proj[..half].iter().copied().max().unwrap_or(0);
    let mut range = 0..half;
    if peak == 0 {
        peak = proj.iter().copied().max().unwrap_or(0);
        range = 0..bin.height();
    }
    let thr = BAND_FRACTION * peak as f64;
    let grow = |r: usize| {
        let mut top = r;
        while top > 0 && proj[top - 1] as f64 >= thr {
            top -= 1;
        }
        let mut bottom = r;
        while bottom + 1 < proj.len() && proj[bottom + 1] as f64 >= thr {
            bottom += 1;
        }
        (top, bottom)
    };
    let mut best: Option<(usize, usize)> = None;
    for r in range.filter(|&r| proj[r] == peak) {
        let band = grow(r);
        if best.is_none_or(|b| band.1 - band.0 > b.1 - b.0) {
            best = Some(band);
        }
    }
    best.ok_or(Error::BlankImage)
}

fn region(bin: &BinaryImage, rows: core::ops::Range<usize>) -> BinaryImage {
    BinaryImage::from_fn(bin.width(), bin.height(), |x, y| rows.contains(&y) && bin.get(x, y))
}

fn is_speck(c: &Component) -> bool {
    if c.len() < MIN_COMPONENT_PIXELS {
        return true;
    }
    thin(&c.to_binary()).ink_count() < 3
}

/// Components above the headline, and the specks among them.
pub fn extract_upper(bin: &BinaryImage, matra: (usize, usize)) -> (Vec<Placed>, Vec<Component>) {
    let above = region(bin, 0..matra.0);
    let mut upper = Vec::new();
    let mut noise = Vec::new();
    for c in connected_components(&above) {
        if is_speck(&c) {
            noise.push(c);
        } else {
            upper.push(Placed::new(c, None));
        }
    }
    (upper, noise)
}

/// Rows of the busy zone below the headline.
pub fn busy_zone(bin: &BinaryImage, matra: (usize, usize)) -> Result<(usize, usize)> {
    let top = matra.1 + 1;
    if top >= bin.height() {
        return Err(Error::EmptyRegion);
    }
    let proj = h_projection(bin);
    let peak = proj[top..].iter().copied().max().unwrap_or(0);
    if peak == 0 {
        return Ok((top, top));
    }
    let thr = BUSY_FRACTION * peak as f64;
    let busy = |r: usize| proj[r] as f64 >= thr;
    let first = (top..bin.height()).find(|&r| busy(r)).expect("peak row is busy");
    let mut bottom = first;
    while bottom + 1 < bin.height() && busy(bottom + 1) {
        bottom += 1;
    }
    Ok((top, bottom))
}

fn blurred(shape: &BinaryImage) -> Vec<f64> {
    // centre on a square canvas so the aspect ratio survives the resize
    let side = shape.width().max(shape.height());
    let (ox, oy) = ((side - shape.width()) / 2, (side - shape.height()) / 2);
    let square = BinaryImage::from_fn(side, side, |x, y| {
        x >= ox && y >= oy && x - ox < shape.width() && y - oy < shape.height() && shape.get(x - ox, y - oy)
    });
    let s = square.resize_nearest(NCC_SIZE, NCC_SIZE);
    let mut img: Vec<f64> = (0..NCC_SIZE * NCC_SIZE)
        .map(|i| if s.get(i % NCC_SIZE, i / NCC_SIZE) { 1.0 } else { 0.0 })
        .collect();
    for _ in 0..BLUR_PASSES {
        let mut out = vec![0.0; NCC_SIZE * NCC_SIZE];
        for y in 0..NCC_SIZE {
            for x in 0..NCC_SIZE {
                let mut acc = 0.0;
                for yy in y.saturating_sub(BLUR_RADIUS)..(y + BLUR_RADIUS + 1).min(NCC_SIZE) {
                    for xx in x.saturating_sub(BLUR_RADIUS)..(x + BLUR_RADIUS + 1).min(NCC_SIZE) {
                        acc += img[yy * NCC_SIZE + xx];
                    }
                }
                out[y * NCC_SIZE + x] = acc;
            }
        }
        img = out;
    }
    img
}

/// Normalized cross-correlation of two shapes after resizing both to 24×24
/// and a 3×3 box blur. Flat inputs correlate at 0.
pub fn ncc(a: &BinaryImage, b: &BinaryImage) -> f64 {
    if a.is_blank() || b.is_blank() {
        return 0.0;
    }
    let (pa, pb) = (blurred(a), blurred(b));
    let n = pa.len() as f64;
    let (ma, mb) = (pa.iter().sum::<f64>() / n, pb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in pa.iter().zip(&pb) {
        let (da, db) = (x - ma, y - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / math::sqrt(saa * sbb)
}

/// Best template for a shape: `(label, correlation)`.
pub fn best_template(shape: &BinaryImage, templates: &[LowerTemplate]) -> Option<(char, f64)> {
    let mut best: Option<(char, f64)> = None;
    for t in templates {
        let v = ncc(shape, &t.shape);
        if best.is_none_or(|b| v > b.1) {
            best = Some((t.label, v));
        }
    }
    best
}

/// Components below the busy zone: `(extracted, noise, kept in the middle)`.
pub fn extract_lower(
    bin: &BinaryImage,
    busy_bottom: usize,
    templates: &[LowerTemplate],
) -> (Vec<Placed>, Vec<Component>, Vec<Component>) {
    let below = region(bin, busy_bottom + 1..bin.height());
    let mut lower = Vec::new();
    let mut noise = Vec::new();
    let mut kept = Vec::new();
    for c in connected_components(&below) {
        if is_speck(&c) {
            noise.push(c);
            continue;
        }
        match best_template(&c.to_binary(), templates) {
            Some((label, v)) if v >= NCC_THRESHOLD => lower.push(Placed::new(c, Some(label))),
            _ => kept.push(c),
        }
    }
    (lower, noise, kept)
}

pub fn split_zones(img: &GrayImage, templates: &[LowerTemplate]) -> Result<ZoneSplit> {
    split_binary(&binarize(img), templates)
}

pub fn split_binary(bin: &BinaryImage, templates: &[LowerTemplate]) -> Result<ZoneSplit> {
    let matra = detect_matra(bin)?;
    let (upper, mut noise) = extract_upper(bin, matra);
    let busy = busy_zone(bin, matra)?;
    let (lower, lower_noise, _) = extract_lower(bin, busy.1, templates);
    noise.extend(lower_noise);

    let mut rest = region(bin, matra.1 + 1..bin.height());
    for c in lower.iter().map(|p| &p.component).chain(noise.iter().filter(|c| c.bbox().y0 > matra.1)) {
        for &(x, y) in c.pixels() {
            rest.set(x, y, false);
        }
    }
    let last_row = (0..bin.height()).rev().find(|&y| (0..bin.width()).any(|x| rest.get(x, y)));
    let bottom = last_row.map_or(busy.1, |r| r.max(busy.1));
    let matra_ink: usize = (matra.0..=matra.1)
        .map(|y| (0..bin.width()).filter(|&x| bin.get(x, y)).count())
        .sum();
    let columns = (0..bin.width()).filter(|&x| {
        (matra.0..=matra.1).any(|y| bin.get(x, y)) || (matra.1 + 1..=bottom).any(|y| rest.get(x, y))
    });
    let (x0, x1) = {
        let mut it = columns;
        let first = it.next().unwrap_or(0);
        let last = it.last().unwrap_or(first);
        (first, last)
    };
    let top = matra.1 + 1;
    let middle = rest.crop(x0, top, x1 - x0 + 1, bottom - top + 1);
    Ok(ZoneSplit {
        matra,
        middle,
        x_offset: x0,
        upper,
        lower,
        busy: (busy.0, bottom.max(busy.1)),
        noise,
        matra_ink,
        total_ink: bin.ink_count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthscript::{modifier_templates, random_script, render_word, RenderStyle};

    #[test]
    fn single_line_is_its_own_band() {
        let b = BinaryImage::from_fn(20, 12, |_, y| y == 5);
        assert_eq!(detect_matra(&b), Ok((5, 5)));
        assert_eq!(detect_matra(&BinaryImage::new(4, 4)), Err(Error::BlankImage));
    }

    #[test]
    fn modifier_free_word_has_no_modifiers() {
        let s = random_script(6, 2, 2, 4).unwrap();
        let w: alloc::string::String = s.middle.iter().take(3).map(|g| g.id).collect();
        let (img, gt) = render_word(&s, &w, &RenderStyle::clean(), 1).unwrap();
        let z = split_zones(&img, &[]).unwrap();
        assert!(z.upper.is_empty());
        assert!(z.lower.is_empty());
        assert_eq!(Some(z.matra), gt.matra);
        assert!(z.conserves_ink());
    }

    #[test]
    fn modifiers_are_split_off() {
        let s = random_script(6, 3, 3, 4).unwrap();
        let w: alloc::string::String = [s.middle[0].id, s.upper[0].id, s.middle[1].id, s.lower[2].id, s.middle[2].id, s.upper[1].id]
            .iter()
            .collect();
        let templates: Vec<LowerTemplate> = modifier_templates(&s, crate::alphabet::Zone::Lower, 8, &RenderStyle::default(), 1)
            .unwrap()
            .into_iter()
            .map(|(label, shape)| LowerTemplate { label, shape })
            .collect();
        let (img, gt) = render_word(&s, &w, &RenderStyle::default(), 5).unwrap();
        let z = split_zones(&img, &templates).unwrap();
        assert_eq!(z.upper.len(), 2);
        assert_eq!(z.lower.len(), 1);
        assert_eq!(z.lower[0].matched, Some(s.lower[2].id));
        for p in &z.upper {
            assert!(p.component.bbox().y1 < z.matra.1);
        }
        for (p, t) in z.upper.iter().zip(gt.modifiers.iter().filter(|m| m.zone == crate::alphabet::Zone::Upper)) {
            assert!(p.x_range.0 <= t.x_range.1 && t.x_range.0 <= p.x_range.1);
        }
        assert!(z.conserves_ink());
    }

    #[test]
    fn unmatched_descender_stays_in_the_middle() {
        // headline, a body, and a descender blob below a gap
        let b = BinaryImage::from_fn(30, 40, |x, y| {
            (2..=4).contains(&y) || ((6..16).contains(&x) && (5..=20).contains(&y)) || (x >= 8 && x <= 20 && (25..=27).contains(&y))
        });
        let vertical = LowerTemplate {
            label: 'v',
            shape: BinaryImage::from_fn(3, 12, |x, _| x == 1),
        };
        let (lower, _, kept) = extract_lower(&b, 20, core::slice::from_ref(&vertical));
        assert!(lower.is_empty());
        assert_eq!(kept.len(), 1);
        assert!(ncc(&kept[0].to_binary(), &vertical.shape) < NCC_THRESHOLD);
        let z = split_binary(&b, &[vertical]).unwrap();
        assert!(z.lower.is_empty());
        assert!(z.conserves_ink());
        assert_eq!(z.middle.ink_count(), 160 + 39);
    }
}
