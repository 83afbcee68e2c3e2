//! Parametric synthetic scripts and a word renderer with ground truth.
//!
//! A script is three glyph pools (middle bases, upper and lower modifiers)
//! whose glyphs are polylines in a unit box. Character ids are Unicode
//! scalars taken from a per-script block, so words are plain strings: a base
//! optionally followed by one upper and/or one lower modifier character.
//!
//! Row layout at the fixed canvas height of 64:
//!
//! ```text
//!  2..13   upper modifiers (touching the headline)
//! 14..16   headline (matra)
//! 18..44   middle glyphs
//! 51..61   lower modifiers (floating)
//! ```

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alphabet::{DecompEntry, DecompTable, Zone};
use crate::error::{Error, Result};
use crate::math;
use crate::raster::{BinaryImage, GrayImage};

pub const CANVAS_HEIGHT: usize = 64;
pub const MARGIN: usize = 4;
pub const CELL_WIDTH: usize = 36;
pub const MATRA_TOP: usize = 14;
pub const MATRA_BOTTOM: usize = 16;
const UPPER_ROWS: (f64, f64) = (2.0, 13.0);
const MIDDLE_ROWS: (f64, f64) = (18.0, 44.0);
const LOWER_ROWS: (f64, f64) = (51.0, 61.0);
const MIDDLE_X: (f64, f64) = (3.0, 33.0);
const MODIFIER_HALF_WIDTH: f64 = 7.0;
const BLOCK_START: u32 = 0x4E00;
const BLOCK_SIZE: u32 = 256;
pub const MAX_MIDDLE: usize = 128;
pub const MAX_MODIFIERS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct GlyphDef {
    pub id: char,
    pub zone: Zone,
    pub strokes: Vec<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScript {
    pub id: String,
    /// Index of the code-point block the character ids come from.
    pub slot: u32,
    pub middle: Vec<GlyphDef>,
    pub upper: Vec<GlyphDef>,
    pub lower: Vec<GlyphDef>,
    pub has_matra: bool,
}

/// A derived script plus its `(target, source)` shared-glyph pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedScript {
    pub script: SyntheticScript,
    pub mapping: Vec<(char, char)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderStyle {
    pub thickness: f64,
    pub slant_deg: f64,
    pub jitter: f64,
    pub scale_noise: f64,
    pub pepper: f64,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            thickness: 2.0,
            slant_deg: 6.0,
            jitter: 1.5,
            scale_noise: 0.08,
            pepper: 0.0005,
        }
    }
}

impl RenderStyle {
    pub fn clean() -> Self {
        RenderStyle {
            thickness: 2.0,
            slant_deg: 0.0,
            jitter: 0.0,
            scale_noise: 0.0,
            pepper: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.thickness, self.slant_deg, self.jitter, self.scale_noise, self.pepper];
        if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("style values must be finite and non-negative".into()));
        }
        self.check_drawable()
    }

    /// Range check for a resolved per-image style, where slant is signed.
    fn check_drawable(&self) -> Result<()> {
        let amplitudes = [self.thickness, self.jitter, self.scale_noise, self.pepper];
        if amplitudes.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !self.slant_deg.is_finite() {
            return Err(Error::InvalidArgument("style values must be finite and non-negative".into()));
        }
        if self.jitter > 3.0 || self.pepper > 0.5 || self.scale_noise >= 0.5 || self.slant_deg.abs() >= 45.0 {
            return Err(Error::InvalidArgument("style value out of range".into()));
        }
        Ok(())
    }

    /// Per-image draw: slant sign and magnitude vary, jitter and scale noise
    /// are scaled by a random factor.
    pub fn sample(&self, rng: &mut impl Rng) -> RenderStyle {
        RenderStyle {
            thickness: self.thickness,
            slant_deg: self.slant_deg * (rng.random::<f64>() * 2.0 - 1.0),
            jitter: self.jitter * (0.5 + 0.5 * rng.random::<f64>()),
            scale_noise: self.scale_noise,
            pepper: self.pepper,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModifierTruth {
    pub zone: Zone,
    pub label: char,
    pub base_index: usize,
    /// Inclusive drawn column range.
    pub x_range: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub transcription: String,
    /// Inclusive headline rows, `None` for scripts without one.
    pub matra: Option<(usize, usize)>,
    pub middle: Vec<char>,
    /// Inclusive column range of each base's cell.
    pub char_ranges: Vec<(usize, usize)>,
    pub modifiers: Vec<ModifierTruth>,
}

impl SyntheticScript {
    pub fn glyphs(&self, zone: Zone) -> &[GlyphDef] {
        match zone {
            Zone::Middle => &self.middle,
            Zone::Upper => &self.upper,
            Zone::Lower => &self.lower,
        }
    }

    pub fn glyph(&self, c: char) -> Option<&GlyphDef> {
        self.middle
            .iter()
            .chain(&self.upper)
            .chain(&self.lower)
            .find(|g| g.id == c)
    }

    pub fn chars(&self, zone: Zone) -> Vec<char> {
        self.glyphs(zone).iter().map(|g| g.id).collect()
    }

    /// Every glyph is its own character: bases decompose to themselves and
    /// modifier characters attach to the preceding base.
    pub fn decomposition(&self) -> DecompTable {
        let mut t = DecompTable::new();
        for g in self.middle.iter().chain(&self.upper).chain(&self.lower) {
            t.insert(g.id, DecompEntry::modifier(g.zone, g.id));
        }
        t
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids: Vec<char> = self.middle.iter().chain(&self.upper).chain(&self.lower).map(|g| g.id).collect();
        let n = ids.len();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != n {
            return Err(Error::InvalidArgument("duplicate glyph id".into()));
        }
        if self.middle.is_empty() {
            return Err(Error::NoData("script without middle glyphs".into()));
        }
        for (zone, pool) in [(Zone::Middle, &self.middle), (Zone::Upper, &self.upper), (Zone::Lower, &self.lower)] {
            for g in pool {
                if g.zone != zone || g.strokes.is_empty() || g.strokes.iter().any(|s| s.len() < 2) {
                    return Err(Error::InvalidArgument(format!("malformed glyph {:?}", g.id)));
                }
                if g.strokes.iter().flatten().any(|&(x, y)| !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y)) {
                    return Err(Error::InvalidArgument(format!("glyph {:?} leaves the unit box", g.id)));
                }
            }
        }
        Ok(())
    }
}

fn char_id(slot: u32, zone: Zone, i: usize) -> char {
    let offset = match zone {
        Zone::Middle => 0,
        Zone::Upper => 0x80,
        Zone::Lower => 0xC0,
    };
    char::from_u32(BLOCK_START + slot * BLOCK_SIZE + offset + i as u32).expect("block inside the CJK range")
}

fn sample_points(strokes: &[Vec<(f64, f64)>]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for s in strokes {
        for w in s.windows(2) {
            let (a, b) = (w[0], w[1]);
            let len = math::sqrt((b.0 - a.0) * (b.0 - a.0) + (b.1 - a.1) * (b.1 - a.1));
            let steps = ((len / 0.04) as usize).max(1);
            for k in 0..steps {
                let t = k as f64 / steps as f64;
                out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
            }
        }
        out.push(*s.last().expect("strokes have points"));
    }
    out
}

/// Symmetric mean nearest-point distance between two stroke sets.
pub fn stroke_distance(a: &[Vec<(f64, f64)>], b: &[Vec<(f64, f64)>]) -> f64 {
    let pa = sample_points(a);
    let pb = sample_points(b);
    let directed = |p: &[(f64, f64)], q: &[(f64, f64)]| {
        p.iter()
            .map(|&(x, y)| {
                q.iter()
                    .map(|&(u, v)| (x - u) * (x - u) + (y - v) * (y - v))
                    .fold(f64::INFINITY, f64::min)
            })
            .map(math::sqrt)
            .sum::<f64>()
            / p.len() as f64
    };
    0.5 * (directed(&pa, &pb) + directed(&pb, &pa))
}

fn rand_point(rng: &mut ChaCha8Rng, x: (f64, f64), y: (f64, f64)) -> (f64, f64) {
    (rng.random_range(x.0..=x.1), rng.random_range(y.0..=y.1))
}

fn random_strokes(zone: Zone, rng: &mut ChaCha8Rng) -> Vec<Vec<(f64, f64)>> {
    match zone {
        Zone::Middle => {
            let stem_x = rng.random_range(0.8..=0.95);
            let mut strokes = vec![vec![(stem_x, 0.0), (stem_x, 1.0)]];
            let n = rng.random_range(1..=2);
            for _ in 0..n {
                let k = rng.random_range(3..=4);
                strokes.push((0..k).map(|_| rand_point(rng, (0.0, 0.8), (0.0, 1.0))).collect());
            }
            strokes
        }
        Zone::Upper | Zone::Lower => {
            let k = rng.random_range(3..=4);
            let first: Vec<(f64, f64)> = (0..k).map(|_| rand_point(rng, (0.0, 1.0), (0.0, 1.0))).collect();
            let mut strokes = vec![first];
            if rng.random_bool(0.5) {
                // a branch starting on the first stroke keeps the glyph connected
                let anchor = strokes[0][rng.random_range(0..k)];
                let tail = rand_point(rng, (0.0, 1.0), (0.0, 1.0));
                strokes.push(vec![anchor, tail]);
            }
            if zone == Zone::Upper {
                // drop a connector to the headline
                let lowest = *strokes[0]
                    .iter()
                    .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(core::cmp::Ordering::Equal))
                    .expect("non-empty stroke");
                strokes.push(vec![lowest, (lowest.0, 1.0)]);
            }
            strokes
        }
    }
}

const MIN_DISTANCE: [f64; 3] = [0.10, 0.12, 0.12];

fn zone_index(zone: Zone) -> usize {
    match zone {
        Zone::Middle => 0,
        Zone::Upper => 1,
        Zone::Lower => 2,
    }
}

/// Draws a glyph at least the zone's minimum stroke distance from every
/// glyph in `avoid`; the bound relaxes slowly if sampling stalls.
fn fresh_glyph(zone: Zone, avoid: &[&[Vec<(f64, f64)>]], rng: &mut ChaCha8Rng) -> Vec<Vec<(f64, f64)>> {
    let mut bound = MIN_DISTANCE[zone_index(zone)];
    let mut attempts = 0;
    loop {
        let cand = random_strokes(zone, rng);
        if avoid.iter().all(|other| stroke_distance(&cand, other) >= bound) {
            return cand;
        }
        attempts += 1;
        if attempts % 200 == 0 {
            bound *= 0.9;
        }
    }
}

fn jitter_copy(strokes: &[Vec<(f64, f64)>], amount: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<(f64, f64)>> {
    strokes
        .iter()
        .map(|s| {
            s.iter()
                .map(|&(x, y)| {
                    (
                        (x + rng.random_range(-amount..=amount)).clamp(0.0, 1.0),
                        (y + rng.random_range(-amount..=amount)).clamp(0.0, 1.0),
                    )
                })
                .collect()
        })
        .collect()
}

fn check_counts(n_middle: usize, n_upper: usize, n_lower: usize) -> Result<()> {
    if n_middle < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 middle glyphs, got {n_middle}")));
    }
    if n_middle > MAX_MIDDLE || n_upper > MAX_MODIFIERS || n_lower > MAX_MODIFIERS {
        return Err(Error::InvalidArgument("glyph pool too large".into()));
    }
    Ok(())
}

/// A fresh random script in code-point block 0.
pub fn random_script(n_middle: usize, n_upper: usize, n_lower: usize, seed: u64) -> Result<SyntheticScript> {
    random_script_in_slot(n_middle, n_upper, n_lower, seed, 0)
}

pub fn random_script_in_slot(
    n_middle: usize,
    n_upper: usize,
    n_lower: usize,
    seed: u64,
    slot: u32,
) -> Result<SyntheticScript> {
    check_counts(n_middle, n_upper, n_lower)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pools: [Vec<GlyphDef>; 3] = Default::default();
    for (zone, n) in [(Zone::Middle, n_middle), (Zone::Upper, n_upper), (Zone::Lower, n_lower)] {
        let pool = &mut pools[zone_index(zone)];
        for i in 0..n {
            let avoid: Vec<&[Vec<(f64, f64)>]> = pool.iter().map(|g| g.strokes.as_slice()).collect();
            let strokes = fresh_glyph(zone, &avoid, &mut rng);
            pool.push(GlyphDef {
                id: char_id(slot, zone, i),
                zone,
                strokes,
            });
        }
    }
    let [middle, upper, lower] = pools;
    Ok(SyntheticScript {
        id: format!("syn{seed}"),
        slot,
        middle,
        upper,
        lower,
        has_matra: true,
    })
}

/// Derives a target script sharing `⌈ρ·n⌉` glyphs of every pool with `base`.
pub fn derive_script(base: &SyntheticScript, overlap: f64, seed: u64) -> Result<DerivedScript> {
    derive_script_pools(base, overlap, overlap, seed)
}

/// As [`derive_script`] with separate overlaps for the middle pool and the
/// two modifier pools.
pub fn derive_script_pools(
    base: &SyntheticScript,
    middle_overlap: f64,
    modifier_overlap: f64,
    seed: u64,
) -> Result<DerivedScript> {
    for r in [middle_overlap, modifier_overlap] {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::OutOfRange(r));
        }
    }
    let slot = base.slot + 1;
    if BLOCK_START + (slot + 1) * BLOCK_SIZE > 0x9FFF {
        return Err(Error::InvalidArgument("no code-point block left for a derived script".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_de41);
    let mut mapping = Vec::new();
    let mut pools: [Vec<GlyphDef>; 3] = Default::default();
    for zone in [Zone::Middle, Zone::Upper, Zone::Lower] {
        let src = base.glyphs(zone);
        let n = src.len();
        let rho = if zone == Zone::Middle { middle_overlap } else { modifier_overlap };
        let shared = math::ceil(rho * n as f64 - 1e-9) as usize;
        let mut picks: Vec<usize> = (0..n).collect();
        picks.shuffle(&mut rng);
        picks.truncate(shared);
        let mut positions: Vec<usize> = (0..n).collect();
        positions.shuffle(&mut rng);
        let mut slots: Vec<Option<Vec<Vec<(f64, f64)>>>> = vec![None; n];
        for (k, &p) in picks.iter().enumerate() {
            let target = positions[k];
            slots[target] = Some(jitter_copy(&src[p].strokes, 0.03, &mut rng));
            mapping.push((char_id(slot, zone, target), src[p].id));
        }
        let mut pool: Vec<GlyphDef> = Vec::with_capacity(n);
        for (i, s) in slots.iter().enumerate() {
            let strokes = match s {
                Some(st) => st.clone(),
                None => {
                    let mut avoid: Vec<&[Vec<(f64, f64)>]> = src.iter().map(|g| g.strokes.as_slice()).collect();
                    avoid.extend(pool.iter().map(|g| g.strokes.as_slice()));
                    avoid.extend(slots.iter().flatten().map(|st| st.as_slice()));
                    fresh_glyph(zone, &avoid, &mut rng)
                }
            };
            pool.push(GlyphDef {
                id: char_id(slot, zone, i),
                zone,
                strokes,
            });
        }
        pools[zone_index(zone)] = pool;
    }
    mapping.sort_unstable();
    let [middle, upper, lower] = pools;
    Ok(DerivedScript {
        script: SyntheticScript {
            id: format!("{}-d{seed}", base.id),
            slot,
            middle,
            upper,
            lower,
            has_matra: base.has_matra,
        },
        mapping,
    })
}

/// A random word of `n_bases` bases; each base carries an upper modifier with
/// probability `p_upper` and a lower one with probability `p_lower`.
pub fn random_word(script: &SyntheticScript, n_bases: usize, p_upper: f64, p_lower: f64, rng: &mut impl Rng) -> String {
    let mut w = String::new();
    for _ in 0..n_bases {
        w.push(script.middle[rng.random_range(0..script.middle.len())].id);
        if !script.upper.is_empty() && rng.random_bool(p_upper) {
            w.push(script.upper[rng.random_range(0..script.upper.len())].id);
        }
        if !script.lower.is_empty() && rng.random_bool(p_lower) {
            w.push(script.lower[rng.random_range(0..script.lower.len())].id);
        }
    }
    w
}

/// `size` distinct random words of 3 to 5 bases.
pub fn random_lexicon(script: &SyntheticScript, size: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<String> = Vec::with_capacity(size);
    let mut guard = 0;
    while out.len() < size && guard < size * 1000 + 1000 {
        guard += 1;
        let n = rng.random_range(3..=5);
        let w = random_word(script, n, 0.3, 0.25, &mut rng);
        if !out.contains(&w) {
            out.push(w);
        }
    }
    out
}

struct Canvas {
    img: BinaryImage,
}

impl Canvas {
    fn stamp(&mut self, px: f64, py: f64, r: f64) -> Option<(usize, usize)> {
        let (w, h) = (self.img.width() as i64, self.img.height() as i64);
        let ri = math::ceil(r) as i64 + 1;
        let (cx, cy) = (math::floor(px) as i64, math::floor(py) as i64);
        let mut xr: Option<(usize, usize)> = None;
        for y in cy - ri..=cy + ri {
            for x in cx - ri..=cx + ri {
                if x < 0 || y < 0 || x >= w || y >= h {
                    continue;
                }
                let dx = x as f64 + 0.5 - px;
                let dy = y as f64 + 0.5 - py;
                if dx * dx + dy * dy <= r * r {
                    self.img.set(x as usize, y as usize, true);
                    let xu = x as usize;
                    xr = Some(xr.map_or((xu, xu), |(a, b)| (a.min(xu), b.max(xu))));
                }
            }
        }
        xr
    }

    /// Draws a polyline in pixel coordinates; returns the touched columns.
    fn polyline(&mut self, pts: &[(f64, f64)], r: f64) -> Option<(usize, usize)> {
        let mut xr: Option<(usize, usize)> = None;
        let mut merge = |x: Option<(usize, usize)>| {
            if let Some((a, b)) = x {
                xr = Some(xr.map_or((a, b), |(c, d)| (a.min(c), b.max(d))));
            }
        };
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let len = math::sqrt((b.0 - a.0) * (b.0 - a.0) + (b.1 - a.1) * (b.1 - a.1));
            let steps = (len * 4.0) as usize + 1;
            for k in 0..=steps {
                let t = k as f64 / steps as f64;
                merge(self.stamp(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1), r));
            }
        }
        if pts.len() == 1 {
            merge(self.stamp(pts[0].0, pts[0].1, r));
        }
        xr
    }
}

struct GlyphPlacement {
    x: (f64, f64),
    y: (f64, f64),
}

fn draw_glyph(
    canvas: &mut Canvas,
    glyph: &GlyphDef,
    place: GlyphPlacement,
    style: &RenderStyle,
    rng: &mut ChaCha8Rng,
) -> Option<(usize, usize)> {
    let scale = if style.scale_noise > 0.0 {
        1.0 + rng.random_range(-style.scale_noise..=style.scale_noise)
    } else {
        1.0
    };
    let (cx, cy) = ((place.x.0 + place.x.1) / 2.0, (place.y.0 + place.y.1) / 2.0);
    let shear = math::tan(style.slant_deg.to_radians());
    let slant_row = (MATRA_TOP + MATRA_BOTTOM) as f64 / 2.0;
    let r = style.thickness / 2.0;
    // elastic jitter: one smooth displacement field per glyph
    let mut wave = [0.0f64; 6];
    for w in wave.iter_mut() {
        *w = rng.random_range(-1.0..=1.0);
    }
    let field = |u: f64, v: f64, k: usize| {
        style.jitter * math::sin(core::f64::consts::PI * (wave[k] * u + wave[k + 1] * v) + 3.0 * wave[k + 2])
    };
    let mut xr: Option<(usize, usize)> = None;
    for stroke in &glyph.strokes {
        let pts: Vec<(f64, f64)> = stroke
            .iter()
            .map(|&(u, v)| {
                let mut x = place.x.0 + u * (place.x.1 - place.x.0);
                let mut y = place.y.0 + v * (place.y.1 - place.y.0);
                x = cx + (x - cx) * scale;
                y = cy + (y - cy) * scale;
                if style.jitter > 0.0 {
                    x += field(u, v, 0);
                    y += field(u, v, 3);
                }
                x -= (y - slant_row) * shear;
                (x, y.clamp(0.0, (CANVAS_HEIGHT - 1) as f64))
            })
            .collect();
        if let Some((a, b)) = canvas.polyline(&pts, r) {
            xr = Some(xr.map_or((a, b), |(c, d)| (a.min(c), b.max(d))));
        }
    }
    xr
}

/// Renders `word` as a binary image plus ground truth.
pub fn render_word_binary(
    script: &SyntheticScript,
    word: &str,
    style: &RenderStyle,
    seed: u64,
) -> Result<(BinaryImage, GroundTruth)> {
    style.check_drawable()?;
    let table = script.decomposition();
    let dec = table.decompose(word)?;
    for zone in [Zone::Upper, Zone::Lower] {
        for i in 0..dec.middle.len() {
            if dec.layout.iter().filter(|m| m.zone == zone && m.base_index == i).count() > 1 {
                return Err(Error::InvalidArgument(format!("base {i} carries two {} modifiers", zone.name())));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dec.middle.len();
    let width = 2 * MARGIN + n * CELL_WIDTH;
    let mut canvas = Canvas {
        img: BinaryImage::new(width, CANVAS_HEIGHT),
    };
    let matra = if script.has_matra {
        for y in MATRA_TOP..=MATRA_BOTTOM {
            for x in MARGIN..MARGIN + n * CELL_WIDTH {
                canvas.img.set(x, y, true);
            }
        }
        Some((MATRA_TOP, MATRA_BOTTOM))
    } else {
        None
    };
    let mut char_ranges = Vec::with_capacity(n);
    for (i, &c) in dec.middle.iter().enumerate() {
        let x0 = (MARGIN + i * CELL_WIDTH) as f64;
        let glyph = script.glyph(c).ok_or(Error::UnknownChar(c))?;
        draw_glyph(
            &mut canvas,
            glyph,
            GlyphPlacement {
                x: (x0 + MIDDLE_X.0, x0 + MIDDLE_X.1),
                y: MIDDLE_ROWS,
            },
            style,
            &mut rng,
        );
        char_ranges.push((MARGIN + i * CELL_WIDTH, MARGIN + (i + 1) * CELL_WIDTH - 1));
    }
    let mut modifiers = Vec::new();
    for slot in &dec.layout {
        let glyph = script.glyph(slot.label).ok_or(Error::UnknownChar(slot.label))?;
        let center = (MARGIN + slot.base_index * CELL_WIDTH) as f64 + CELL_WIDTH as f64 / 2.0;
        let rows = if slot.zone == Zone::Upper { UPPER_ROWS } else { LOWER_ROWS };
        let xr = draw_glyph(
            &mut canvas,
            glyph,
            GlyphPlacement {
                x: (center - MODIFIER_HALF_WIDTH, center + MODIFIER_HALF_WIDTH),
                y: rows,
            },
            style,
            &mut rng,
        );
        let x_range = xr.unwrap_or((center as usize, center as usize));
        modifiers.push(ModifierTruth {
            zone: slot.zone,
            label: slot.label,
            base_index: slot.base_index,
            x_range,
        });
    }
    if style.pepper > 0.0 {
        let count = math::round(style.pepper * (width * CANVAS_HEIGHT) as f64) as usize;
        for _ in 0..count {
            let x = rng.random_range(0..width);
            let y = rng.random_range(0..CANVAS_HEIGHT);
            canvas.img.set(x, y, true);
        }
    }
    Ok((
        canvas.img,
        GroundTruth {
            transcription: String::from(word),
            matra,
            middle: dec.middle,
            char_ranges,
            modifiers,
        },
    ))
}

/// Renders `word` as a gray image: dark ink on light paper with mild
/// intensity noise.
pub fn render_word(
    script: &SyntheticScript,
    word: &str,
    style: &RenderStyle,
    seed: u64,
) -> Result<(GrayImage, GroundTruth)> {
    let (bin, gt) = render_word_binary(script, word, style, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let data = (0..bin.height())
        .flat_map(|y| (0..bin.width()).map(move |x| (x, y)))
        .map(|(x, y)| {
            if bin.get(x, y) {
                rng.random_range(10u8..=60)
            } else {
                rng.random_range(200u8..=250)
            }
        })
        .collect();
    Ok((GrayImage::new(bin.width(), bin.height(), data)?, gt))
}

/// A clean rendering of one modifier glyph, tightly cropped, for use as a
/// lower-zone template.
pub fn modifier_template(script: &SyntheticScript, label: char) -> Result<BinaryImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    modifier_shape(script, label, &RenderStyle::clean(), &mut rng)
}

fn modifier_shape(script: &SyntheticScript, label: char, style: &RenderStyle, rng: &mut ChaCha8Rng) -> Result<BinaryImage> {
    let glyph = script.glyph(label).ok_or(Error::UnknownChar(label))?;
    if glyph.zone == Zone::Middle {
        return Err(Error::InvalidZone(Zone::Middle));
    }
    let rows = if glyph.zone == Zone::Upper { UPPER_ROWS } else { LOWER_ROWS };
    let mut canvas = Canvas {
        img: BinaryImage::new(CELL_WIDTH, CANVAS_HEIGHT),
    };
    let c = CELL_WIDTH as f64 / 2.0;
    draw_glyph(
        &mut canvas,
        glyph,
        GlyphPlacement {
            x: (c - MODIFIER_HALF_WIDTH, c + MODIFIER_HALF_WIDTH),
            y: rows,
        },
        style,
        rng,
    );
    let bb = canvas.img.ink_bbox().ok_or(Error::BlankImage)?;
    Ok(canvas.img.crop(bb.x0, bb.y0, bb.x1 - bb.x0 + 1, bb.y1 - bb.y0 + 1))
}

/// Templates for every modifier of `zone`: the clean shape plus `variants`
/// renders under per-sample draws of `style`.
pub fn modifier_templates(
    script: &SyntheticScript,
    zone: Zone,
    variants: usize,
    style: &RenderStyle,
    seed: u64,
) -> Result<Vec<(char, BinaryImage)>> {
    if zone == Zone::Middle {
        return Err(Error::InvalidZone(Zone::Middle));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for g in script.glyphs(zone) {
        out.push((g.id, modifier_template(script, g.id)?));
        for _ in 0..variants {
            let st = RenderStyle {
                pepper: 0.0,
                ..style.sample(&mut rng)
            };
            out.push((g.id, modifier_shape(script, g.id, &st, &mut rng)?));
        }
    }
    Ok(out)
}
