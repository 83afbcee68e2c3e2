//! Text formats: script files, decomposition tables, manifests, sidecars,
//! lexicons and LUT files.
//!
//! Characters are written literally unless they are whitespace or one of the
//! separator characters, in which case they are written as `U+XXXX`. Both
//! forms are accepted on input.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use xlhwr_core::alphabet::{DecompEntry, DecompTable, Zone};
use xlhwr_core::synthscript::{GlyphDef, GroundTruth, ModifierTruth, SyntheticScript};
use xlhwr_core::xmap::Lut;

use crate::error::{read_to_string, CliError, CliResult};

pub const SCRIPT_MAGIC: &str = "XLHWR-SCRIPT 1";

const RESERVED: &[char] = &[',', '=', ':', '#', '+', '\\'];

pub fn fmt_char(c: char) -> String {
    if c.is_whitespace() || c.is_control() || RESERVED.contains(&c) {
        format!("U+{:04X}", c as u32)
    } else {
        c.to_string()
    }
}

pub fn parse_char(s: &str) -> Option<char> {
    if let Some(hex) = s.strip_prefix("U+").filter(|h| !h.is_empty()) {
        return u32::from_str_radix(hex, 16).ok().and_then(char::from_u32);
    }
    let mut it = s.chars();
    match (it.next(), it.next()) {
        (Some(c), None) => Some(c),
        _ => None,
    }
}

pub fn char_list(chars: &[char]) -> String {
    chars.iter().map(|&c| fmt_char(c)).collect::<Vec<_>>().join(",")
}

fn parse_char_list(s: &str) -> Option<Vec<char>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(',').map(parse_char).collect()
}

fn zone_name(z: Zone) -> &'static str {
    z.name()
}

fn parse_zone(s: &str) -> Option<Zone> {
    Zone::parse(s)
}

/// Lines with their 1-based numbers, skipping blanks and `#` comments.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

pub fn write_script(script: &SyntheticScript) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{SCRIPT_MAGIC}");
    let _ = writeln!(out, "id {}", script.id);
    let _ = writeln!(out, "slot {}", script.slot);
    let _ = writeln!(out, "matra {}", u8::from(script.has_matra));
    for zone in [Zone::Middle, Zone::Upper, Zone::Lower] {
        for g in script.glyphs(zone) {
            let _ = writeln!(out, "glyph {} {}", fmt_char(g.id), zone_name(zone));
            for s in &g.strokes {
                let pts: Vec<String> = s.iter().map(|(x, y)| format!("{x},{y}")).collect();
                let _ = writeln!(out, "stroke {}", pts.join(" "));
            }
        }
    }
    out
}

pub fn parse_script(text: &str, path: &Path) -> CliResult<SyntheticScript> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    match lines.next() {
        Some((_, l)) if l == SCRIPT_MAGIC => {}
        Some((_, l)) if l.starts_with("XLHWR-SCRIPT ") => {
            return Err(CliError::parse(path, 1, format!("unsupported script version {:?}", &l[13..])))
        }
        _ => return Err(CliError::parse(path, 1, format!("missing {SCRIPT_MAGIC:?} header"))),
    }
    let mut script = SyntheticScript {
        id: String::new(),
        slot: 0,
        middle: Vec::new(),
        upper: Vec::new(),
        lower: Vec::new(),
        has_matra: true,
    };
    let mut current: Option<GlyphDef> = None;
    let flush = |g: Option<GlyphDef>, s: &mut SyntheticScript| {
        if let Some(g) = g {
            match g.zone {
                Zone::Middle => s.middle.push(g),
                Zone::Upper => s.upper.push(g),
                Zone::Lower => s.lower.push(g),
            }
        }
    };
    for (n, line) in lines {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
        let bad = |m: &str| CliError::parse(path, n, m.to_string());
        match key {
            "id" => script.id = rest.to_string(),
            "slot" => script.slot = rest.parse().map_err(|_| bad("bad slot"))?,
            "matra" => script.has_matra = rest == "1",
            "glyph" => {
                flush(current.take(), &mut script);
                let mut it = rest.split(' ');
                let id = it.next().and_then(parse_char).ok_or_else(|| bad("bad glyph id"))?;
                let zone = it.next().and_then(parse_zone).ok_or_else(|| bad("bad glyph zone"))?;
                current = Some(GlyphDef {
                    id,
                    zone,
                    strokes: Vec::new(),
                });
            }
            "stroke" => {
                let g = current.as_mut().ok_or_else(|| bad("stroke outside a glyph"))?;
                let pts = rest
                    .split(' ')
                    .map(|p| {
                        let (x, y) = p.split_once(',')?;
                        Some((x.parse().ok()?, y.parse().ok()?))
                    })
                    .collect::<Option<Vec<(f64, f64)>>>()
                    .ok_or_else(|| bad("bad stroke point"))?;
                g.strokes.push(pts);
            }
            other => return Err(bad(&format!("unknown key {other:?}"))),
        }
    }
    flush(current, &mut script);
    script.validate().map_err(|e| CliError::parse(path, 0, e.to_string()))?;
    Ok(script)
}

pub fn load_script(path: &Path) -> CliResult<SyntheticScript> {
    parse_script(&read_to_string(path)?, path)
}

pub fn write_decomp(table: &DecompTable) -> String {
    let mut out = String::from("# char = base [+upper:u] [+lower:l]\n");
    for (c, e) in table.iter() {
        let mut line = format!("{} =", fmt_char(c));
        if let Some(m) = e.middle {
            let _ = write!(line, " {}", fmt_char(m));
        }
        if let Some(u) = e.upper {
            let _ = write!(line, " +upper:{}", fmt_char(u));
        }
        if let Some(l) = e.lower {
            let _ = write!(line, " +lower:{}", fmt_char(l));
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn parse_decomp(text: &str, path: &Path) -> CliResult<DecompTable> {
    let mut table = DecompTable::new();
    for (n, line) in content_lines(text) {
        let bad = |m: &str| CliError::parse(path, n, m.to_string());
        let (lhs, rhs) = line.split_once('=').ok_or_else(|| bad("expected `char = ...`"))?;
        let c = parse_char(lhs.trim()).ok_or_else(|| bad("bad character"))?;
        let mut e = DecompEntry::default();
        for tok in rhs.split_whitespace() {
            if let Some(u) = tok.strip_prefix("+upper:") {
                e.upper = Some(parse_char(u).ok_or_else(|| bad("bad upper label"))?);
            } else if let Some(l) = tok.strip_prefix("+lower:") {
                e.lower = Some(parse_char(l).ok_or_else(|| bad("bad lower label"))?);
            } else if tok == "-" {
            } else if e.middle.is_none() {
                e.middle = Some(parse_char(tok).ok_or_else(|| bad("bad base"))?);
            } else {
                return Err(bad("more than one base"));
            }
        }
        if e == DecompEntry::default() {
            return Err(bad("empty decomposition"));
        }
        if table.get(c).is_some() {
            return Err(bad("duplicate character"));
        }
        table.insert(c, e);
    }
    Ok(table)
}

pub fn load_decomp(path: &Path) -> CliResult<DecompTable> {
    parse_decomp(&read_to_string(path)?, path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    /// The image path as written in the manifest.
    pub name: String,
    /// Resolved against the manifest's directory.
    pub image: PathBuf,
    pub transcription: String,
    pub sidecar: Option<PathBuf>,
}

/// A TSV dataset listing. Header comments `# key value` carry the script id
/// and optional paths to the decomposition table and glyph file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub script: String,
    pub headers: BTreeMap<String, String>,
    pub rows: Vec<ManifestRow>,
    pub dir: PathBuf,
}

impl Manifest {
    /// A header value interpreted as a path relative to the manifest.
    pub fn header_path(&self, key: &str) -> Option<PathBuf> {
        self.headers.get(key).map(|p| self.dir.join(p))
    }

    pub fn decomp(&self) -> CliResult<DecompTable> {
        let p = self
            .header_path("decomp")
            .ok_or_else(|| CliError::Data(format!("manifest for {} names no decomposition table", self.script)))?;
        load_decomp(&p)
    }

    pub fn glyphs(&self) -> CliResult<Option<SyntheticScript>> {
        self.header_path("glyphs").map(|p| load_script(&p)).transpose()
    }
}

pub fn write_manifest(script: &str, headers: &[(&str, &str)], rows: &[(String, String, Option<String>)]) -> String {
    let mut out = format!("# script {script}\n");
    for (k, v) in headers {
        let _ = writeln!(out, "# {k} {v}");
    }
    for (img, tr, side) in rows {
        match side {
            Some(s) => {
                let _ = writeln!(out, "{img}\t{tr}\t{s}");
            }
            None => {
                let _ = writeln!(out, "{img}\t{tr}");
            }
        }
    }
    out
}

pub fn parse_manifest(text: &str, path: &Path) -> CliResult<Manifest> {
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut m = Manifest {
        dir: dir.clone(),
        ..Default::default()
    };
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            if let Some((k, v)) = c.trim().split_once(' ') {
                if k == "script" {
                    m.script = v.trim().to_string();
                } else {
                    m.headers.insert(k.to_string(), v.trim().to_string());
                }
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 2 || cols.len() > 3 {
            return Err(CliError::parse(path, n, "expected image<TAB>transcription[<TAB>sidecar]"));
        }
        if cols[1].trim().is_empty() {
            return Err(CliError::parse(path, n, "empty transcription"));
        }
        m.rows.push(ManifestRow {
            name: cols[0].to_string(),
            image: dir.join(cols[0]),
            transcription: cols[1].to_string(),
            sidecar: cols.get(2).filter(|s| !s.is_empty()).map(|s| dir.join(s)),
        });
    }
    if m.script.is_empty() {
        return Err(CliError::parse(path, 1, "missing `# script <id>` header"));
    }
    Ok(m)
}

pub fn load_manifest(path: &Path) -> CliResult<Manifest> {
    parse_manifest(&read_to_string(path)?, path)
}

pub fn write_sidecar(gt: &GroundTruth) -> String {
    let mut out = format!("transcription\t{}\n", gt.transcription);
    match gt.matra {
        Some((a, b)) => {
            let _ = writeln!(out, "matra\t{a}\t{b}");
        }
        None => out.push_str("matra\t-\n"),
    }
    let _ = writeln!(out, "middle\t{}", char_list(&gt.middle));
    for (a, b) in &gt.char_ranges {
        let _ = writeln!(out, "range\t{a}\t{b}");
    }
    for m in &gt.modifiers {
        let _ = writeln!(
            out,
            "modifier\t{}\t{}\t{}\t{}\t{}",
            zone_name(m.zone),
            fmt_char(m.label),
            m.base_index,
            m.x_range.0,
            m.x_range.1
        );
    }
    out
}

pub fn parse_sidecar(text: &str, path: &Path) -> CliResult<GroundTruth> {
    let mut gt = GroundTruth {
        transcription: String::new(),
        matra: None,
        middle: Vec::new(),
        char_ranges: Vec::new(),
        modifiers: Vec::new(),
    };
    for (n, line) in content_lines(text) {
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = || CliError::parse(path, n, format!("bad {:?} line", cols[0]));
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
        match (cols[0], cols.len()) {
            ("transcription", 2) => gt.transcription = cols[1].to_string(),
            ("matra", 2) if cols[1] == "-" => gt.matra = None,
            ("matra", 3) => gt.matra = Some((num(cols[1])?, num(cols[2])?)),
            ("middle", 2) => gt.middle = parse_char_list(cols[1]).ok_or_else(bad)?,
            ("range", 3) => gt.char_ranges.push((num(cols[1])?, num(cols[2])?)),
            ("modifier", 6) => gt.modifiers.push(ModifierTruth {
                zone: parse_zone(cols[1]).ok_or_else(bad)?,
                label: parse_char(cols[2]).ok_or_else(bad)?,
                base_index: num(cols[3])?,
                x_range: (num(cols[4])?, num(cols[5])?),
            }),
            _ => return Err(bad()),
        }
    }
    Ok(gt)
}

pub fn load_sidecar(path: &Path) -> CliResult<GroundTruth> {
    parse_sidecar(&read_to_string(path)?, path)
}

/// One word per line; blank lines and `#` comments are skipped.
pub fn parse_word_list(text: &str) -> Vec<String> {
    content_lines(text).map(|(_, l)| l.trim().to_string()).collect()
}

pub fn load_word_list(path: &Path) -> CliResult<Vec<String>> {
    Ok(parse_word_list(&read_to_string(path)?))
}

pub fn write_word_list(words: &[String]) -> String {
    let mut out = String::new();
    for w in words {
        out.push_str(w);
        out.push('\n');
    }
    out
}

/// `zone<TAB>target<TAB>source<TAB>hist:a=7,b=3`, one line per entry.
pub fn write_luts(luts: &[&Lut]) -> String {
    let mut out = String::new();
    for lut in luts {
        for (t, e) in lut.iter() {
            let hist: Vec<String> = e.histogram.iter().map(|(c, n)| format!("{}={n}", fmt_char(*c))).collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{}\thist:{}",
                zone_name(lut.zone),
                fmt_char(t),
                fmt_char(e.source),
                hist.join(",")
            );
        }
    }
    out
}

pub fn parse_luts(text: &str, path: &Path) -> CliResult<Vec<Lut>> {
    let mut luts: BTreeMap<Zone, Lut> = BTreeMap::new();
    for (n, line) in content_lines(text) {
        let bad = |m: &str| CliError::parse(path, n, m.to_string());
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(bad("expected zone<TAB>target<TAB>source<TAB>hist:..."));
        }
        let zone = parse_zone(cols[0]).ok_or_else(|| bad("bad zone"))?;
        let target = parse_char(cols[1]).ok_or_else(|| bad("bad target"))?;
        let source = parse_char(cols[2]).ok_or_else(|| bad("bad source"))?;
        let body = cols[3].strip_prefix("hist:").ok_or_else(|| bad("missing hist:"))?;
        let mut hist = BTreeMap::new();
        for kv in body.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad("bad histogram entry"))?;
            hist.insert(
                parse_char(k).ok_or_else(|| bad("bad histogram label"))?,
                v.parse().map_err(|_| bad("bad histogram count"))?,
            );
        }
        let lut = luts.entry(zone).or_insert_with(|| Lut::new(zone));
        if lut.get(target).is_some() {
            return Err(bad("duplicate target"));
        }
        lut.insert(target, source, hist);
    }
    Ok(luts.into_values().collect())
}

pub fn load_luts(path: &Path) -> CliResult<Vec<Lut>> {
    parse_luts(&read_to_string(path)?, path)
}
