//! `XLHWR 1` model bundles: a versioned, checksummed text format holding
//! character HMMs, modifier SVMs and LUTs.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! loaded model recomputes exactly the same scores as the saved one.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use xlhwr_core::alphabet::Zone;
use xlhwr_core::ghmm::{CharHmm, Gmm, HmmSet};
use xlhwr_core::phog::WindowGeometry;
use xlhwr_core::rbfsvm::{BinaryMachine, FeatureScale, SvmModel};
use xlhwr_core::xmap::{Lut, LutSet};

use crate::error::{read_to_string, write_file, CliError, CliResult};
use crate::text::{fmt_char, parse_char};

pub const MAGIC: &str = "XLHWR";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelBundle {
    pub geometry: WindowGeometry,
    /// Hex digest of the training configuration or manifest.
    pub config_hash: String,
    pub seed: u64,
    /// Training hyper-parameters, recorded for provenance.
    pub params: BTreeMap<String, String>,
    pub hmm: Option<HmmSet>,
    pub upper: Option<SvmModel>,
    pub lower: Option<SvmModel>,
    pub luts: Vec<Lut>,
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

impl ModelBundle {
    pub fn svm(&self, zone: Zone) -> Option<&SvmModel> {
        match zone {
            Zone::Upper => self.upper.as_ref(),
            Zone::Lower => self.lower.as_ref(),
            Zone::Middle => None,
        }
    }

    pub fn lut(&self, zone: Zone) -> Option<&Lut> {
        self.luts.iter().find(|l| l.zone == zone)
    }

    /// The LUT set, when a middle-zone LUT is present.
    pub fn lut_set(&self) -> Option<LutSet> {
        Some(LutSet {
            middle: self.lut(Zone::Middle)?.clone(),
            upper: self.lut(Zone::Upper).cloned(),
            lower: self.lut(Zone::Lower).cloned(),
        })
    }

    pub fn kind(&self) -> String {
        let mut parts = Vec::new();
        if self.hmm.is_some() {
            parts.push("hmm".to_string());
        }
        for (z, m) in [("upper", &self.upper), ("lower", &self.lower)] {
            if m.is_some() {
                parts.push(format!("svm-{z}"));
            }
        }
        for l in &self.luts {
            parts.push(format!("lut-{}", l.zone.name()));
        }
        if parts.is_empty() {
            "empty".into()
        } else {
            parts.join(",")
        }
    }

    fn payload(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "kind {}", self.kind());
        let _ = writeln!(o, "geometry {} {}", self.geometry.width, self.geometry.shift);
        let hash = if self.config_hash.is_empty() { "-" } else { &self.config_hash };
        let _ = writeln!(o, "provenance {hash} {}", self.seed);
        for (k, v) in &self.params {
            let _ = writeln!(o, "param {k} {v}");
        }
        if let Some(set) = &self.hmm {
            let _ = writeln!(o, "hmm {} {}", set.len(), set.script_id);
            for m in set.models() {
                let _ = writeln!(o, "model {} {}", fmt_char(m.id()), m.n_states());
                let _ = writeln!(o, "self {}", join(m.self_probs()));
                for g in m.states() {
                    let _ = writeln!(o, "gmm {} {}", g.dim(), g.n_components());
                    let _ = writeln!(o, "w {}", join(g.weights()));
                    let _ = writeln!(o, "m {}", join(g.means()));
                    let _ = writeln!(o, "v {}", join(g.vars()));
                }
            }
        }
        for (zone, svm) in [(Zone::Upper, &self.upper), (Zone::Lower, &self.lower)] {
            let Some(svm) = svm else { continue };
            let labels: Vec<String> = svm.labels().iter().map(|&c| fmt_char(c)).collect();
            let _ = writeln!(
                o,
                "svm {} {} {} {} {}",
                zone.name(),
                svm.dim(),
                svm.gamma(),
                svm.c(),
                labels.join(" ")
            );
            let _ = writeln!(o, "center {}", join(&svm.scale().center));
            let _ = writeln!(o, "factor {}", join(&svm.scale().factor));
            for m in svm.machines() {
                let _ = writeln!(
                    o,
                    "machine {} {} {} {} {} {}",
                    m.pos,
                    m.neg,
                    m.rho,
                    m.gap,
                    m.iterations,
                    m.support.len()
                );
                for (sv, c) in m.support.iter().zip(&m.coef) {
                    let _ = writeln!(o, "sv {c} {}", join(sv));
                }
            }
        }
        for lut in &self.luts {
            let _ = writeln!(o, "lut {} {}", lut.zone.name(), lut.len());
            for (t, e) in lut.iter() {
                let hist: Vec<String> = e.histogram.iter().map(|(c, n)| format!("{}={n}", fmt_char(*c))).collect();
                let _ = writeln!(o, "entry {} {} {}", fmt_char(t), fmt_char(e.source), hist.join(","));
            }
        }
        o.push_str("end\n");
        o
    }

    pub fn to_text(&self) -> String {
        let payload = self.payload();
        let digest = hex::encode(Sha256::digest(payload.as_bytes()));
        format!("{MAGIC} {VERSION}\nsha256 {digest}\n{payload}")
    }

    pub fn from_text(text: &str) -> CliResult<Self> {
        let bad = |m: String| CliError::Bundle(m);
        let (head, rest) = text.split_once('\n').ok_or_else(|| bad("missing header".into()))?;
        let version = head
            .strip_prefix("XLHWR ")
            .ok_or_else(|| bad(format!("not a model bundle (header {head:?})")))?;
        if version.trim() != VERSION.to_string() {
            return Err(bad(format!("unsupported bundle version {:?}, expected {VERSION}", version.trim())));
        }
        let (sum, payload) = rest.split_once('\n').ok_or_else(|| bad("missing checksum line".into()))?;
        let want = sum.strip_prefix("sha256 ").ok_or_else(|| bad("missing checksum line".into()))?;
        let got = hex::encode(Sha256::digest(payload.as_bytes()));
        if got != want.trim() {
            return Err(bad(format!("checksum mismatch: payload hashes to {got}, header says {}", want.trim())));
        }
        Parser::new(payload).bundle()
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        write_file(path, self.to_text())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::from_text(&read_to_string(path)?).map_err(|e| match e {
            CliError::Bundle(m) => CliError::Bundle(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Combines bundles holding disjoint parts. Two copies of the same part,
    /// or differing feature geometry, are incompatible.
    pub fn merge(bundles: Vec<ModelBundle>) -> CliResult<ModelBundle> {
        let mut it = bundles.into_iter();
        let mut out = it.next().ok_or_else(|| CliError::Usage("no model bundle given".into()))?;
        for b in it {
            if b.geometry != out.geometry {
                return Err(CliError::Bundle(format!(
                    "feature geometry {}x{} differs from {}x{}",
                    b.geometry.width, b.geometry.shift, out.geometry.width, out.geometry.shift
                )));
            }
            let clash = |what: &str| CliError::Bundle(format!("more than one {what} among the given bundles"));
            if b.hmm.is_some() {
                if out.hmm.is_some() {
                    return Err(clash("HMM set"));
                }
                out.hmm = b.hmm;
            }
            if b.upper.is_some() {
                if out.upper.is_some() {
                    return Err(clash("upper-zone SVM"));
                }
                out.upper = b.upper;
            }
            if b.lower.is_some() {
                if out.lower.is_some() {
                    return Err(clash("lower-zone SVM"));
                }
                out.lower = b.lower;
            }
            for l in b.luts {
                if out.lut(l.zone).is_some() {
                    return Err(clash(&format!("{} LUT", l.zone.name())));
                }
                out.luts.push(l);
            }
            for (k, v) in b.params {
                out.params.entry(k).or_insert(v);
            }
        }
        if let Some(h) = &out.hmm {
            if h.geometry != out.geometry {
                return Err(CliError::Bundle("HMM geometry differs from the bundle header".into()));
            }
        }
        Ok(out)
    }
}

struct Parser<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line: usize,
}

impl<'a> Parser<'a> {
    fn new(payload: &'a str) -> Self {
        Parser {
            lines: payload.lines().enumerate().peekable(),
            line: 0,
        }
    }

    fn err(&self, msg: impl std::fmt::Display) -> CliError {
        // payload line n is file line n + 2
        CliError::Bundle(format!("line {}: {msg}", self.line + 2))
    }

    fn next(&mut self) -> CliResult<(&'a str, &'a str)> {
        let (i, l) = self.lines.next().ok_or_else(|| CliError::Bundle("truncated bundle".into()))?;
        self.line = i + 1;
        Ok(l.split_once(' ').unwrap_or((l, "")))
    }

    fn expect(&mut self, key: &str) -> CliResult<&'a str> {
        let (k, rest) = self.next()?;
        if k != key {
            return Err(self.err(format!("expected {key:?}, found {k:?}")));
        }
        Ok(rest)
    }

    fn num<T: std::str::FromStr>(&self, s: &str) -> CliResult<T> {
        s.parse().map_err(|_| self.err(format!("bad number {s:?}")))
    }

    fn floats(&self, s: &str) -> CliResult<Vec<f64>> {
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(' ').map(|x| self.num(x)).collect()
    }

    fn chr(&self, s: &str) -> CliResult<char> {
        parse_char(s).ok_or_else(|| self.err(format!("bad character {s:?}")))
    }

    fn zone(&self, s: &str) -> CliResult<Zone> {
        Zone::parse(s).ok_or_else(|| self.err(format!("bad zone {s:?}")))
    }

    fn core<T>(&self, r: xlhwr_core::Result<T>) -> CliResult<T> {
        r.map_err(|e| self.err(e))
    }

    fn bundle(mut self) -> CliResult<ModelBundle> {
        let mut b = ModelBundle::default();
        self.expect("kind")?;
        let g: Vec<usize> = {
            let rest = self.expect("geometry")?;
            rest.split(' ').map(|x| self.num(x)).collect::<CliResult<_>>()?
        };
        if g.len() != 2 || g[0] == 0 || g[1] == 0 {
            return Err(self.err("geometry needs a width and a shift"));
        }
        b.geometry = WindowGeometry { width: g[0], shift: g[1] };
        let prov = self.expect("provenance")?;
        let (hash, seed) = prov.split_once(' ').ok_or_else(|| self.err("provenance needs a hash and a seed"))?;
        b.config_hash = if hash == "-" { String::new() } else { hash.to_string() };
        b.seed = self.num(seed)?;
        loop {
            let (key, rest) = self.next()?;
            match key {
                "param" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    b.params.insert(k.to_string(), v.to_string());
                }
                "hmm" => {
                    if b.hmm.is_some() {
                        return Err(self.err("second HMM set"));
                    }
                    b.hmm = Some(self.hmm(rest, b.geometry)?);
                }
                "svm" => {
                    let (zone, svm) = self.svm(rest)?;
                    let slot = if zone == Zone::Upper { &mut b.upper } else { &mut b.lower };
                    if slot.is_some() {
                        return Err(self.err("second SVM for a zone"));
                    }
                    *slot = Some(svm);
                }
                "lut" => {
                    let lut = self.lut(rest)?;
                    if b.lut(lut.zone).is_some() {
                        return Err(self.err("second LUT for a zone"));
                    }
                    b.luts.push(lut);
                }
                "end" => break,
                other => return Err(self.err(format!("unknown record {other:?}"))),
            }
        }
        if let Some((_, l)) = self.lines.find(|(_, l)| !l.is_empty()) {
            return Err(self.err(format!("data after end: {l:?}")));
        }
        Ok(b)
    }

    fn hmm(&mut self, head: &str, geometry: WindowGeometry) -> CliResult<HmmSet> {
        let (n, id) = head.split_once(' ').unwrap_or((head, ""));
        let n: usize = self.num(n)?;
        let mut models = Vec::with_capacity(n);
        for _ in 0..n {
            let rest = self.expect("model")?;
            let (c, ns) = rest.split_once(' ').ok_or_else(|| self.err("model needs a char and a state count"))?;
            let c = self.chr(c)?;
            let ns: usize = self.num(ns)?;
            let self_prob = {
                let r = self.expect("self")?;
                self.floats(r)?
            };
            let mut states = Vec::with_capacity(ns);
            for _ in 0..ns {
                let r = self.expect("gmm")?;
                let (d, _) = r.split_once(' ').ok_or_else(|| self.err("gmm needs a dim and a size"))?;
                let dim: usize = self.num(d)?;
                let w = {
                    let r = self.expect("w")?;
                    self.floats(r)?
                };
                let m = {
                    let r = self.expect("m")?;
                    self.floats(r)?
                };
                let v = {
                    let r = self.expect("v")?;
                    self.floats(r)?
                };
                states.push(self.core(Gmm::new(dim, w, m, v))?);
            }
            models.push(self.core(CharHmm::new(c, states, self_prob))?);
        }
        self.core(HmmSet::new(id, geometry, models))
    }

    fn svm(&mut self, head: &str) -> CliResult<(Zone, SvmModel)> {
        let f: Vec<&str> = head.split(' ').collect();
        if f.len() < 4 {
            return Err(self.err("svm needs zone, dim, gamma, c and labels"));
        }
        let zone = self.zone(f[0])?;
        if zone == Zone::Middle {
            return Err(self.err("middle-zone SVM"));
        }
        let dim: usize = self.num(f[1])?;
        let gamma: f64 = self.num(f[2])?;
        let c: f64 = self.num(f[3])?;
        let labels = f[4..].iter().map(|s| self.chr(s)).collect::<CliResult<Vec<char>>>()?;
        let r = self.expect("center")?;
        let center = self.floats(r)?;
        let r = self.expect("factor")?;
        let factor = self.floats(r)?;
        if center.len() != dim || factor.len() != dim {
            return Err(self.err("feature scale length does not match dim"));
        }
        let n = labels.len() * labels.len().saturating_sub(1) / 2;
        let mut machines = Vec::with_capacity(n);
        for _ in 0..n {
            let r = self.expect("machine")?;
            let x: Vec<&str> = r.split(' ').collect();
            if x.len() != 6 {
                return Err(self.err("machine needs six fields"));
            }
            let nsv: usize = self.num(x[5])?;
            let mut support = Vec::with_capacity(nsv);
            let mut coef = Vec::with_capacity(nsv);
            for _ in 0..nsv {
                let r = self.expect("sv")?;
                let mut v = self.floats(r)?;
                if v.is_empty() {
                    return Err(self.err("empty support vector"));
                }
                coef.push(v.remove(0));
                support.push(v);
            }
            machines.push(BinaryMachine {
                pos: self.num(x[0])?,
                neg: self.num(x[1])?,
                rho: self.num(x[2])?,
                gap: self.num(x[3])?,
                iterations: self.num(x[4])?,
                support,
                coef,
            });
        }
        Ok((zone, self.core(SvmModel::from_parts(labels, machines, gamma, c, FeatureScale { center, factor }))?))
    }

    fn lut(&mut self, head: &str) -> CliResult<Lut> {
        let (z, n) = head.split_once(' ').ok_or_else(|| self.err("lut needs a zone and a size"))?;
        let mut lut = Lut::new(self.zone(z)?);
        let n: usize = self.num(n)?;
        for _ in 0..n {
            let r = self.expect("entry")?;
            let f: Vec<&str> = r.split(' ').collect();
            if f.len() != 3 {
                return Err(self.err("entry needs target, source and histogram"));
            }
            let mut hist = BTreeMap::new();
            for kv in f[2].split(',').filter(|s| !s.is_empty()) {
                let (k, v) = kv.split_once('=').ok_or_else(|| self.err("bad histogram"))?;
                hist.insert(self.chr(k)?, self.num(v)?);
            }
            lut.insert(self.chr(f[0])?, self.chr(f[1])?, hist);
        }
        Ok(lut)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ModelBundle {
        let g = |m: f64| Gmm::new(2, vec![0.25, 0.75], vec![m, 0.1, -m, 1.0 / 3.0], vec![0.5, 1e-4, 2.0, 0.3]).unwrap();
        let a = CharHmm::new('a', vec![g(0.1), g(0.7)], vec![0.6, 0.1 + 0.2]).unwrap();
        let b = CharHmm::new(',', vec![g(-2.5)], vec![0.5]).unwrap();
        let set = HmmSet::new("toy script", WindowGeometry::default(), vec![a, b]).unwrap();
        let machine = BinaryMachine {
            pos: 0,
            neg: 1,
            support: vec![vec![0.1, 0.2], vec![std::f64::consts::PI, 0.0]],
            coef: vec![0.5, -0.5],
            rho: 1e-17,
            gap: 0.001,
            iterations: 12,
        };
        let scale = FeatureScale {
            center: vec![0.5, -0.125],
            factor: vec![2.0, 0.0],
        };
        let svm = SvmModel::from_parts(vec!['x', 'y'], vec![machine], 0.3, 1.0, scale).unwrap();
        let mut lut = Lut::new(Zone::Middle);
        lut.insert('p', 'a', BTreeMap::from([('a', 3), (',', 1)]));
        ModelBundle {
            hmm: Some(set),
            upper: Some(svm),
            luts: vec![lut],
            seed: 7,
            config_hash: "abc".into(),
            params: BTreeMap::from([("states".to_string(), "2".to_string())]),
            ..Default::default()
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let b = toy();
        let text = b.to_text();
        let back = ModelBundle::from_text(&text).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn corruption_and_versions_are_reported() {
        let text = toy().to_text();
        let bad = text.replacen("0.25", "0.26", 1);
        assert!(matches!(ModelBundle::from_text(&bad), Err(CliError::Bundle(m)) if m.contains("checksum")));
        let future = text.replacen("XLHWR 1", "XLHWR 2", 1);
        assert!(matches!(ModelBundle::from_text(&future), Err(CliError::Bundle(m)) if m.contains("version")));
        assert!(ModelBundle::from_text("hello\n").is_err());
    }

    #[test]
    fn merging_rejects_duplicates() {
        let a = ModelBundle {
            hmm: toy().hmm,
            ..Default::default()
        };
        let l = ModelBundle {
            luts: toy().luts,
            ..Default::default()
        };
        let m = ModelBundle::merge(vec![a.clone(), l]).unwrap();
        assert!(m.hmm.is_some() && m.lut(Zone::Middle).is_some());
        assert!(ModelBundle::merge(vec![a.clone(), a.clone()]).is_err());
        let other = ModelBundle {
            geometry: WindowGeometry { width: 10, shift: 3 },
            ..Default::default()
        };
        assert!(matches!(ModelBundle::merge(vec![a, other]), Err(CliError::Bundle(_))));
    }
}
