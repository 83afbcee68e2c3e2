//! Character inventories and the decomposition of written characters into
//! zone-wise units.
//!
//! A word is a string of Unicode scalars. Each scalar decomposes into an
//! optional middle-zone base plus optional upper and lower modifiers. A
//! modifier attaches to the base of its own entry, or to the most recent
//! base when its entry carries none (the way combining vowel signs follow
//! their consonant).

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Zone {
    Middle,
    Upper,
    Lower,
}

impl Zone {
    pub fn name(self) -> &'static str {
        match self {
            Zone::Middle => "middle",
            Zone::Upper => "upper",
            Zone::Lower => "lower",
        }
    }

    pub fn parse(s: &str) -> Option<Zone> {
        match s {
            "middle" => Some(Zone::Middle),
            "upper" => Some(Zone::Upper),
            "lower" => Some(Zone::Lower),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DecompEntry {
    pub middle: Option<char>,
    pub upper: Option<char>,
    pub lower: Option<char>,
}

impl DecompEntry {
    pub fn base(c: char) -> Self {
        DecompEntry {
            middle: Some(c),
            ..Default::default()
        }
    }

    pub fn modifier(zone: Zone, c: char) -> Self {
        match zone {
            Zone::Middle => Self::base(c),
            Zone::Upper => DecompEntry {
                upper: Some(c),
                ..Default::default()
            },
            Zone::Lower => DecompEntry {
                lower: Some(c),
                ..Default::default()
            },
        }
    }

    /// Number of zone units this entry contributes, as (middle, upper, lower).
    pub fn arity(&self) -> (bool, bool, bool) {
        (
            self.middle.is_some(),
            self.upper.is_some(),
            self.lower.is_some(),
        )
    }
}

/// One modifier of a word: its zone, label and the middle-zone index it
/// attaches to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModifierSlot {
    pub zone: Zone,
    pub label: char,
    pub base_index: usize,
}

/// A word split into its middle-zone sequence and modifier layout.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Decomposed {
    pub middle: Vec<char>,
    pub layout: Vec<ModifierSlot>,
}

impl Decomposed {
    pub fn count(&self, zone: Zone) -> usize {
        self.layout.iter().filter(|m| m.zone == zone).count()
    }

    /// Canonical zone-wise spelling: each base followed by its upper then
    /// lower modifiers, in layout order.
    pub fn canonical(&self) -> Vec<char> {
        let mut out = Vec::with_capacity(self.middle.len() + self.layout.len());
        for (i, &c) in self.middle.iter().enumerate() {
            out.push(c);
            for zone in [Zone::Upper, Zone::Lower] {
                out.extend(
                    self.layout
                        .iter()
                        .filter(|m| m.base_index == i && m.zone == zone)
                        .map(|m| m.label),
                );
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DecompTable {
    entries: BTreeMap<char, DecompEntry>,
}

impl DecompTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, c: char, entry: DecompEntry) {
        self.entries.insert(c, entry);
    }

    pub fn get(&self, c: char) -> Option<&DecompEntry> {
        self.entries.get(&c)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (char, &DecompEntry)> {
        self.entries.iter().map(|(&c, e)| (c, e))
    }

    /// Middle-zone characters reachable through the table, sorted.
    pub fn middle_chars(&self) -> Vec<char> {
        self.zone_labels(Zone::Middle)
    }

    pub fn zone_labels(&self, zone: Zone) -> Vec<char> {
        let mut out: Vec<char> = self
            .entries
            .values()
            .filter_map(|e| match zone {
                Zone::Middle => e.middle,
                Zone::Upper => e.upper,
                Zone::Lower => e.lower,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn decompose(&self, word: &str) -> Result<Decomposed> {
        if word.is_empty() {
            return Err(Error::EmptyWord);
        }
        let mut out = Decomposed::default();
        let mut pending: Vec<(Zone, char)> = Vec::new();
        for c in word.chars() {
            let entry = self.entries.get(&c).ok_or(Error::UnknownChar(c))?;
            if let Some(m) = entry.middle {
                out.middle.push(m);
                let base = out.middle.len() - 1;
                // modifiers seen before any base attach to the first one
                for (zone, label) in pending.drain(..) {
                    out.layout.push(ModifierSlot {
                        zone,
                        label,
                        base_index: base,
                    });
                }
            }
            for (zone, label) in [(Zone::Upper, entry.upper), (Zone::Lower, entry.lower)]
                .into_iter()
                .filter_map(|(z, l)| l.map(|l| (z, l)))
            {
                if out.middle.is_empty() {
                    pending.push((zone, label));
                } else {
                    out.layout.push(ModifierSlot {
                        zone,
                        label,
                        base_index: out.middle.len() - 1,
                    });
                }
            }
        }
        if out.middle.is_empty() {
            return Err(Error::EmptyWord);
        }
        Ok(out)
    }

    pub fn middle_form(&self, word: &str) -> Result<String> {
        Ok(self.decompose(word)?.middle.into_iter().collect())
    }
}
