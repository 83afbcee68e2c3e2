//! Synthetic source/target corpora, in memory and on disk.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use xlhwr_core::alphabet::Zone;
use xlhwr_core::raster::GrayImage;
use xlhwr_core::synthscript::{
    derive_script_pools, random_lexicon, random_script_in_slot, random_word, render_word, GroundTruth, RenderStyle,
    SyntheticScript,
};

use crate::config::SynthConfig;
use crate::error::{write_file, CliError, CliResult};
use crate::text::{self, fmt_char, Manifest};
use crate::pgm;

/// Modifier probabilities for training words, matching lexicon words.
pub const P_UPPER: f64 = 0.3;
pub const P_LOWER: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub word: String,
    pub image: GrayImage,
    pub truth: Option<GroundTruth>,
}

/// Everything generated for one script.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptData {
    pub script: SyntheticScript,
    pub lexicon: Vec<String>,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    /// Isolated characters: single bases, and a base with one modifier.
    pub chars: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub source: ScriptData,
    pub target: ScriptData,
    /// `(target, source)` pairs of copied glyphs.
    pub mapping: Vec<(char, char)>,
}

fn mix(seed: u64, tag: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ tag.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Renders `words` in order; image `i` draws its style and noise from
/// `seed` and `i` alone, so output does not depend on thread count.
pub fn render_samples(script: &SyntheticScript, words: &[String], style: &RenderStyle, seed: u64) -> CliResult<Vec<Sample>> {
    words
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let s = mix(seed, i as u64 + 1);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let st = style.sample(&mut rng);
            let (image, truth) = render_word(script, w, &st, s)?;
            Ok(Sample {
                word: w.clone(),
                image,
                truth: Some(truth),
            })
        })
        .collect()
}

/// Training words: random 3 to 5 base words.
pub fn training_words(script: &SyntheticScript, n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let k = rng.random_range(3..=5);
            random_word(script, k, P_UPPER, P_LOWER, &mut rng)
        })
        .collect()
}

/// Test words drawn uniformly from the lexicon.
pub fn test_words(lexicon: &[String], n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| lexicon[rng.random_range(0..lexicon.len())].clone()).collect()
}

/// `per_char` words for every character: each base alone, and each
/// modifier on a random base.
pub fn char_words(script: &SyntheticScript, per_char: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for g in &script.middle {
        out.extend(std::iter::repeat_n(g.id.to_string(), per_char));
    }
    for zone in [Zone::Upper, Zone::Lower] {
        for g in script.glyphs(zone) {
            for _ in 0..per_char {
                let base = script.middle[rng.random_range(0..script.middle.len())].id;
                out.push([base, g.id].iter().collect());
            }
        }
    }
    out
}

pub fn script_data(script: SyntheticScript, cfg: &SynthConfig, tag: u64) -> CliResult<ScriptData> {
    let seed = mix(cfg.seed, tag);
    let lexicon = random_lexicon(&script, cfg.lexicon_size, mix(seed, 1));
    if lexicon.len() < cfg.lexicon_size {
        return Err(CliError::Data(format!(
            "only {} distinct words available for lexicon_size {}",
            lexicon.len(),
            cfg.lexicon_size
        )));
    }
    let train = render_samples(&script, &training_words(&script, cfg.n_train, mix(seed, 2)), &cfg.style, mix(seed, 3))?;
    let test = render_samples(&script, &test_words(&lexicon, cfg.n_test, mix(seed, 4)), &cfg.style, mix(seed, 5))?;
    let chars = render_samples(&script, &char_words(&script, cfg.char_samples, mix(seed, 6)), &cfg.style, mix(seed, 7))?;
    Ok(ScriptData {
        script,
        lexicon,
        train,
        test,
        chars,
    })
}

pub fn generate(cfg: &SynthConfig) -> CliResult<SynthDataset> {
    let source = random_script_in_slot(cfg.n_middle, cfg.n_upper, cfg.n_lower, cfg.seed, 0)?;
    let derived = derive_script_pools(&source, cfg.overlap, cfg.overlap, cfg.seed.wrapping_add(1))?;
    Ok(SynthDataset {
        source: script_data(source, cfg, 200)?,
        target: script_data(derived.script, cfg, 300)?,
        mapping: derived.mapping,
    })
}

fn write_split(dir: &Path, name: &str, script_id: &str, samples: &[Sample]) -> CliResult<()> {
    let mut rows = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let img = format!("img/{name}_{i:05}.pgm");
        pgm::save(&dir.join(&img), &s.image)?;
        let side = match &s.truth {
            Some(t) => {
                let p = format!("img/{name}_{i:05}.gt");
                write_file(&dir.join(&p), text::write_sidecar(t))?;
                Some(p)
            }
            None => None,
        };
        rows.push((img, s.word.clone(), side));
    }
    let headers = [("glyphs", "../script.txt"), ("decomp", "../decomp.txt")];
    let manifest = text::write_manifest(script_id, &headers, &rows);
    write_file(&dir.join(format!("{name}.tsv")), manifest)
}

/// Writes one script's files under `dir`: `script.txt`, `decomp.txt`,
/// `lexicon.txt` and `data/{train,test,chars}.tsv` with images.
pub fn write_script_data(data: &ScriptData, dir: &Path) -> CliResult<()> {
    write_file(&dir.join("script.txt"), text::write_script(&data.script))?;
    write_file(&dir.join("decomp.txt"), text::write_decomp(&data.script.decomposition()))?;
    write_file(&dir.join("lexicon.txt"), text::write_word_list(&data.lexicon))?;
    let d = dir.join("data");
    write_split(&d, "train", &data.script.id, &data.train)?;
    write_split(&d, "test", &data.script.id, &data.test)?;
    write_split(&d, "chars", &data.script.id, &data.chars)
}

pub fn write_dataset(ds: &SynthDataset, dir: &Path) -> CliResult<()> {
    write_script_data(&ds.source, &dir.join("source"))?;
    write_script_data(&ds.target, &dir.join("target"))?;
    let mut m = String::from("# target\tsource\n");
    for (t, s) in &ds.mapping {
        let _ = writeln!(m, "{}\t{}", fmt_char(*t), fmt_char(*s));
    }
    write_file(&dir.join("mapping.tsv"), m)
}

/// Loads the images and any ground-truth sidecars of a manifest.
pub fn load_samples(manifest: &Manifest) -> CliResult<Vec<Sample>> {
    manifest
        .rows
        .par_iter()
        .map(|r| {
            Ok(Sample {
                word: r.transcription.clone(),
                image: pgm::load(&r.image)?,
                truth: r.sidecar.as_deref().map(text::load_sidecar).transpose()?,
            })
        })
        .collect()
}

/// Paths of the files `write_dataset` creates for one script.
pub fn script_paths(dir: &Path, which: &str) -> BTreeMap<&'static str, PathBuf> {
    let d = dir.join(which);
    BTreeMap::from([
        ("script", d.join("script.txt")),
        ("decomp", d.join("decomp.txt")),
        ("lexicon", d.join("lexicon.txt")),
        ("train", d.join("data/train.tsv")),
        ("test", d.join("data/test.tsv")),
        ("chars", d.join("data/chars.tsv")),
    ])
}
