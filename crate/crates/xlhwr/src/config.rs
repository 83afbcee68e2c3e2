//! `key = value` configuration for dataset synthesis.

use std::path::{Path, PathBuf};

use xlhwr_core::synthscript::RenderStyle;

use crate::error::{read_to_string, CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_middle: usize,
    pub n_upper: usize,
    pub n_lower: usize,
    /// Share of glyphs the target copies from the source, in [0, 1].
    pub overlap: f64,
    pub seed: u64,
    pub lexicon_size: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Isolated renders per character for LUT and similarity samples.
    pub char_samples: usize,
    pub style: RenderStyle,
    pub out_dir: PathBuf,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_middle: 20,
            n_upper: 4,
            n_lower: 4,
            overlap: 0.5,
            seed: 1,
            lexicon_size: 50,
            n_train: 500,
            n_test: 100,
            char_samples: 10,
            style: RenderStyle::default(),
            out_dir: PathBuf::from("synth"),
        }
    }
}

impl SynthConfig {
    /// Parses `text`; a relative `out_dir` is resolved against `base`.
    pub fn parse(text: &str, path: &Path, base: &Path) -> CliResult<Self> {
        let mut cfg = SynthConfig::default();
        let mut out_dir = None;
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| CliError::Config {
                path: path.to_path_buf(),
                line: n,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            let int = |v: &str| v.parse::<usize>().map_err(|_| err(format!("{key}: not a non-negative integer: {v:?}")));
            let real = |v: &str| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| err(format!("{key}: not a number: {v:?}")))
            };
            match key {
                "n_middle" => cfg.n_middle = int(value)?,
                "n_upper" => cfg.n_upper = int(value)?,
                "n_lower" => cfg.n_lower = int(value)?,
                "overlap" => {
                    let r = real(value)?;
                    if !(0.0..=1.0).contains(&r) {
                        return Err(err(format!("overlap {r} outside [0, 1]")));
                    }
                    cfg.overlap = r;
                }
                "seed" => cfg.seed = value.parse().map_err(|_| err(format!("seed: bad value {value:?}")))?,
                "lexicon_size" => cfg.lexicon_size = int(value)?,
                "n_train" => cfg.n_train = int(value)?,
                "n_test" => cfg.n_test = int(value)?,
                "char_samples" => cfg.char_samples = int(value)?,
                "style.thickness" => cfg.style.thickness = real(value)?,
                "style.slant_deg" => cfg.style.slant_deg = real(value)?,
                "style.jitter" => cfg.style.jitter = real(value)?,
                "style.scale_noise" => cfg.style.scale_noise = real(value)?,
                "style.pepper" => cfg.style.pepper = real(value)?,
                "out_dir" => out_dir = Some(PathBuf::from(value)),
                other => return Err(err(format!("unknown key {other:?}"))),
            }
            if key.starts_with("style.") {
                cfg.style.validate().map_err(|e| err(e.to_string()))?;
            }
        }
        let whole = |msg: String| CliError::Config {
            path: path.to_path_buf(),
            line: 0,
            msg,
        };
        if cfg.n_middle < 2 {
            return Err(whole("n_middle must be at least 2".into()));
        }
        if cfg.lexicon_size == 0 || cfg.char_samples == 0 {
            return Err(whole("lexicon_size and char_samples must be positive".into()));
        }
        cfg.out_dir = base.join(out_dir.unwrap_or(cfg.out_dir));
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&read_to_string(path)?, path, base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> CliResult<SynthConfig> {
        SynthConfig::parse(text, Path::new("c.cfg"), Path::new("/w"))
    }

    #[test]
    fn keys_and_defaults() {
        let c = parse("# demo\nn_middle = 12\noverlap=0.25\nstyle.jitter = 0.5\nout_dir = out\n").unwrap();
        assert_eq!(c.n_middle, 12);
        assert_eq!(c.overlap, 0.25);
        assert_eq!(c.style.jitter, 0.5);
        assert_eq!(c.n_upper, 4);
        assert_eq!(c.out_dir, Path::new("/w/out"));
    }

    #[test]
    fn errors_name_the_line() {
        for (text, line) in [
            ("seed = 1\noverlap = 1.5\n", 2),
            ("\n\nbogus = 3\n", 3),
            ("n_test = -4\n", 1),
            ("n_train 5\n", 1),
            ("style.jitter = 9\n", 1),
        ] {
            match parse(text) {
                Err(CliError::Config { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }
}
