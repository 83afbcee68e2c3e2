//! Command-line interface. Reports go to stdout (or `--out`), diagnostics
//! to stderr; see [`crate::error::exit`] for exit codes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};
use xlhwr_core::alphabet::{DecompTable, Zone};
use xlhwr_core::ghmm::{HmmSet, TrainConfig, DEFAULT_MIXTURES, DEFAULT_STATES};
use xlhwr_core::phog::{WindowGeometry, DEFAULT_WINDOW_SHIFT, DEFAULT_WINDOW_WIDTH};
use xlhwr_core::rbfsvm::{SvmParams, DEFAULT_C, DEFAULT_GAMMA, KKT_TOLERANCE};
use xlhwr_core::simscore::similarity_matrix;
use xlhwr_core::wordrec::{ModifierModels, DEFAULT_NBEST};
use xlhwr_core::wordspot::{average_precision, evaluate_retrieval, make_query, optimize_threshold, RankedList, RerankMode};
use xlhwr_core::xmap::LutSet;
use xlhwr_core::zoneseg::LowerTemplate;

use crate::bundle::ModelBundle;
use crate::config::SynthConfig;
use crate::dataset::{self, Sample};
use crate::error::{read_to_string, write_file, CliError, CliResult};
use crate::pipeline::{self, Prepared};
use crate::report;
use crate::text::{self, Manifest};

#[derive(Debug, Parser)]
#[command(name = "xlhwr", version, about = "Cross-script handwritten word recognition and spotting")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a source script, a derived target script and their corpora.
    Synth {
        config: PathBuf,
    },
    /// Train middle-zone HMMs or upper/lower modifier SVMs.
    Train(TrainArgs),
    /// Build target-to-source LUTs from labelled target samples.
    Lut(LutArgs),
    /// Recognize the words of a manifest against a lexicon.
    Recognize(RecognizeArgs),
    /// Score keywords on every image of a manifest.
    Spot(SpotArgs),
    /// Similarity of a target script to a source script.
    Simscore(SimArgs),
    /// Pairwise relative similarity of several scripts.
    Simmatrix(MatrixArgs),
    /// Train and evaluate over a grid of states and mixtures.
    Grid(GridArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ZoneArg {
    Middle,
    Upper,
    Lower,
}

impl From<ZoneArg> for Zone {
    fn from(z: ZoneArg) -> Zone {
        match z {
            ZoneArg::Middle => Zone::Middle,
            ZoneArg::Upper => Zone::Upper,
            ZoneArg::Lower => Zone::Lower,
        }
    }
}

#[derive(Debug, Args)]
pub struct HmmParams {
    #[arg(long, default_value_t = DEFAULT_STATES)]
    pub states: usize,
    #[arg(long, default_value_t = DEFAULT_MIXTURES)]
    pub mixtures: usize,
    #[arg(long, default_value_t = 10)]
    pub iterations: usize,
    /// Stop once an iteration gains less log-likelihood than this.
    #[arg(long, default_value_t = 1e-4)]
    pub min_improvement: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_WINDOW_WIDTH)]
    pub window: usize,
    #[arg(long, default_value_t = DEFAULT_WINDOW_SHIFT)]
    pub shift: usize,
}

impl HmmParams {
    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            states: self.states,
            mixtures: self.mixtures,
            iterations: self.iterations,
            seed: self.seed,
            min_improvement: self.min_improvement,
        }
    }

    fn geometry(&self) -> CliResult<WindowGeometry> {
        if self.window < 4 || self.shift == 0 || self.shift > self.window {
            return Err(CliError::Usage(format!("bad window {} / shift {}", self.window, self.shift)));
        }
        Ok(WindowGeometry {
            width: self.window,
            shift: self.shift,
        })
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum)]
    pub zone: ZoneArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Training log; defaults to the bundle path with `.log` appended.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub hmm: HmmParams,
    /// SVM soft-margin constant.
    #[arg(long, default_value_t = DEFAULT_C)]
    pub c: f64,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
}

#[derive(Debug, Args)]
pub struct LutArgs {
    /// Source model bundles (HMMs, optionally modifier SVMs).
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    /// Labelled target character samples.
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the tables as TSV.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RecognizeArgs {
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long, default_value_t = DEFAULT_NBEST)]
    pub topn: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RerankArg {
    None,
    Counts,
    Labels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ThresholdModeArg {
    Global,
    Local,
}

#[derive(Debug, Args)]
pub struct SpotArgs {
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Keyword list, one word per line.
    #[arg(long)]
    pub keywords: PathBuf,
    /// A fixed score threshold, or `auto` for the F1-optimal one.
    #[arg(long, default_value = "auto")]
    pub threshold: String,
    #[arg(long, value_enum, default_value_t = ThresholdModeArg::Global)]
    pub threshold_mode: ThresholdModeArg,
    #[arg(long, value_enum, default_value_t = RerankArg::Labels)]
    pub rerank: RerankArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    /// Labelled target character samples.
    #[arg(long)]
    pub samples: PathBuf,
    /// Divide by the target's self-similarity.
    #[arg(long)]
    pub relative: bool,
    /// The target's own HMM bundle, needed by `--relative`.
    #[arg(long)]
    pub self_model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MatrixArgs {
    /// `BUNDLE=SAMPLES`: a script's HMM bundle and its character samples.
    #[arg(long = "script", required = true)]
    pub scripts: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [6usize, 7, 8, 9])]
    pub states: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [16usize, 32, 64])]
    pub mixtures: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        // fails only if the pool already exists, as in repeated in-process runs
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Synth { config } => cmd_synth(&config),
        Command::Train(a) => cmd_train(&a),
        Command::Lut(a) => cmd_lut(&a),
        Command::Recognize(a) => cmd_recognize(&a),
        Command::Spot(a) => cmd_spot(&a),
        Command::Simscore(a) => cmd_simscore(&a),
        Command::Simmatrix(a) => cmd_simmatrix(&a),
        Command::Grid(a) => cmd_grid(&a),
    }
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn cmd_synth(config: &Path) -> CliResult<()> {
    let cfg = SynthConfig::load(config)?;
    let ds = dataset::generate(&cfg)?;
    dataset::write_dataset(&ds, &cfg.out_dir)?;
    eprintln!(
        "wrote {} and {} to {} ({} shared glyphs)",
        ds.source.script.id,
        ds.target.script.id,
        cfg.out_dir.display(),
        ds.mapping.len()
    );
    Ok(())
}

/// A loaded manifest with its decomposition table, segmentation templates
/// and images.
pub struct Corpus {
    pub manifest: Manifest,
    pub table: DecompTable,
    pub templates: Vec<LowerTemplate>,
    pub samples: Vec<Sample>,
}

impl Corpus {
    pub fn load(path: &Path) -> CliResult<Self> {
        let manifest = text::load_manifest(path)?;
        let table = manifest.decomp()?;
        let templates = match (manifest.header_path("templates"), manifest.glyphs()?) {
            (Some(dir), _) => pipeline::load_template_dir(&dir)?,
            (None, Some(script)) => pipeline::lower_templates(&script)?,
            (None, None) => Vec::new(),
        };
        let samples = dataset::load_samples(&manifest)?;
        Ok(Corpus {
            manifest,
            table,
            templates,
            samples,
        })
    }

    pub fn prepare(&self, geometry: WindowGeometry) -> CliResult<Vec<Prepared>> {
        pipeline::prepare(&self.samples, &self.templates, geometry)
    }

    pub fn names(&self) -> Vec<String> {
        self.manifest.rows.iter().map(|r| r.name.clone()).collect()
    }

    pub fn words(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.word.clone()).collect()
    }
}

fn log_path(a: &TrainArgs) -> PathBuf {
    a.log.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".log");
        PathBuf::from(p)
    })
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let geometry = a.hmm.geometry()?;
    let corpus = Corpus::load(&a.manifest)?;
    if corpus.samples.is_empty() {
        return Err(CliError::Data(format!("{}: manifest has no rows", a.manifest.display())));
    }
    let prepared = corpus.prepare(geometry)?;
    let mut bundle = ModelBundle {
        geometry,
        config_hash: digest(&read_to_string(&a.manifest)?),
        seed: a.hmm.seed,
        ..Default::default()
    };
    for (k, v) in [
        ("states", a.hmm.states.to_string()),
        ("mixtures", a.hmm.mixtures.to_string()),
        ("iterations", a.hmm.iterations.to_string()),
        ("min_improvement", a.hmm.min_improvement.to_string()),
        ("c", a.c.to_string()),
        ("gamma", a.gamma.to_string()),
        ("zone", Zone::from(a.zone).name().to_string()),
    ] {
        bundle.params.insert(k.to_string(), v);
    }
    let mut log = String::new();
    match a.zone {
        ZoneArg::Middle => {
            let pairs = pipeline::middle_pairs(&prepared, &corpus.samples, &corpus.table)?;
            let mut counts: BTreeMap<char, usize> = corpus.table.middle_chars().into_iter().map(|c| (c, 0)).collect();
            for (_, chars) in &pairs {
                for c in chars {
                    *counts.entry(*c).or_insert(0) += 1;
                }
            }
            let missing: Vec<String> = counts.iter().filter(|(_, &n)| n == 0).map(|(&c, _)| text::fmt_char(c)).collect();
            if !missing.is_empty() {
                return Err(CliError::Data(format!("no training occurrences for {}", missing.join(", "))));
            }
            log.push_str("iteration\tlog_likelihood\n");
            let out = pipeline::train_middle(&corpus.manifest.script, geometry, &pairs, &a.hmm.train_config(), |i, ll| {
                let _ = writeln!(log, "{i}\t{ll}");
                log::info!("iteration {i}: log-likelihood {ll}");
            })?;
            if out.skipped > 0 {
                log::warn!("{} training words were too short for their models", out.skipped);
            }
            bundle.hmm = Some(out.set);
        }
        ZoneArg::Upper | ZoneArg::Lower => {
            let zone = Zone::from(a.zone);
            let comps = pipeline::modifier_components(&prepared, &corpus.samples);
            let comps = comps.get(&zone).cloned().unwrap_or_default();
            let missing: Vec<String> = corpus
                .table
                .zone_labels(zone)
                .into_iter()
                .filter(|c| !comps.contains_key(c))
                .map(text::fmt_char)
                .collect();
            if !missing.is_empty() {
                return Err(CliError::Data(format!("no {} samples for {}", zone.name(), missing.join(", "))));
            }
            let data = pipeline::component_features(&comps)?;
            let params = SvmParams {
                c: a.c,
                gamma: a.gamma,
                tolerance: KKT_TOLERANCE,
                ..Default::default()
            };
            let svm = pipeline::train_svm(&data, &params)?;
            log.push_str("pos\tneg\tkkt_gap\titerations\tsupport\n");
            for m in svm.machines() {
                let (p, n) = (svm.labels()[m.pos], svm.labels()[m.neg]);
                let _ = writeln!(
                    log,
                    "{}\t{}\t{}\t{}\t{}",
                    text::fmt_char(p),
                    text::fmt_char(n),
                    m.gap,
                    m.iterations,
                    m.support.len()
                );
            }
            if zone == Zone::Upper {
                bundle.upper = Some(svm);
            } else {
                bundle.lower = Some(svm);
            }
        }
    }
    write_file(&log_path(a), log)?;
    bundle.save(&a.out)?;
    eprintln!("wrote {} ({})", a.out.display(), bundle.kind());
    Ok(())
}

fn load_models(paths: &[PathBuf]) -> CliResult<ModelBundle> {
    ModelBundle::merge(paths.iter().map(|p| ModelBundle::load(p)).collect::<CliResult<Vec<_>>>()?)
}

fn require_hmm(m: &ModelBundle) -> CliResult<&HmmSet> {
    m.hmm
        .as_ref()
        .ok_or_else(|| CliError::Bundle("no HMM set among the given bundles".into()))
}

fn modifier_models(m: &ModelBundle) -> ModifierModels {
    ModifierModels {
        upper: m.upper.clone(),
        lower: m.lower.clone(),
    }
}

pub fn cmd_lut(a: &LutArgs) -> CliResult<()> {
    let models = load_models(&a.models)?;
    let hmm = require_hmm(&models)?;
    let corpus = Corpus::load(&a.samples)?;
    let prepared = corpus.prepare(hmm.geometry)?;
    let iso = pipeline::isolated_middle_samples(&prepared, &corpus.samples, &corpus.table)?;
    let missing: Vec<char> = corpus.table.middle_chars().into_iter().filter(|c| !iso.contains_key(c)).collect();
    if !missing.is_empty() {
        return Err(xlhwr_core::Error::MissingCoverage(missing).into());
    }
    let mut luts = vec![pipeline::middle_lut(hmm, &iso)?];
    let comps = pipeline::modifier_components(&prepared, &corpus.samples);
    for zone in [Zone::Upper, Zone::Lower] {
        let labels = corpus.table.zone_labels(zone);
        let Some(svm) = models.svm(zone) else {
            if !labels.is_empty() {
                log::warn!("no {} modifier model; that zone stays unmapped", zone.name());
            }
            continue;
        };
        if labels.is_empty() {
            continue;
        }
        let z = comps.get(&zone).cloned().unwrap_or_default();
        let missing: Vec<char> = labels.into_iter().filter(|c| !z.contains_key(c)).collect();
        if !missing.is_empty() {
            return Err(xlhwr_core::Error::MissingCoverage(missing).into());
        }
        luts.push(pipeline::modifier_lut(svm, zone, &z)?);
    }
    if let Some(t) = &a.table {
        write_file(t, text::write_luts(&luts.iter().collect::<Vec<_>>()))?;
    }
    let bundle = ModelBundle {
        geometry: hmm.geometry,
        config_hash: digest(&read_to_string(&a.samples)?),
        luts,
        params: BTreeMap::from([
            ("source".to_string(), hmm.script_id.clone()),
            ("target".to_string(), corpus.manifest.script.clone()),
        ]),
        ..Default::default()
    };
    bundle.save(&a.out)?;
    eprintln!("wrote {} ({})", a.out.display(), bundle.kind());
    Ok(())
}

/// The LUTs for reading `corpus` with `models`: the bundled ones, or
/// identity tables when the corpus is in the models' own script.
fn resolve_luts(models: &ModelBundle, hmm: &HmmSet, corpus: &Corpus) -> CliResult<LutSet> {
    let luts = match models.lut_set() {
        Some(l) => l,
        None if corpus.manifest.script == hmm.script_id => pipeline::identity_luts(&corpus.table),
        None => {
            return Err(CliError::Coverage(format!(
                "no middle-zone LUT maps {} onto {}; build one with `xlhwr lut`",
                corpus.manifest.script, hmm.script_id
            )))
        }
    };
    let known = hmm.chars();
    let foreign: Vec<char> = luts.middle.iter().map(|(_, e)| e.source).filter(|s| !known.contains(s)).collect();
    if !foreign.is_empty() {
        return Err(CliError::Bundle(format!(
            "LUT maps onto {} which the HMM set lacks",
            text::char_list(&foreign)
        )));
    }
    for zone in [Zone::Upper, Zone::Lower] {
        if let (Some(lut), Some(svm)) = (luts.zone(zone), models.svm(zone)) {
            if lut.iter().any(|(_, e)| !svm.labels().contains(&e.source)) {
                return Err(CliError::Bundle(format!("{} LUT does not match the modifier model", zone.name())));
            }
        }
    }
    Ok(luts)
}

pub fn cmd_recognize(a: &RecognizeArgs) -> CliResult<()> {
    if a.topn == 0 {
        return Err(CliError::Usage("--topn must be at least 1".into()));
    }
    let models = load_models(&a.models)?;
    let hmm = require_hmm(&models)?;
    let corpus = Corpus::load(&a.manifest)?;
    let luts = resolve_luts(&models, hmm, &corpus)?;
    let lexicon = text::load_word_list(&a.lexicon)?;
    let rec = pipeline::recognizer(
        hmm.clone(),
        modifier_models(&models),
        luts,
        &lexicon,
        &corpus.table,
        corpus.templates.clone(),
        a.topn,
    )?;
    let prepared = corpus.prepare(hmm.geometry)?;
    let results = pipeline::recognize_all(&rec, &prepared)?;
    let words = corpus.words();
    emit(a.out.as_deref(), &report::recognition(&corpus.names(), &words, &results, a.topn))?;
    if !results.is_empty() {
        let m = pipeline::recognition_metrics(&results, &corpus.samples)?;
        eprintln!("{} images: top-1 {:.4}, top-5 {:.4}", results.len(), m.top1, m.top5);
    }
    Ok(())
}

pub fn cmd_spot(a: &SpotArgs) -> CliResult<()> {
    let fixed = match a.threshold.as_str() {
        "auto" => None,
        t => Some(
            t.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("--threshold: expected a number or `auto`, got {t:?}")))?,
        ),
    };
    let models = load_models(&a.models)?;
    let hmm = require_hmm(&models)?;
    let corpus = Corpus::load(&a.manifest)?;
    let luts = resolve_luts(&models, hmm, &corpus)?;
    let keywords = text::load_word_list(&a.keywords)?;
    if keywords.is_empty() {
        return Err(CliError::Data(format!("{}: no keywords", a.keywords.display())));
    }
    let queries = keywords
        .iter()
        .map(|k| make_query(k, &corpus.table, &luts.middle))
        .collect::<xlhwr_core::Result<Vec<_>>>()?;
    let prepared = corpus.prepare(hmm.geometry)?;
    let hits = pipeline::spot_all(hmm, &modifier_models(&models), &luts, &queries, &prepared)?;
    let words = corpus.words();
    let rerank = match a.rerank {
        RerankArg::None => None,
        RerankArg::Counts => Some(RerankMode::Counts),
        RerankArg::Labels => Some(RerankMode::Labels),
    };
    let scored = |k: usize| -> Vec<(f64, bool)> {
        hits[k].iter().map(|h| (h.score.score, words[h.image] == queries[k].word)).collect()
    };
    let global = fixed.unwrap_or_else(|| {
        let all: Vec<(f64, bool)> = (0..queries.len()).flat_map(scored).collect();
        optimize_threshold(&all).0
    });
    let names = corpus.names();
    let mut out = String::from(report::spot_header());
    let mut lists: Vec<RankedList> = Vec::with_capacity(queries.len());
    for (k, q) in queries.iter().enumerate() {
        let t = match (fixed, a.threshold_mode) {
            (None, ThresholdModeArg::Local) => optimize_threshold(&scored(k)).0,
            _ => global,
        };
        let ranked = pipeline::rank_hits(&hits[k], q, rerank);
        let list = pipeline::ranked_list(&ranked, q, &words, |h| h.score.score >= t);
        let rel: Vec<bool> = list.items.iter().map(|&(r, _)| r).collect();
        let rows: Vec<report::SpotRow> = ranked
            .iter()
            .zip(&list.items)
            .map(|(h, &(_, acc))| report::SpotRow {
                image: &names[h.image],
                score: h.score.score,
                accepted: acc,
            })
            .collect();
        out.push_str(&report::spot_section(&q.word, t, average_precision(&rel, list.total_relevant), &rows));
        lists.push(list);
    }
    emit(a.out.as_deref(), &out)?;
    let m = evaluate_retrieval(&lists)?;
    eprintln!(
        "{} keywords: precision {:.4}, recall {:.4}, MAP {:.4}{}",
        queries.len(),
        m.precision,
        m.recall,
        m.map,
        if m.flagged.is_empty() {
            String::new()
        } else {
            format!(" ({} keywords without relevant images)", m.flagged.len())
        }
    );
    Ok(())
}

pub fn cmd_simscore(a: &SimArgs) -> CliResult<()> {
    if a.relative && a.self_model.is_none() {
        return Err(CliError::Bundle("--relative needs the target's own models (--self-model)".into()));
    }
    let models = load_models(&a.models)?;
    let hmm = require_hmm(&models)?;
    let reference = match (&a.self_model, a.relative) {
        (Some(p), true) => {
            let b = ModelBundle::load(p)?;
            let r = require_hmm(&b)?.clone();
            if r.geometry != hmm.geometry {
                return Err(CliError::Bundle("self model uses a different feature geometry".into()));
            }
            Some(r)
        }
        _ => None,
    };
    let corpus = Corpus::load(&a.samples)?;
    let prepared = corpus.prepare(hmm.geometry)?;
    let iso = pipeline::isolated_middle_samples(&prepared, &corpus.samples, &corpus.table)?;
    let missing: Vec<char> = corpus.table.middle_chars().into_iter().filter(|c| !iso.contains_key(c)).collect();
    if !missing.is_empty() {
        return Err(xlhwr_core::Error::MissingCoverage(missing).into());
    }
    let weights = pipeline::sample_weights(&iso)?;
    let sim = pipeline::script_similarity(hmm, &iso, &weights, reference.as_ref())?;
    emit(a.out.as_deref(), &report::similarity(&sim))?;
    match sim.relative {
        Some(r) => eprintln!("S_sim {:.6}, S_rel {:.4}", sim.similarity, r),
        None => eprintln!("S_sim {:.6}", sim.similarity),
    }
    Ok(())
}

pub fn cmd_simmatrix(a: &MatrixArgs) -> CliResult<()> {
    if a.scripts.len() < 2 {
        return Err(CliError::Usage("need at least two --script entries".into()));
    }
    let mut sets = Vec::new();
    let mut samples = Vec::new();
    let mut weights = Vec::new();
    for spec in &a.scripts {
        let (b, s) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--script expects BUNDLE=SAMPLES, got {spec:?}")))?;
        let bundle = ModelBundle::load(Path::new(b))?;
        let hmm = require_hmm(&bundle)?.clone();
        let corpus = Corpus::load(Path::new(s))?;
        let prepared = corpus.prepare(hmm.geometry)?;
        let iso = pipeline::isolated_middle_samples(&prepared, &corpus.samples, &corpus.table)?;
        weights.push(pipeline::sample_weights(&iso)?);
        samples.push(iso);
        sets.push(hmm);
    }
    if sets.iter().any(|s| s.geometry != sets[0].geometry) {
        return Err(CliError::Bundle("scripts use different feature geometry".into()));
    }
    let rows: Vec<_> = (0..sets.len()).map(|i| (&sets[i], &samples[i], &weights[i])).collect();
    let m = similarity_matrix(&rows)?;
    let ids: Vec<String> = sets.iter().map(|s| s.script_id.clone()).collect();
    emit(a.out.as_deref(), &report::matrix(&ids, &m))
}

pub fn cmd_grid(a: &GridArgs) -> CliResult<()> {
    let geometry = WindowGeometry::default();
    let train = Corpus::load(&a.train)?;
    let test = Corpus::load(&a.test)?;
    if train.samples.is_empty() || test.samples.is_empty() {
        return Err(CliError::Data("grid needs non-empty train and test manifests".into()));
    }
    let lexicon = text::load_word_list(&a.lexicon)?;
    let tp = train.prepare(geometry)?;
    let pairs = pipeline::middle_pairs(&tp, &train.samples, &train.table)?;
    let xp = test.prepare(geometry)?;
    let mut rows = Vec::new();
    for &states in &a.states {
        for &mixtures in &a.mixtures {
            let cfg = TrainConfig {
                states,
                mixtures,
                iterations: a.iterations,
                seed: a.seed,
                ..Default::default()
            };
            let out = pipeline::train_middle(&train.manifest.script, geometry, &pairs, &cfg, |_, _| {})?;
            let ll = out.trace.last().copied().unwrap_or(f64::NEG_INFINITY);
            let hmm = out.set;
            let luts = pipeline::identity_luts(&test.table);
            let rec = pipeline::recognizer(
                hmm,
                ModifierModels::default(),
                luts,
                &lexicon,
                &test.table,
                test.templates.clone(),
                DEFAULT_NBEST,
            )?;
            let results = pipeline::recognize_all(&rec, &xp)?;
            let m = pipeline::recognition_metrics(&results, &test.samples)?;
            log::info!("states {states} mixtures {mixtures}: top-1 {:.4} top-5 {:.4}", m.top1, m.top5);
            rows.push(report::GridRow {
                states,
                mixtures,
                top1: m.top1,
                top5: m.top5,
                log_likelihood: ll,
            });
        }
    }
    emit(a.out.as_deref(), &report::grid(&rows))
}
