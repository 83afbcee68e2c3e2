//! TSV reports written to stdout or `--out`.

use std::fmt::Write as _;

use xlhwr_core::wordrec::RecognitionResult;

use crate::pipeline::Similarity;
use crate::text::fmt_char;

/// `image<TAB>gold<TAB>rank1..rankN`; missing ranks are left empty.
pub fn recognition(names: &[String], gold: &[String], results: &[RecognitionResult], topn: usize) -> String {
    let mut o = String::from("image\tgold");
    for r in 1..=topn {
        let _ = write!(o, "\trank{r}");
    }
    o.push('\n');
    for ((name, g), res) in names.iter().zip(gold).zip(results) {
        let _ = write!(o, "{name}\t{g}");
        for r in 0..topn {
            o.push('\t');
            if let Some(c) = res.candidates.get(r) {
                o.push_str(&c.word);
            }
        }
        o.push('\n');
    }
    o
}

/// One row of a keyword section.
pub struct SpotRow<'a> {
    pub image: &'a str,
    pub score: f64,
    pub accepted: bool,
}

pub fn spot_header() -> &'static str {
    "keyword\timage\tscore\taccepted\n"
}

/// A keyword section: a `# keyword` comment followed by its ranked rows.
pub fn spot_section(keyword: &str, threshold: f64, ap: Option<f64>, rows: &[SpotRow]) -> String {
    let ap = ap.map_or("-".to_string(), |a| format!("{a:.6}"));
    let mut o = format!("# keyword {keyword} threshold {threshold} ap {ap}\n");
    for r in rows {
        let _ = writeln!(o, "{keyword}\t{}\t{}\t{}", r.image, r.score, u8::from(r.accepted));
    }
    o
}

/// Per-character records `char<TAB>K<TAB>H<TAB>H_N<TAB>S<TAB>W`, then the
/// script-level values as comments.
pub fn similarity(sim: &Similarity) -> String {
    let mut o = String::from("char\tK\tH\tH_N\tS\tW\n");
    for (r, w) in sim.records.iter().zip(&sim.weights) {
        let _ = writeln!(
            o,
            "{}\t{}\t{}\t{}\t{}\t{}",
            fmt_char(r.target),
            r.k,
            r.entropy,
            r.normalized,
            r.similarity,
            w
        );
    }
    let _ = writeln!(o, "# M {}", sim.records.len());
    let _ = writeln!(o, "# S_sim {}", sim.similarity);
    if let (Some(r), Some(rel)) = (sim.reference, sim.relative) {
        let _ = writeln!(o, "# S_ref {r}");
        let _ = writeln!(o, "# S_rel {rel}");
    }
    o
}

/// Rows are targets, columns sources, values to two decimals.
pub fn matrix(ids: &[String], m: &[Vec<f64>]) -> String {
    let mut o = String::from("target\\source");
    for id in ids {
        let _ = write!(o, "\t{id}");
    }
    o.push('\n');
    for (id, row) in ids.iter().zip(m) {
        o.push_str(id);
        for v in row {
            let _ = write!(o, "\t{v:.2}");
        }
        o.push('\n');
    }
    o
}

pub struct GridRow {
    pub states: usize,
    pub mixtures: usize,
    pub top1: f64,
    pub top5: f64,
    pub log_likelihood: f64,
}

pub fn grid(rows: &[GridRow]) -> String {
    let mut o = String::from("states\tmixtures\ttop1\ttop5\tlog_likelihood\n");
    for r in rows {
        let _ = writeln!(o, "{}\t{}\t{:.4}\t{:.4}\t{}", r.states, r.mixtures, r.top1, r.top5, r.log_likelihood);
    }
    o
}
