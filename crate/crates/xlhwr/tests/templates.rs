use std::collections::BTreeSet;

use xlhwr::error::CliError;
use xlhwr::text::fmt_char;
use xlhwr::{pgm, pipeline};
use xlhwr_core::raster::GrayImage;
use xlhwr_core::synthscript::random_script_in_slot;

#[test]
fn template_dir_round_trips_rendered_templates() {
    let script = random_script_in_slot(6, 2, 3, 9, 0).unwrap();
    let rendered = pipeline::lower_templates(&script).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut seen = BTreeSet::new();
    for t in &rendered {
        if seen.insert(t.label) {
            let p = dir.path().join(format!("{}.pgm", fmt_char(t.label)));
            pgm::save(&p, &GrayImage::from_binary(&t.shape)).unwrap();
        }
    }
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();

    let loaded = pipeline::load_template_dir(dir.path()).unwrap();
    assert_eq!(loaded.len(), 3);
    for t in &loaded {
        let first = rendered.iter().find(|r| r.label == t.label).unwrap();
        assert_eq!(t.shape, first.shape, "label {}", t.label);
    }
}

#[test]
fn template_stem_must_be_one_label() {
    let dir = tempfile::tempdir().unwrap();
    let img = GrayImage::filled(4, 4, 0);
    pgm::save(&dir.path().join("ab.pgm"), &img).unwrap();
    assert!(matches!(pipeline::load_template_dir(dir.path()), Err(CliError::Data(_))));
}

#[test]
fn missing_template_dir_is_io() {
    let dir = tempfile::tempdir().unwrap();
    let r = pipeline::load_template_dir(&dir.path().join("nope"));
    assert!(matches!(r, Err(CliError::Io { .. })));
}
