use std::path::Path;

use proptest::prelude::*;
use xlhwr::{pgm, text};
use xlhwr_core::raster::GrayImage;

fn gray() -> impl Strategy<Value = GrayImage> {
    (1usize..20, 1usize..20).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<u8>(), w * h).prop_map(move |d| GrayImage::new(w, h, d).unwrap())
    })
}

proptest! {
    #[test]
    fn pgm_round_trips_both_encodings(img in gray()) {
        prop_assert_eq!(pgm::decode(&pgm::encode_p5(&img)).unwrap(), img.clone());
        prop_assert_eq!(pgm::decode(&pgm::encode_p2(&img)).unwrap(), img);
    }

    #[test]
    fn char_format_round_trips(c in any::<char>()) {
        prop_assert_eq!(text::parse_char(&text::fmt_char(c)), Some(c));
    }

    #[test]
    fn word_lists_round_trip(words in proptest::collection::vec("[a-zक-ह]{1,8}", 0..20)) {
        let back = text::parse_word_list(&text::write_word_list(&words));
        prop_assert_eq!(back, words);
    }

    #[test]
    fn manifests_round_trip(rows in proptest::collection::vec(("[a-z]{1,6}", "[a-z]{1,6}", proptest::option::of("[a-z]{1,6}")), 1..10)) {
        let rows: Vec<(String, String, Option<String>)> = rows
            .into_iter()
            .map(|(i, w, s)| (format!("{i}.pgm"), w, s.map(|s| format!("{s}.gt"))))
            .collect();
        let dir = Path::new("/data");
        let m = text::parse_manifest(&text::write_manifest("x", &[("decomp", "d.txt")], &rows), &dir.join("m.tsv")).unwrap();
        prop_assert_eq!(m.script.as_str(), "x");
        prop_assert_eq!(m.rows.len(), rows.len());
        for (r, (img, word, side)) in m.rows.iter().zip(&rows) {
            prop_assert_eq!(&r.image, &dir.join(img));
            prop_assert_eq!(&r.transcription, word);
            prop_assert_eq!(r.sidecar.clone(), side.as_ref().map(|s| dir.join(s)));
        }
    }
}
