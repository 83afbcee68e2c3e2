use proptest::prelude::*;
use xlhwr_core::phog::{phog, window_features, PHOG_BINS, PHOG_DIM, PHOG_LEVELS};
use xlhwr_core::raster::{BinaryImage, GrayImage};

const NORM_TOL: f64 = 1e-9;

fn norms_are_binary(v: &[f64]) -> bool {
    let mut start = 0;
    for level in 0..=PHOG_LEVELS {
        let len = (1 << (2 * level)) * PHOG_BINS;
        let s: f64 = v[start..start + len].iter().sum();
        if !(s.abs() < NORM_TOL || (s - 1.0).abs() < NORM_TOL) {
            return false;
        }
        start += len;
    }
    start == v.len()
}

proptest! {
    #[test]
    fn gray_descriptor_shape(w in 1usize..20, h in 1usize..20, px in prop::collection::vec(any::<u8>(), 400)) {
        let img = GrayImage::new(w, h, px[..w * h].to_vec()).unwrap();
        let v = phog(&img, PHOG_LEVELS, PHOG_BINS).unwrap();
        prop_assert_eq!(v.len(), PHOG_DIM);
        prop_assert!(v.as_slice().iter().all(|&x| x >= 0.0));
        prop_assert!(norms_are_binary(v.as_slice()));
    }

    #[test]
    fn window_frames_shape(w in 1usize..60, h in 1usize..30, bits in prop::collection::vec(any::<bool>(), 1800)) {
        let strip = BinaryImage::from_vec(w, h, bits[..w * h].to_vec()).unwrap();
        let seq = window_features(&strip, 8, 3).unwrap();
        prop_assert_eq!(seq.len(), (w.max(8) - 8) / 3 + 1);
        for f in &seq.frames {
            prop_assert_eq!(f.len(), PHOG_DIM);
            prop_assert!(norms_are_binary(f.as_slice()));
        }
    }
}

#[test]
fn horizontal_step_on_4x4() {
    // rows 0,1 dark, rows 2,3 light: gy = 255 at rows 1 and 2, gx = 0,
    // so all mass lands in the bin holding a right angle.
    let img = GrayImage::new(4, 4, [[0u8; 4], [0; 4], [255; 4], [255; 4]].concat()).unwrap();
    let v = phog(&img, PHOG_LEVELS, PHOG_BINS).unwrap();
    let v = v.as_slice();
    let mut want = vec![0.0; PHOG_DIM];
    want[4] = 1.0;
    for cell in 0..4 {
        want[8 + cell * 8 + 4] = 0.25;
    }
    // level 2: 4x4 cells of one pixel; rows 1 and 2 carry gradient
    for y in 1..3 {
        for x in 0..4 {
            want[40 + (y * 4 + x) * 8 + 4] = 0.125;
        }
    }
    assert_eq!(v, &want[..]);
}
