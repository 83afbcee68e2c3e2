//! Cross-script handwritten word recognition and word spotting.
//!
//! Character models trained on a *source* script are used to read and
//! retrieve words written in a *target* script. The pipeline splits a word
//! image into upper, middle and lower zones, models the cursive middle zone
//! with GMM-HMMs over PHOG sliding-window features, classifies isolated
//! modifiers with an RBF SVM, and bridges the two alphabets with a
//! majority-vote look-up table. An entropy-based score measures how well one
//! script's models transfer to another.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature; all file formats and I/O live in the companion `xlhwr` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod alphabet;
pub mod error;
pub mod ghmm;
pub mod math;
pub mod phog;
pub mod raster;
pub mod rbfsvm;
pub mod simscore;
pub mod synthscript;
pub mod wordrec;
pub mod wordspot;
pub mod xmap;
pub mod zoneseg;

pub use error::{Error, Result};
