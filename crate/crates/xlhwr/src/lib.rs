//! File formats, dataset synthesis and batch pipelines behind the `xlhwr`
//! command.

pub mod bundle;
pub mod config;
pub mod error;
pub mod pgm;
pub mod text;
pub mod dataset;
pub mod pipeline;
pub mod cli;
pub mod report;
