//! Caption supervision, dataset scaffolding and balanced evaluation for
//! paired-edit image forgery detectors.
//!
//! The crate is organised around the life of a detector experiment:
//!
//! - [`pool`] builds the five-block caption space from a 20-entry macro pool
//!   and maps free-form outputs back onto it.
//! - [`geometry`] computes eye-region masks, the generation resize grid and
//!   the pair-integrity check for real/fake siblings.
//! - [`corpus`] filters, unpacks, splits and balances the datasets.
//! - [`verdict`] turns raw model text into binary verdicts.
//! - [`metrics`] scores parsed prediction logs (BA, macro-F1, MCC, dissection).
//! - [`selection`] replays balanced-accuracy checkpoint selection.
//! - [`diagnostics`] analyses the generated captions themselves.
//! - [`formats`] reads and writes the line-delimited record files.

pub mod corpus;
pub mod diagnostics;
pub mod formats;
pub mod geometry;
pub mod label;
pub mod metrics;
pub mod pool;
pub mod record;
pub mod selection;
pub mod text;
pub mod verdict;

pub use label::Label;
pub use pool::{Caption, MacroPool, TemplateId};
pub use record::PredictionRecord;
pub use verdict::{ParseMode, Verdict};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
