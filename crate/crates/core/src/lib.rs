//! Scaling-law, error-overlap, fairness, calibration and spectral analyses over
//! evaluation records of image classifiers trained at several model sizes.
//!
//! The entry points are [`record::load_corpus`] for reading a corpus and
//! [`report::run_report`] for running every analysis at once; each analysis is
//! also usable on its own through its module.
//!
//! ```
//! use scalelens::spectral::{predict_alpha, NAIVE_GAMMA};
//!
//! let alpha = predict_alpha(1.45, NAIVE_GAMMA).unwrap();
//! assert!((alpha - 0.225).abs() < 1e-12);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod error;
pub mod fairness;
pub mod matrix_io;
pub mod overlap;
pub mod record;
pub mod report;
pub mod scaling;
pub mod spectral;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use record::{Corpus, DatasetManifest, RunRecord};
