//! The guide's chapters, one module each, so `cargo test` runs their snippets.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/records.md")]
pub mod records {}
#[doc = include_str!("../../../book/src/scaling.md")]
pub mod scaling {}
#[doc = include_str!("../../../book/src/local_exponents.md")]
pub mod local_exponents {}
#[doc = include_str!("../../../book/src/overlap.md")]
pub mod overlap {}
#[doc = include_str!("../../../book/src/fairness.md")]
pub mod fairness {}
#[doc = include_str!("../../../book/src/calibration.md")]
pub mod calibration {}
#[doc = include_str!("../../../book/src/spectral.md")]
pub mod spectral {}
#[doc = include_str!("../../../book/src/synth.md")]
pub mod synth {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
