//! Higher-order intensity correlations of two statistically independent
//! light sources and the CH74 Bell tests built on them.
//!
//! The crate is organized by layer:
//!
//! - [`analytic`]: closed-form correlation sets, normalizations and detection
//!   probabilities for single photon emitters and thermal sources.
//! - [`bell`]: CH74 statistics, canonical angle sets, visibility thresholds.
//! - [`fock`]: exact truncated two-mode Fock-space states, m-photon
//!   projections and the source-mode cross correlation.
//! - [`gaussian`]: permanents of coherence matrices as an independent check on
//!   every thermal formula.
//! - [`speckle`]: synthetic pseudothermal double-slit camera frames.
//! - [`correlator`]: frame-ensemble estimators, visibility fits and Bell
//!   statistics from frames.
//! - [`frames`]: frame stacks, pixel access and column caches.
//! - [`spkl`]: the binary frame file format.
//! - [`app`]: configuration records and the command drivers behind the
//!   `thermal-bell` binary.

pub mod analytic;
pub mod app;
pub mod bell;
pub mod correlator;
pub mod error;
pub mod fock;
pub mod frames;
pub mod gaussian;
pub mod speckle;
pub mod spkl;

pub use error::{Error, Result};
