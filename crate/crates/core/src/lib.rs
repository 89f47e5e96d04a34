//! Noisy pseudo-label correction for temporal action localization.
//!
//! The pipeline turns noisy, weakly-supervised action proposals into weighted
//! training labels:
//!
//! 1. [`cala`] augments each confident proposal with its same-class context.
//! 2. [`online`] repeatedly corrects ambiguous labels toward teacher
//!    predictions and compensates for labels the teacher finds but the set lacks.
//! 3. [`hpm`] folds the label weights into the detection loss.
//!
//! [`eval`] scores label sets and detections, and [`sim`] exercises the whole
//! loop on synthetic ground truth with controlled noise.

pub mod cala;
pub mod cli;
pub mod error;
pub mod eval;
pub mod hpm;
pub mod instance;
pub mod io;
pub mod kernels;
pub mod online;
pub mod params;
pub mod sim;

pub use error::{Error, Result};
pub use instance::{Instance, OnlineLabelState, WeightedInstance};
pub use params::{BetaMode, CorrectionParams, FusionMode, NmsScope};
