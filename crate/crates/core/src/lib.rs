//! Staged resting-state EEG analysis: band selection from STFT power
//! spectra, STFT and DWT epoch features, and PLSR / RBF-SVM classification
//! of post-2D versus post-3D viewing sessions.
//!
//! ```text
//! Recording (trials x 20 ch x samples, uV)
//!   |-- preprocess::preprocess_for_band_selection   average, notch, 1-55 Hz
//!   |     `-- spectral::band_power_matrix            per stage, 20 x 5 %
//!   |           `-- spectral::select_dominant_bands  mean diff > 2 on >= 3 ch
//!   `-- features::assemble_dataset                 Rest, 4 s / 0.5 s epochs
//!         `-- classify::channel_combination_search   10-fold CV, ranked prefixes
//! ```
//!
//! The [`synth`] module generates sessions with known band-power structure
//! and is what the end-to-end tests run against.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod error;
pub mod features;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod spectral;
pub mod synth;
pub mod wavelet;

pub use error::{Error, Result};
pub use model::{
    stage_slice, standard_montage, Band, BandDef, ComparisonStage, Condition, Montage,
    ParadigmSpec, Recording, Stage, StageSegment, Trial,
};
