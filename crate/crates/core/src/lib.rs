//! Phase-based motion magnification for UWB radargrams.
//!
//! Range profiles are decomposed with a bank of complex Gabor wavelets; the
//! phase of each coefficient tracks sub-bin motion of nearby scatterers. Band
//! filtering that phase along slow time and scaling it amplifies (or damps)
//! motion at chosen frequencies. The same phase signals feed a small
//! vital-sign feature and regression toolkit.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dsp;
pub mod error;
pub mod features;
pub mod gabor;
pub mod magnify;
pub mod radargram;
pub mod regress;
pub mod render;
pub mod simulator;

pub use dsp::BandSpec;
pub use error::{Error, Result};
pub use features::{
    featurize, fft_peak_bpm, level_signals, zcr_hz, FeatureRow, FeatureSpec, FeatureTable, LabelSeries,
    LevelSignal,
};
pub use gabor::{decompose, default_bank, reconstruct, EdgeMode, GaborBank, GaborParams, Pyramid};
pub use magnify::{
    global_magnify, magnify, magnify_windowed, temporal_bandpass, unwrap_phase, MagnifyConfig,
};
pub use radargram::{
    load_radargram, save_radargram, windows, FileFormat, Radargram, RadargramMeta, RangeRoi, WindowSpec,
};
pub use regress::{
    fit_ols, fit_rf, kfold_mae, temporal_fft_baseline, Dataset, ForestParams, Model, ModelReport, ModelSpec,
};
pub use simulator::{estimate_displacement, simulate, SceneSpec, TargetSpec};
