//! Fringe projection profilometry toolkit.
//!
//! Synthesizes multi-frequency phase-shifted fringe stacks of simulated
//! scenes, recovers height maps through phase-shifting analysis, temporal
//! unwrapping and a calibrated rational height model, and exports
//! single-shot (fringe image, height map) datasets.
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common cases.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod fringe;
pub mod image;
pub mod linalg;
pub mod phase;
pub mod pipeline;
pub mod scalar;
pub mod simulator;

pub use calibration::{
    build_basis, fit, fit_with, height_from_phase, residual_stats, CalibrationFile, CalibrationModel,
    CalibrationSample, CoordNorm, FitOptions, ResidualStats,
};
pub use dataset::{export_dataset, load_dataset, read_mask_pgm, read_pfm, write_mask_pgm, write_pfm, Dataset, DatasetManifest, SplitSpec};
pub use error::{FppError, Result};
pub use evaluation::{compare_models, mre, rmse, EvalReport};
pub use fringe::{phase_shift_offsets, reference_pattern, FringeSpec, Orientation};
pub use image::{image_map_binary, wrap_to_principal, HeightMap, Mask, PhaseMap, ScalarImage};
pub use phase::{extract_wrapped_phase, modulation_mask, unwrap_temporal, ModulationMap, DEFAULT_MASK_THRESHOLD};
pub use pipeline::{calibrate_from_planes, reconstruct, Reconstruction};
pub use scalar::Real;
pub use simulator::{derive_seed, random_scene, render_stack, GroundTruthModel, HeightField, Primitive, SceneParams, SceneSpec};

pub type Image = ScalarImage<f64>;
pub type Image32 = ScalarImage<f32>;
pub type Phase = PhaseMap<f64>;
pub type Height = HeightMap<f64>;
pub type Height32 = HeightMap<f32>;
pub type Model = CalibrationModel<f64>;
pub type Model32 = CalibrationModel<f32>;
pub type Sample = CalibrationSample<f64>;
