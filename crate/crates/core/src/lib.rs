//! Probabilistic 3D body shape and pose estimation from groups of proxy
//! inputs (silhouette + joint heatmaps).
//!
//! The crate covers a reverse-mode autodiff tape, an SMPL-style body model
//! with a procedural toy generator, cameras and a silhouette rasterizer,
//! diagonal Gaussians with product-of-Gaussians shape fusion, synthetic data
//! generation, a small distribution-predicting network and the evaluation
//! metrics.

// `!(x > 0.0)` is used on purpose so NaN is rejected along with non-positives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod body_model;
pub mod camera;
mod container;
pub mod distributions;
pub mod error;
pub mod metrics;
pub mod predictor;
pub mod rng;
pub mod rotation;
pub mod synth;

pub use autodiff::{grad_check, AdError, GradCheck, Real, Tape, Var};
pub use body_model::{
    generate_toy_model, load_model, model_sha256, save_model, BodyModel, GlobalRotation, PoseParams, ShapeParams, ToyModelSpec,
    VertexMesh,
};
pub use error::{Error, Result};
