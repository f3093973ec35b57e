//! Cycle-consistent multi-shape matching of triangle meshes.
//!
//! Shapes are matched to a virtual *universe* by a per-vertex classifier, so
//! every pairwise correspondence is a composition of shape-to-universe maps
//! and cycle consistency across a collection holds by construction. Training
//! is unsupervised: bidirectional functional maps computed from learned
//! features regularize both the features and the classifier. At inference the
//! classifier predicts matchings directly, without solving for functional
//! maps.
//!
//! The crate is organized along the pipeline:
//!
//! - [`mesh`] — triangle meshes, OFF/PLY I/O, graph geodesics
//! - [`spectral`] — cotangent Laplace–Beltrami operator and truncated eigenbasis
//! - [`descriptors`] — SHOT, HKS, WKS per-vertex descriptors
//! - [`fmap`] — regularized functional-map solver and point-map conversions
//! - [`assignment`] — Sinkhorn normalization, hardening, composition, cycle checks
//! - [`losses`] — structural and classifier training losses
//! - [`autodiff`] — the reverse-mode tape the training path runs on
//! - [`model_train`] — feature/classifier networks, Adam, training, fine-tuning, inference
//! - [`eval`] — geodesic-error/PCK metrics, synthetic benchmark, ablations
//!
//! All numerics are generic over the scalar type through [`Real`]; the
//! aliases below pin the two supported precisions.

pub mod assignment;
pub mod autodiff;
pub mod container;
pub mod descriptors;
pub mod error;
pub mod eval;
pub mod fmap;
pub mod linalg;
pub mod losses;
pub mod mesh;
pub mod model_train;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Mesh32 = mesh::TriangleMesh<f32>;
pub type Mesh64 = mesh::TriangleMesh<f64>;
pub type SpectralBasis32 = spectral::SpectralBasis<f32>;
pub type SpectralBasis64 = spectral::SpectralBasis<f64>;
pub type FeatureField32 = descriptors::FeatureField<f32>;
pub type FeatureField64 = descriptors::FeatureField<f64>;
pub type FunctionalMap32 = fmap::FunctionalMap<f32>;
pub type FunctionalMap64 = fmap::FunctionalMap<f64>;
pub type SoftAssignment32 = assignment::SoftAssignment<f32>;
pub type SoftAssignment64 = assignment::SoftAssignment<f64>;
