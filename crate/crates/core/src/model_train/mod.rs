//! The trainable feature extractor and universe classifier, the training
//! loop (Adam, pair sampling, detach schedule), per-pair fine-tuning, and
//! classifier-only inference.
//!
//! The feature extractor is a per-vertex MLP over SHOT descriptors
//! concatenated with the leading sign-fixed spectral coordinates; the
//! classifier is a per-vertex MLP from feature width to `d` universe logits.
//! Both are Siamese: the same weights serve every shape.

mod adam;
mod checkpoint;
mod nets;
mod pipeline;
mod train;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use nets::{Mlp, Nets};
pub use pipeline::{backward_pair, build_pair_graph, forward_pair, PairGraph, PairOutput, ShapeData};
pub use train::{
    candidate_pairs_for, fine_tune, infer_assignment, infer_match, resume_with, scheduled_pair_for,
    train, train_with, universe_size, IterRecord, TrainOutcome,
};

use crate::error::{Error, Result};
use crate::losses::{LossWeights, MatchMode};
use crate::scalar::Real;

/// Feature MLP hidden widths; input width is SHOT (352) plus the spectral
/// coordinate count, output width feeds the classifier.
pub const FEATURE_WIDTHS: [usize; 3] = [256, 256, 128];
/// Hidden width of the classifier head (0 = linear head).
pub const CLASSIFIER_HIDDEN: usize = 0;
/// SHOT descriptor width.
pub const SHOT_DIMS: usize = crate::descriptors::shot::SHOT_DIMS;

/// Full training configuration. Paper-default constructors per mode; every
/// run is a pure function of this structure plus the shape collection.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig<T> {
    pub mode: MatchMode,
    pub k: usize,
    pub spectral_coords: usize,
    pub shot_radius_frac: T,
    /// None: largest vertex count in the collection (complete mode) or the
    /// complete shape's vertex count (partial mode).
    pub universe_size: Option<usize>,
    pub sinkhorn_tau: T,
    pub sinkhorn_iters: usize,
    pub solver_lambda: T,
    pub resolvent_gamma: T,
    pub weights: LossWeights<T>,
    pub learning_rate: T,
    pub total_iters: usize,
    pub detach_iters: usize,
    pub checkpoint_every: usize,
    pub batch_pairs: usize,
    pub seed: u64,
}

impl<T: Real> TrainingConfig<T> {
    /// Complete-matching defaults: lambda = 0 in the solver, gamma = 0.5,
    /// Sinkhorn (tau = 0.2, 10 iterations), Adam lr = 1e-3, 20000 iterations
    /// with the first 4000 detaching the classifier loss's functional-map
    /// path, batch of one pair.
    pub fn complete_defaults(seed: u64) -> Self {
        Self {
            mode: MatchMode::Complete,
            k: 30,
            spectral_coords: 16,
            shot_radius_frac: T::of(0.10),
            universe_size: None,
            sinkhorn_tau: T::of(0.2),
            sinkhorn_iters: 10,
            solver_lambda: T::zero(),
            resolvent_gamma: T::of(0.5),
            weights: LossWeights::complete(),
            learning_rate: T::of(1e-3),
            total_iters: 20000,
            detach_iters: 4000,
            checkpoint_every: 1000,
            batch_pairs: 1,
            seed,
        }
    }

    /// Partial-matching defaults: lambda = 100, Laplacian loss off,
    /// classifier weight 1.0, smoothed cross entropy with factor 0.1.
    pub fn partial_defaults(seed: u64) -> Self {
        Self {
            mode: MatchMode::Partial,
            solver_lambda: T::of(100.0),
            weights: LossWeights::partial(),
            ..Self::complete_defaults(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > T::zero()) {
            return Err(Error::Dimension("learning rate must be positive".into()));
        }
        if self.detach_iters > self.total_iters {
            return Err(Error::Dimension(format!(
                "detach_iters {} exceeds total_iters {}",
                self.detach_iters, self.total_iters
            )));
        }
        if self.spectral_coords > self.k {
            return Err(Error::Dimension(format!(
                "spectral_coords {} exceeds basis size k={}",
                self.spectral_coords, self.k
            )));
        }
        if self.batch_pairs == 0 {
            return Err(Error::Dimension("batch_pairs must be at least 1".into()));
        }
        if self.sinkhorn_iters == 0 || !(self.sinkhorn_tau > T::zero()) {
            return Err(Error::Dimension("invalid sinkhorn parameters".into()));
        }
        if self.solver_lambda < T::zero() {
            return Err(Error::Dimension("solver lambda must be nonnegative".into()));
        }
        self.weights.validate()
    }

    /// Network input width.
    pub fn input_dim(&self) -> usize {
        SHOT_DIMS + self.spectral_coords
    }
}

#[cfg(test)]
mod tests;
