//! Graph mixing additive networks over sets of sparse timestamped
//! trajectories.
//!
//! Each sample is a set of irregularly sampled channels. Every channel is
//! encoded by a distance-weighted additive trajectory encoder; channels are
//! grouped by a user-supplied partition, singleton groups stay linear (and
//! fully attributable down to individual measurements) while larger groups mix
//! non-linearly through a DeepSet. Subset representations are summed and
//! collapsed to a scalar score, which keeps the score an exact sum of
//! per-part contributions.
//!
//! Modules:
//! - [`nn`]: the differentiable MLP engine (deterministic init, tape-based
//!   backward, finite-difference oracle, adaptive-moment optimizer).
//! - [`data`]: trajectories, samples, partitions, normalization.
//! - [`extgnan`]: the per-trajectory encoder.
//! - [`mixer`]: subset mixing and the scalar score.
//! - [`interpret`]: node/graph/set contribution extraction.
//! - [`training`]: loss, end-to-end gradients, the epoch loop, metrics,
//!   grid sweeps.
//! - [`io`]: dataset / checkpoint / report file formats.
//! - [`synth`]: synthetic dataset generators.

pub mod data;
pub mod error;
pub mod extgnan;
pub mod interpret;
pub mod io;
pub mod mixer;
pub mod nn;
pub mod synth;
pub mod training;

pub use data::{
    split_train_val, time_delta, validate_partition, Dataset, NormStats, PartitionSpec,
    PartitionViolation, Trajectory, TrajectoryNode, TrajectorySet,
};
pub use error::{Error, Result};
pub use extgnan::{xor_gadget_params, xor_gadget_partition, ArchConfig, ExtGnanParams};
pub use mixer::{predict_proba, set_xor_gadget_model, GmanModel, GmanParams};
pub use nn::{Activation, GradBundle, MlpParams, MlpSpec, OptimState};
