//! Minimal differentiable MLP engine: deterministic init, forward/backward
//! with an explicit tape, a finite-difference gradient oracle, and an
//! adaptive-moment optimizer.

pub mod activation;
pub mod matrix;
pub mod mlp;
pub mod optim;
pub mod rng;

pub use activation::Activation;
pub use matrix::Matrix;
pub use mlp::{
    finite_diff_grad, max_rel_error, rel_error, ForwardTape, GradBundle, MlpParams, MlpSpec,
    ScalarHead, FD_STEP,
};
pub use optim::{AdamConfig, OptimState};
pub use rng::SplitMix64;
