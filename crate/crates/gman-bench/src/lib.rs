//! Shared fixtures for the benchmark targets.

use gman_core::extgnan::ArchConfig;
use gman_core::mixer::GmanModel;
use gman_core::nn::Activation;
use gman_core::synth::{self, SparseTrajConfig};
use gman_core::TrajectorySet;

/// A grouped-partition model plus a batch of sparse samples, sized like the
/// acceptance workload.
pub fn sparse_fixture(n_samples: usize) -> (GmanModel, Vec<TrajectorySet>) {
    let config = SparseTrajConfig {
        n_samples,
        seed: 99,
        ..Default::default()
    };
    let data = synth::sparse_traj(&config).expect("generator runs");
    let arch = ArchConfig {
        hidden_widths: vec![16, 16],
        activation: Activation::Relu,
    };
    let model = GmanModel::init(
        synth::sparse_traj_grouped_partition(config.extra_channels),
        &arch,
        7,
    )
    .expect("valid init");
    (model, data.samples)
}
