//! Synthetic dataset generators: the two four-point exclusive-or gadget
//! tasks and a sparse-trajectory task whose label depends on a cross-channel
//! rule, so additive models cannot solve it.

use crate::data::{Dataset, PartitionSpec, Trajectory, TrajectoryNode, TrajectorySet};
use crate::error::Result;
use crate::nn::SplitMix64;

/// Human-readable provenance written into generated dataset headers.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GeneratorMeta {
    pub generator: String,
    pub seed: u64,
    pub label_rule: String,
}

fn node(t: f64, x: &[f64]) -> TrajectoryNode {
    TrajectoryNode {
        timestamp: t,
        features: x.to_vec(),
    }
}

/// The four-point feature-level exclusive-or task: one single-node graph per
/// sample carrying binary features (x1, x2), labeled x1 XOR x2.
pub fn feature_xor() -> Dataset {
    let samples = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
        .iter()
        .enumerate()
        .map(|(i, &(x1, x2))| {
            let label = u8::from(x1 != x2);
            TrajectorySet::new(
                format!("fx{i}"),
                label,
                vec![Trajectory::new("x", vec![node(0.0, &[x1, x2])]).expect("valid node")],
            )
            .expect("valid sample")
        })
        .collect();
    Dataset::from_samples(samples).expect("non-empty")
}

/// Both features in one subset: the partition that can represent feature XOR.
pub fn feature_xor_grouped_partition() -> PartitionSpec {
    PartitionSpec {
        feature_subsets: vec![vec![0, 1]],
        graph_subsets: vec![vec!["x".to_string()]],
    }
}

/// Each feature alone: the additive partition that cannot represent it.
pub fn feature_xor_singleton_partition() -> PartitionSpec {
    PartitionSpec {
        feature_subsets: vec![vec![0], vec![1]],
        graph_subsets: vec![vec!["x".to_string()]],
    }
}

pub fn feature_xor_meta() -> GeneratorMeta {
    GeneratorMeta {
        generator: "feature_xor".to_string(),
        seed: 0,
        label_rule: "label = x1 XOR x2 over the single node's two binary features".to_string(),
    }
}

/// The four-point set-level exclusive-or task: two single-node single-feature
/// graphs per sample, labeled x1 XOR x2.
pub fn set_xor() -> Dataset {
    let samples = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
        .iter()
        .enumerate()
        .map(|(i, &(x1, x2))| {
            let label = u8::from(x1 != x2);
            TrajectorySet::new(
                format!("sx{i}"),
                label,
                vec![
                    Trajectory::new("g1", vec![node(0.0, &[x1])]).expect("valid node"),
                    Trajectory::new("g2", vec![node(0.0, &[x2])]).expect("valid node"),
                ],
            )
            .expect("valid sample")
        })
        .collect();
    Dataset::from_samples(samples).expect("non-empty")
}

/// Both graphs in one subset: the partition that can represent set XOR.
pub fn set_xor_grouped_partition() -> PartitionSpec {
    PartitionSpec {
        feature_subsets: vec![vec![0]],
        graph_subsets: vec![vec!["g1".to_string(), "g2".to_string()]],
    }
}

/// Each graph alone: additive mixing, provably too weak for set XOR.
pub fn set_xor_singleton_partition() -> PartitionSpec {
    PartitionSpec {
        feature_subsets: vec![vec![0]],
        graph_subsets: vec![vec!["g1".to_string()], vec!["g2".to_string()]],
    }
}

pub fn set_xor_meta() -> GeneratorMeta {
    GeneratorMeta {
        generator: "set_xor".to_string(),
        seed: 0,
        label_rule: "label = x1 XOR x2 over the two graphs' binary features".to_string(),
    }
}

/// Options for [`sparse_traj`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SparseTrajConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// Label-irrelevant channels z0, z1, ... beyond the two signal channels.
    pub extra_channels: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Timestamps are uniform in [0, t_max).
    pub t_max: f64,
    /// Half-width of the uniform measurement noise around the channel level.
    pub noise: f64,
    /// Probability that an extra channel is missing from a sample.
    pub missing_rate: f64,
}

impl Default for SparseTrajConfig {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            seed: 0,
            extra_channels: 1,
            min_nodes: 2,
            max_nodes: 6,
            t_max: 48.0,
            noise: 0.3,
            missing_rate: 0.3,
        }
    }
}

pub const SPARSE_TRAJ_RULE: &str = "label = 1 iff mean(a values) * mean(b values) > 0, \
computed over the emitted node values; channels z* carry no label signal";

/// Sparse irregular trajectories over channels `a`, `b`, and optional noise
/// channels. The label is 1 exactly when the empirical means of channels `a`
/// and `b` have the same sign, a cross-channel rule that forces non-linear
/// mixing of the two graphs.
pub fn sparse_traj(config: &SparseTrajConfig) -> Result<Dataset> {
    let mut rng = SplitMix64::new(config.seed);
    let mut samples = Vec::with_capacity(config.n_samples);
    for i in 0..config.n_samples {
        let mut trajectories = Vec::new();
        let mut means = [0.0f64; 2];
        for (c, name) in ["a", "b"].iter().enumerate() {
            // Channel level: sign split evenly, magnitude bounded away from 0
            // so node noise rarely blurs the sign of the empirical mean.
            let sign = if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
            let level = sign * rng.uniform(0.2, 1.0);
            let (traj, mean) = gen_channel(name, level, config, &mut rng)?;
            means[c] = mean;
            trajectories.push(traj);
        }
        for z in 0..config.extra_channels {
            if rng.next_f64() < config.missing_rate {
                continue;
            }
            let level = rng.uniform(-1.0, 1.0);
            let (traj, _) = gen_channel(&format!("z{z}"), level, config, &mut rng)?;
            trajectories.push(traj);
        }
        let label = u8::from(means[0] * means[1] > 0.0);
        samples.push(TrajectorySet::new(
            format!("st{i:05}"),
            label,
            trajectories,
        )?);
    }
    Dataset::from_samples(samples)
}

fn gen_channel(
    name: &str,
    level: f64,
    config: &SparseTrajConfig,
    rng: &mut SplitMix64,
) -> Result<(Trajectory, f64)> {
    let span = (config.max_nodes - config.min_nodes + 1) as u64;
    let n = config.min_nodes + rng.next_below(span) as usize;
    let mut nodes = Vec::with_capacity(n);
    let mut sum = 0.0;
    for _ in 0..n {
        let t = rng.uniform(0.0, config.t_max);
        let v = level + rng.uniform(-config.noise, config.noise);
        sum += v;
        nodes.push(node(t, &[v]));
    }
    Ok((Trajectory::new(name, nodes)?, sum / n as f64))
}

/// Signal channels grouped, each extra channel its own singleton.
pub fn sparse_traj_grouped_partition(extra_channels: usize) -> PartitionSpec {
    let mut graph_subsets = vec![vec!["a".to_string(), "b".to_string()]];
    for z in 0..extra_channels {
        graph_subsets.push(vec![format!("z{z}")]);
    }
    PartitionSpec {
        feature_subsets: vec![vec![0]],
        graph_subsets,
    }
}

/// Every channel its own singleton subset.
pub fn sparse_traj_singleton_partition(extra_channels: usize) -> PartitionSpec {
    let mut graph_subsets = vec![vec!["a".to_string()], vec!["b".to_string()]];
    for z in 0..extra_channels {
        graph_subsets.push(vec![format!("z{z}")]);
    }
    PartitionSpec {
        feature_subsets: vec![vec![0]],
        graph_subsets,
    }
}

pub fn sparse_traj_meta(config: &SparseTrajConfig) -> GeneratorMeta {
    GeneratorMeta {
        generator: "sparse_traj".to_string(),
        seed: config.seed,
        label_rule: SPARSE_TRAJ_RULE.to_string(),
    }
}
