//! Domain types for trajectory sets and feature/graph partitions.
//!
//! A sample is a set of trajectories, one per measurement channel; each
//! trajectory is a timestamped sequence of feature vectors. Construction
//! canonicalizes ordering (nodes by timestamp, trajectories by channel id) so
//! downstream floating-point sums run in a fixed order and permuted input
//! produces bit-identical results.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One timestamped measurement: a feature vector plus its collection time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryNode {
    pub timestamp: f64,
    pub features: Vec<f64>,
}

/// Signed elapsed time between two nodes of the same trajectory.
pub fn time_delta(w: &TrajectoryNode, j: &TrajectoryNode) -> f64 {
    w.timestamp - j.timestamp
}

/// One channel's timestamped node sequence, stored in non-decreasing
/// timestamp order (ties keep input order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    channel_id: String,
    nodes: Vec<TrajectoryNode>,
}

impl Trajectory {
    pub fn new(channel_id: impl Into<String>, mut nodes: Vec<TrajectoryNode>) -> Result<Self> {
        let channel_id = channel_id.into();
        if nodes.is_empty() {
            return Err(Error::InvalidData(format!(
                "trajectory '{channel_id}' has no nodes"
            )));
        }
        let dim = nodes[0].features.len();
        for (i, node) in nodes.iter().enumerate() {
            if !node.timestamp.is_finite() {
                return Err(Error::InvalidData(format!(
                    "trajectory '{channel_id}' node {i}: non-finite timestamp"
                )));
            }
            if node.features.len() != dim {
                return Err(Error::InvalidData(format!(
                    "trajectory '{channel_id}' node {i}: feature length {} != {dim}",
                    node.features.len()
                )));
            }
            if node.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "trajectory '{channel_id}' node {i}: non-finite feature"
                )));
            }
        }
        nodes.sort_by(|a, b| {
            a.timestamp
                .partial_cmp(&b.timestamp)
                .expect("finite timestamps")
        });
        Ok(Self { channel_id, nodes })
    }

    pub fn channel_id(&self) -> &str {
        &self.channel_id
    }

    pub fn nodes(&self) -> &[TrajectoryNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.nodes[0].features.len()
    }
}

/// A labeled sample: a set of trajectories with unique channel ids,
/// stored in lexicographic channel order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    set_id: String,
    label: u8,
    trajectories: Vec<Trajectory>,
}

impl TrajectorySet {
    pub fn new(
        set_id: impl Into<String>,
        label: u8,
        mut trajectories: Vec<Trajectory>,
    ) -> Result<Self> {
        let set_id = set_id.into();
        if label > 1 {
            return Err(Error::InvalidData(format!(
                "sample '{set_id}': label must be 0 or 1, got {label}"
            )));
        }
        if trajectories.is_empty() {
            return Err(Error::InvalidData(format!(
                "sample '{set_id}' has no trajectories"
            )));
        }
        let dim = trajectories[0].feature_dim();
        for t in &trajectories {
            if t.feature_dim() != dim {
                return Err(Error::InvalidData(format!(
                    "sample '{set_id}': channel '{}' has feature dim {} != {dim}",
                    t.channel_id(),
                    t.feature_dim()
                )));
            }
        }
        trajectories.sort_by(|a, b| a.channel_id.cmp(&b.channel_id));
        for pair in trajectories.windows(2) {
            if pair[0].channel_id == pair[1].channel_id {
                return Err(Error::InvalidData(format!(
                    "sample '{set_id}': duplicate channel '{}'",
                    pair[0].channel_id
                )));
            }
        }
        Ok(Self {
            set_id,
            label,
            trajectories,
        })
    }

    pub fn set_id(&self) -> &str {
        &self.set_id
    }

    pub fn label(&self) -> u8 {
        self.label
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn feature_dim(&self) -> usize {
        self.trajectories[0].feature_dim()
    }

    pub fn channel_ids(&self) -> impl Iterator<Item = &str> {
        self.trajectories.iter().map(Trajectory::channel_id)
    }
}

/// Disjoint feature subsets and disjoint graph (channel) subsets.
///
/// Feature subsets must exactly cover `0..d`. Graph subsets are defined over
/// channel ids so samples with missing channels still route consistently; a
/// subset listing more than one channel has multi-graph capacity and mixes
/// its members through a DeepSet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub feature_subsets: Vec<Vec<usize>>,
    pub graph_subsets: Vec<Vec<String>>,
}

impl PartitionSpec {
    /// All channels in their own singleton subset, features likewise.
    pub fn all_singletons(feature_dim: usize, channels: &[&str]) -> Self {
        Self {
            feature_subsets: (0..feature_dim).map(|i| vec![i]).collect(),
            graph_subsets: channels.iter().map(|c| vec![c.to_string()]).collect(),
        }
    }

    /// True when graph subset `i` can hold more than one channel.
    pub fn is_multi(&self, subset: usize) -> bool {
        self.graph_subsets[subset].len() > 1
    }

    /// Index of the graph subset owning `channel`, if any.
    pub fn subset_of_channel(&self, channel: &str) -> Option<usize> {
        self.graph_subsets
            .iter()
            .position(|s| s.iter().any(|c| c == channel))
    }
}

/// One problem found by [`validate_partition`], with a human-readable locus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PartitionViolation {
    FeatureOverlap { index: usize },
    FeatureGap { index: usize },
    FeatureOutOfRange { index: usize },
    ChannelOverlap { channel: String },
    ChannelGap { channel: String },
    UnknownChannel { channel: String },
}

impl std::fmt::Display for PartitionViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::FeatureOverlap { index } => {
                write!(f, "feature index {index} appears in more than one subset")
            }
            Self::FeatureGap { index } => {
                write!(f, "feature index {index} is not covered by any subset")
            }
            Self::FeatureOutOfRange { index } => {
                write!(f, "feature index {index} is out of range")
            }
            Self::ChannelOverlap { channel } => {
                write!(f, "channel '{channel}' appears in more than one subset")
            }
            Self::ChannelGap { channel } => {
                write!(
                    f,
                    "channel '{channel}' appears in data but no subset covers it"
                )
            }
            Self::UnknownChannel { channel } => {
                write!(
                    f,
                    "subset references channel '{channel}' absent from the data"
                )
            }
        }
    }
}

/// Check a partition against a feature dimension and the set of channel ids
/// seen in the data. Returns every violation rather than stopping at the
/// first.
pub fn validate_partition(
    spec: &PartitionSpec,
    feature_dim: usize,
    channels: &BTreeSet<String>,
) -> Vec<PartitionViolation> {
    let mut violations = Vec::new();

    let mut feature_count = vec![0usize; feature_dim];
    for subset in &spec.feature_subsets {
        for &idx in subset {
            if idx >= feature_dim {
                violations.push(PartitionViolation::FeatureOutOfRange { index: idx });
            } else {
                feature_count[idx] += 1;
            }
        }
    }
    for (idx, &count) in feature_count.iter().enumerate() {
        if count == 0 {
            violations.push(PartitionViolation::FeatureGap { index: idx });
        } else if count > 1 {
            violations.push(PartitionViolation::FeatureOverlap { index: idx });
        }
    }

    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut overlapped: BTreeSet<&str> = BTreeSet::new();
    for subset in &spec.graph_subsets {
        for channel in subset {
            if !seen.insert(channel) {
                overlapped.insert(channel);
            }
            if !channels.contains(channel) {
                violations.push(PartitionViolation::UnknownChannel {
                    channel: channel.clone(),
                });
            }
        }
    }
    for channel in overlapped {
        violations.push(PartitionViolation::ChannelOverlap {
            channel: channel.to_string(),
        });
    }
    for channel in channels {
        if !seen.contains(channel.as_str()) {
            violations.push(PartitionViolation::ChannelGap {
                channel: channel.clone(),
            });
        }
    }
    violations
}

/// Per-feature z-scoring statistics, computed from a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Feature indices whose standard deviation was floored at 1e-8
    /// (constant columns); callers may want to warn about these.
    pub floored: Vec<usize>,
}

pub const STD_FLOOR: f64 = 1e-8;

impl NormStats {
    /// Compute mean/std per feature index over every node of every sample.
    pub fn from_samples(samples: &[TrajectorySet]) -> Result<Self> {
        let dim = samples
            .first()
            .ok_or_else(|| {
                Error::InvalidData("cannot compute statistics of an empty split".into())
            })?
            .feature_dim();
        let mut sum = vec![0.0; dim];
        let mut sum_sq = vec![0.0; dim];
        let mut count = 0usize;
        for sample in samples {
            for traj in sample.trajectories() {
                for node in traj.nodes() {
                    for (i, &v) in node.features.iter().enumerate() {
                        sum[i] += v;
                        sum_sq[i] += v * v;
                    }
                    count += 1;
                }
            }
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let mut floored = Vec::new();
        let std: Vec<f64> = sum_sq
            .iter()
            .zip(&mean)
            .enumerate()
            .map(|(i, (sq, m))| {
                let var = (sq / n - m * m).max(0.0);
                let sd = var.sqrt();
                if sd < STD_FLOOR {
                    floored.push(i);
                    STD_FLOOR
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self { mean, std, floored })
    }

    /// Apply z-scoring to one feature vector in place.
    pub fn apply(&self, features: &mut [f64]) {
        for (i, v) in features.iter_mut().enumerate() {
            *v = (*v - self.mean[i]) / self.std[i];
        }
    }
}

/// A collection of samples with a consistent feature dimension and, once
/// normalized, the statistics that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<TrajectorySet>,
    pub feature_dim: usize,
    pub norm: Option<NormStats>,
}

impl Dataset {
    pub fn from_samples(samples: Vec<TrajectorySet>) -> Result<Self> {
        let feature_dim = samples
            .first()
            .ok_or_else(|| Error::InvalidData("dataset has no samples".into()))?
            .feature_dim();
        for s in &samples {
            if s.feature_dim() != feature_dim {
                return Err(Error::InvalidData(format!(
                    "sample '{}' has feature dim {} != {feature_dim}",
                    s.set_id(),
                    s.feature_dim()
                )));
            }
        }
        Ok(Self {
            samples,
            feature_dim,
            norm: None,
        })
    }

    /// Union of channel ids across all samples.
    pub fn channels(&self) -> BTreeSet<String> {
        self.samples
            .iter()
            .flat_map(|s| s.channel_ids().map(str::to_string))
            .collect()
    }

    /// Z-score features with the given statistics; timestamps are untouched.
    pub fn normalized(&self, stats: &NormStats) -> Result<Dataset> {
        if stats.mean.len() != self.feature_dim {
            return Err(Error::ShapeMismatch {
                what: "normalization statistics".into(),
                expected: self.feature_dim,
                actual: stats.mean.len(),
            });
        }
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let trajectories = s
                    .trajectories()
                    .iter()
                    .map(|t| {
                        let nodes = t
                            .nodes()
                            .iter()
                            .map(|n| {
                                let mut features = n.features.clone();
                                stats.apply(&mut features);
                                TrajectoryNode {
                                    timestamp: n.timestamp,
                                    features,
                                }
                            })
                            .collect();
                        Trajectory::new(t.channel_id(), nodes)
                    })
                    .collect::<Result<Vec<_>>>()?;
                TrajectorySet::new(s.set_id(), s.label(), trajectories)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            samples,
            feature_dim: self.feature_dim,
            norm: Some(stats.clone()),
        })
    }
}

/// Deterministic shuffled split into (train, val) by fraction.
pub fn split_train_val(
    samples: &[TrajectorySet],
    val_fraction: f64,
    seed: u64,
) -> (Vec<TrajectorySet>, Vec<TrajectorySet>) {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    crate::nn::SplitMix64::new(seed).shuffle(&mut order);
    let n_val = ((samples.len() as f64) * val_fraction).round() as usize;
    let n_val = n_val.min(samples.len());
    let val: Vec<_> = order[..n_val].iter().map(|&i| samples[i].clone()).collect();
    let train: Vec<_> = order[n_val..].iter().map(|&i| samples[i].clone()).collect();
    (train, val)
}
