//! Contribution extraction: how much each node, graph, or graph subset adds
//! to the pre-link score.
//!
//! Because the score is a plain sum of subset representation entries,
//! contributions are exact decompositions, not approximations. Node and graph
//! contributions exist only for graphs in singleton subsets; graphs mixed
//! through a DeepSet are attributable only at subset granularity.

use serde::{Deserialize, Serialize};

use crate::data::TrajectorySet;
use crate::error::{Error, Result};
use crate::mixer::{predict_proba, GmanModel};

/// Contribution of a single measurement, in score space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeAttribution {
    pub index: usize,
    pub timestamp: f64,
    pub contribution: f64,
}

/// One singleton-subset graph with its per-node breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphAttribution {
    pub channel: String,
    pub subset: usize,
    pub total: f64,
    pub nodes: Vec<NodeAttribution>,
    /// Extension beyond the receiver-side decomposition above: credit each
    /// node as a *source*, i.e. its shape output times its total incoming
    /// distance mass. Sums to the same graph total.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_contributions: Option<Vec<f64>>,
}

/// One multi-graph subset, attributable only as a whole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetAttribution {
    pub subset: usize,
    pub channels: Vec<String>,
    pub present: Vec<String>,
    pub contribution: f64,
}

/// All contributions for one sample, with the additivity identity checked
/// against the raw score. The raw (pre-link) score is included because
/// contributions live in score space, not probability space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub set_id: String,
    pub raw_score: f64,
    pub probability: f64,
    pub graphs: Vec<GraphAttribution>,
    pub subsets: Vec<SubsetAttribution>,
    pub completeness_residual: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReportOptions {
    pub include_source_view: bool,
}

impl GmanModel {
    fn singleton_subset_of(&self, sample: &TrajectorySet, channel: &str) -> Result<usize> {
        let subset =
            self.partition
                .subset_of_channel(channel)
                .ok_or_else(|| Error::UnknownChannel {
                    channel: channel.to_string(),
                    set_id: sample.set_id().to_string(),
                })?;
        if self.partition.is_multi(subset) {
            return Err(Error::AttributionIneligible {
                channel: channel.to_string(),
                subset,
            });
        }
        Ok(subset)
    }

    /// Contribution of node `j` of a singleton-subset graph: the entry sum of
    /// its node representation.
    pub fn node_contribution(
        &self,
        sample: &TrajectorySet,
        channel: &str,
        j: usize,
    ) -> Result<f64> {
        let subset = self.singleton_subset_of(sample, channel)?;
        let traj = sample
            .trajectories()
            .iter()
            .find(|t| t.channel_id() == channel)
            .ok_or_else(|| {
                Error::InvalidData(format!(
                    "sample '{}' has no channel '{channel}'",
                    sample.set_id()
                ))
            })?;
        let h = self.params.subsets[subset]
            .encoder
            .node_repr(traj, j, &self.partition)?;
        Ok(h.iter().sum())
    }

    /// Contribution of a singleton-subset graph: the sum of its node
    /// contributions, equal to the entry sum of its graph representation.
    pub fn graph_contribution(&self, sample: &TrajectorySet, channel: &str) -> Result<f64> {
        let subset = self.singleton_subset_of(sample, channel)?;
        let traj = sample
            .trajectories()
            .iter()
            .find(|t| t.channel_id() == channel)
            .ok_or_else(|| {
                Error::InvalidData(format!(
                    "sample '{}' has no channel '{channel}'",
                    sample.set_id()
                ))
            })?;
        let h = self.params.subsets[subset]
            .encoder
            .graph_repr(traj, &self.partition)?;
        Ok(h.iter().sum())
    }

    /// Contribution of multi-graph subset `i`: the entry sum of its DeepSet
    /// output over the graphs present in the sample.
    pub fn set_contribution(&self, sample: &TrajectorySet, subset: usize) -> Result<f64> {
        if subset >= self.partition.graph_subsets.len() {
            return Err(Error::InvalidData(format!("no graph subset {subset}")));
        }
        if !self.partition.is_multi(subset) {
            return Err(Error::UseGraphContribution { subset });
        }
        self.validate_sample(sample)?;
        let graphs: Vec<_> = sample
            .trajectories()
            .iter()
            .filter(|t| self.partition.subset_of_channel(t.channel_id()) == Some(subset))
            .collect();
        let repr = self.subset_repr(&graphs, subset)?;
        Ok(repr.iter().sum())
    }

    /// Assemble every eligible contribution and check completeness against
    /// the raw score.
    pub fn build_report(
        &self,
        sample: &TrajectorySet,
        options: ReportOptions,
    ) -> Result<AttributionReport> {
        let trace = self.score_traced(sample)?;
        let mut graphs = Vec::new();
        let mut subsets = Vec::new();
        let mut reconstructed = 0.0;

        for (i, subset_trace) in trace.subsets.iter().enumerate() {
            if self.partition.is_multi(i) {
                let contribution: f64 = subset_trace.repr.iter().sum();
                reconstructed += contribution;
                subsets.push(SubsetAttribution {
                    subset: i,
                    channels: self.partition.graph_subsets[i].clone(),
                    present: subset_trace
                        .members
                        .iter()
                        .map(|&t| sample.trajectories()[t].channel_id().to_string())
                        .collect(),
                    contribution,
                });
            } else if let (Some(&t_idx), Some(enc_trace)) = (
                subset_trace.members.first(),
                subset_trace.encoder_traces.first(),
            ) {
                let traj = &sample.trajectories()[t_idx];
                let nodes: Vec<NodeAttribution> = enc_trace
                    .node_reprs()
                    .iter()
                    .enumerate()
                    .map(|(j, h)| NodeAttribution {
                        index: j,
                        timestamp: traj.nodes()[j].timestamp,
                        contribution: h.iter().sum(),
                    })
                    .collect();
                let total: f64 = subset_trace.repr.iter().sum();
                reconstructed += total;
                let source_contributions = options.include_source_view.then(|| {
                    (0..traj.len())
                        .map(|w| enc_trace.source_weight(w) * enc_trace.psi_entry_sum(w))
                        .collect()
                });
                graphs.push(GraphAttribution {
                    channel: traj.channel_id().to_string(),
                    subset: i,
                    total,
                    nodes,
                    source_contributions,
                });
            }
            // Empty singleton subsets contribute exactly zero and get no entry.
        }

        Ok(AttributionReport {
            set_id: sample.set_id().to_string(),
            raw_score: trace.score,
            probability: predict_proba(trace.score),
            graphs,
            subsets,
            completeness_residual: (trace.score - reconstructed).abs(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PartitionSpec, Trajectory, TrajectoryNode};
    use crate::extgnan::{ArchConfig, ExtGnanParams};
    use crate::mixer::{set_xor_gadget_model, GmanParams, SubsetParams};
    use crate::nn::{Activation, Matrix, MlpParams, MlpSpec};

    fn node(t: f64, x: &[f64]) -> TrajectoryNode {
        TrajectoryNode {
            timestamp: t,
            features: x.to_vec(),
        }
    }

    fn identity_singleton_model(dim: usize, channel: &str) -> GmanModel {
        let rho = MlpParams::from_layers(
            MlpSpec::new(1, vec![1], Activation::Identity, 0),
            vec![Matrix::from_rows(&[vec![0.0]])],
            vec![vec![1.0]],
        )
        .unwrap();
        let psi = (0..dim)
            .map(|_| {
                MlpParams::from_layers(
                    MlpSpec::new(1, vec![1], Activation::Identity, 0),
                    vec![Matrix::identity(1)],
                    vec![vec![0.0]],
                )
                .unwrap()
            })
            .collect();
        GmanModel {
            partition: PartitionSpec {
                feature_subsets: (0..dim).map(|i| vec![i]).collect(),
                graph_subsets: vec![vec![channel.to_string()]],
            },
            params: GmanParams {
                subsets: vec![SubsetParams {
                    encoder: ExtGnanParams { rho, psi },
                    deepset: None,
                }],
            },
        }
    }

    #[test]
    fn single_node_contribution_is_entry_sum() {
        let model = identity_singleton_model(2, "c");
        let sample = TrajectorySet::new(
            "s",
            0,
            vec![Trajectory::new("c", vec![node(0.0, &[2.0, 3.0])]).unwrap()],
        )
        .unwrap();
        let c = model.node_contribution(&sample, "c", 0).unwrap();
        assert!((c - 5.0).abs() < 1e-12);
    }

    #[test]
    fn node_contributions_sum_to_graph_contribution() {
        let arch = ArchConfig {
            hidden_widths: vec![5],
            activation: Activation::Tanh,
        };
        let partition = PartitionSpec {
            feature_subsets: vec![vec![0, 1]],
            graph_subsets: vec![vec!["c".to_string()]],
        };
        let model = GmanModel::init(partition, &arch, 9).unwrap();
        let sample = TrajectorySet::new(
            "s",
            0,
            vec![
                Trajectory::new("c", vec![node(0.0, &[0.4, -0.2]), node(1.5, &[-0.7, 0.9])])
                    .unwrap(),
            ],
        )
        .unwrap();
        let total = model.graph_contribution(&sample, "c").unwrap();
        let sum: f64 = (0..2)
            .map(|j| model.node_contribution(&sample, "c", j).unwrap())
            .sum();
        assert!((total - sum).abs() / total.abs().max(1.0) < 1e-12);
        // and the graph contribution equals the score for this one-graph model
        assert!((total - model.score(&sample).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn multi_subset_rejects_node_attribution() {
        let model = set_xor_gadget_model();
        let sample = TrajectorySet::new(
            "s",
            0,
            vec![
                Trajectory::new("g1", vec![node(0.0, &[1.0])]).unwrap(),
                Trajectory::new("g2", vec![node(0.0, &[0.0])]).unwrap(),
            ],
        )
        .unwrap();
        let err = model.node_contribution(&sample, "g1", 0).unwrap_err();
        assert!(
            matches!(err, Error::AttributionIneligible { subset: 0, .. }),
            "{err}"
        );
        let err = model.graph_contribution(&sample, "g2").unwrap_err();
        assert!(matches!(err, Error::AttributionIneligible { .. }));
    }

    #[test]
    fn set_contribution_matches_gadget_truth_table() {
        let model = set_xor_gadget_model();
        let sample = TrajectorySet::new(
            "s",
            1,
            vec![
                Trajectory::new("g1", vec![node(0.0, &[0.0])]).unwrap(),
                Trajectory::new("g2", vec![node(0.0, &[1.0])]).unwrap(),
            ],
        )
        .unwrap();
        let c = model.set_contribution(&sample, 0).unwrap();
        assert!((c - 1.0).abs() < 1e-6);
    }

    #[test]
    fn set_contribution_on_singleton_directs_to_graph() {
        let model = identity_singleton_model(1, "c");
        let sample = TrajectorySet::new(
            "s",
            0,
            vec![Trajectory::new("c", vec![node(0.0, &[1.0])]).unwrap()],
        )
        .unwrap();
        assert!(matches!(
            model.set_contribution(&sample, 0),
            Err(Error::UseGraphContribution { subset: 0 })
        ));
    }

    #[test]
    fn report_shape_for_all_singleton_partition() {
        let model = identity_singleton_model(1, "c");
        let sample = TrajectorySet::new(
            "s",
            0,
            vec![Trajectory::new("c", vec![node(0.0, &[1.0]), node(1.0, &[2.0])]).unwrap()],
        )
        .unwrap();
        let report = model
            .build_report(&sample, ReportOptions::default())
            .unwrap();
        assert_eq!(report.graphs.len(), 1);
        assert_eq!(report.graphs[0].nodes.len(), 2);
        assert!(report.subsets.is_empty());
        assert!(report.completeness_residual <= 1e-9);
    }

    #[test]
    fn report_shape_for_all_in_one_multi_subset() {
        let model = set_xor_gadget_model();
        let sample = TrajectorySet::new(
            "s",
            0,
            vec![
                Trajectory::new("g1", vec![node(0.0, &[1.0])]).unwrap(),
                Trajectory::new("g2", vec![node(0.0, &[1.0])]).unwrap(),
            ],
        )
        .unwrap();
        let report = model
            .build_report(&sample, ReportOptions::default())
            .unwrap();
        assert!(report.graphs.is_empty());
        assert_eq!(report.subsets.len(), 1);
        assert_eq!(report.subsets[0].present, vec!["g1", "g2"]);
        assert!(report.completeness_residual <= 1e-9);
    }

    #[test]
    fn report_completeness_on_random_model() {
        let arch = ArchConfig {
            hidden_widths: vec![6, 4],
            activation: Activation::Relu,
        };
        let partition = PartitionSpec {
            feature_subsets: vec![vec![0], vec![1]],
            graph_subsets: vec![
                vec!["solo".to_string()],
                vec!["a".to_string(), "b".to_string()],
            ],
        };
        let model = GmanModel::init(partition, &arch, 1234).unwrap();
        let sample = TrajectorySet::new(
            "s",
            1,
            vec![
                Trajectory::new("solo", vec![node(0.0, &[0.3, 0.1])]).unwrap(),
                Trajectory::new("a", vec![node(0.5, &[-0.2, 0.4]), node(1.0, &[0.6, -0.5])])
                    .unwrap(),
            ],
        )
        .unwrap();
        let report = model
            .build_report(&sample, ReportOptions::default())
            .unwrap();
        assert!(report.completeness_residual <= 1e-9);
        // channel "b" is absent: the multi subset must report only "a" present
        assert_eq!(report.subsets[0].present, vec!["a"]);
    }

    #[test]
    fn source_view_sums_to_graph_total_and_vanishes_for_zeroed_nodes() {
        // Bias-free relu shape nets map zero features to zero output, so a
        // zeroed node's source credit must be exactly zero.
        let arch = ArchConfig {
            hidden_widths: vec![4],
            activation: Activation::Relu,
        };
        let partition = PartitionSpec {
            feature_subsets: vec![vec![0]],
            graph_subsets: vec![vec!["c".to_string()]],
        };
        let mut model = GmanModel::init(partition, &arch, 3).unwrap();
        for psi in &mut model.params.subsets[0].encoder.psi {
            for b in &mut psi.biases {
                b.fill(0.0);
            }
        }
        let sample = TrajectorySet::new(
            "s",
            0,
            vec![Trajectory::new("c", vec![node(0.0, &[0.0]), node(1.0, &[0.8])]).unwrap()],
        )
        .unwrap();
        let report = model
            .build_report(
                &sample,
                ReportOptions {
                    include_source_view: true,
                },
            )
            .unwrap();
        let sources = report.graphs[0].source_contributions.as_ref().unwrap();
        assert_eq!(sources[0], 0.0);
        let total: f64 = sources.iter().sum();
        let scale = total.abs().max(report.graphs[0].total.abs()).max(1.0);
        assert!((total - report.graphs[0].total).abs() / scale < 1e-12);
    }
}
