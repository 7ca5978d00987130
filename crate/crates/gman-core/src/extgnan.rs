//! Trajectory encoder: distance-weighted, feature-subset-wise additive node
//! representations, summed into a graph representation.
//!
//! For a trajectory with node set V, the block of node j's representation
//! belonging to feature subset F_l is
//!
//! ```text
//! [h_j]_{F_l} = sum_{w in V} rho(t_w - t_j) * psi_l([x_w]_{F_l})
//! ```
//!
//! with a learned scalar distance function `rho` shared across subsets and one
//! shape network `psi_l` per feature subset. Blocks are concatenated in
//! partition order; the graph representation is the sum of node
//! representations. The sum runs over every node pair including w == j, and
//! `rho` receives the raw signed time delta.

use serde::{Deserialize, Serialize};

use crate::data::{time_delta, PartitionSpec, Trajectory};
use crate::error::{Error, Result};
use crate::nn::{Activation, GradBundle, Matrix, MlpParams, MlpSpec, SplitMix64};

/// Hidden architecture shared by every network the model instantiates:
/// `hidden_widths` relu/tanh layers followed by an affine output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            hidden_widths: vec![32, 32, 32],
            activation: Activation::Relu,
        }
    }
}

impl ArchConfig {
    pub fn mlp_spec(&self, input_dim: usize, output_dim: usize, seed: u64) -> MlpSpec {
        let mut widths = self.hidden_widths.clone();
        widths.push(output_dim);
        MlpSpec::new(input_dim, widths, self.activation, seed)
            .with_output_activation(Activation::Identity)
    }
}

/// Parameters of one encoder instance: a scalar distance network plus one
/// shape network per feature subset, `psi[l]` mapping `R^{|F_l|} -> R^{|F_l|}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtGnanParams {
    pub rho: MlpParams,
    pub psi: Vec<MlpParams>,
}

/// Gradients mirroring [`ExtGnanParams`].
#[derive(Debug, Clone)]
pub struct ExtGnanGrads {
    pub rho: GradBundle,
    pub psi: Vec<GradBundle>,
}

impl ExtGnanGrads {
    pub fn zeros_like(params: &ExtGnanParams) -> Self {
        Self {
            rho: GradBundle::zeros_like(&params.rho),
            psi: params.psi.iter().map(GradBundle::zeros_like).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &ExtGnanGrads) {
        self.rho.add_assign(&other.rho);
        for (a, b) in self.psi.iter_mut().zip(&other.psi) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.rho.scale(factor);
        for g in &mut self.psi {
            g.scale(factor);
        }
    }
}

/// Forward record for one (encoder, trajectory) pair: shape-network outputs
/// and tapes per node, distance weights and tapes per ordered node pair, and
/// the node/graph representations. Enough for an exact backward pass.
pub struct EncoderTrace {
    /// psi_out[w][l]: shape output for node w, subset l.
    psi_out: Vec<Vec<Vec<f64>>>,
    psi_tapes: Vec<Vec<crate::nn::ForwardTape>>,
    /// rho_out[j][w]: distance weight for target node j, source node w.
    rho_out: Vec<Vec<f64>>,
    rho_tapes: Vec<Vec<crate::nn::ForwardTape>>,
    node_reprs: Vec<Vec<f64>>,
    graph_repr: Vec<f64>,
}

impl EncoderTrace {
    pub fn graph_repr(&self) -> &[f64] {
        &self.graph_repr
    }

    pub fn node_reprs(&self) -> &[Vec<f64>] {
        &self.node_reprs
    }

    /// Incoming distance mass for source node w: `sum_j rho(t_w - t_j)`.
    pub fn source_weight(&self, w: usize) -> f64 {
        self.rho_out.iter().map(|row| row[w]).sum()
    }

    /// Entry sum of node w's shape outputs across subsets.
    pub fn psi_entry_sum(&self, w: usize) -> f64 {
        self.psi_out[w].iter().flatten().sum()
    }
}

impl ExtGnanParams {
    /// Fresh parameters for a feature partition: `rho` is 1 -> 1, `psi[l]` is
    /// `|F_l| -> |F_l|`. Per-network seeds are drawn from `rng` so a single
    /// model seed expands deterministically.
    ///
    /// The distance network's output bias starts at 1, so the encoder begins
    /// as a plain unit-weighted sum of shape outputs. A zero-bias start would
    /// make rho(0) exactly 0, and on data whose deltas are all zero the whole
    /// model sits on a gradient-free saddle it can never leave.
    pub fn init(
        partition: &PartitionSpec,
        arch: &ArchConfig,
        rng: &mut SplitMix64,
    ) -> Result<Self> {
        let mut rho = MlpParams::init(&arch.mlp_spec(1, 1, rng.next_u64()))?;
        if let Some(head) = rho.biases.last_mut() {
            head[0] = 1.0;
        }
        let psi = partition
            .feature_subsets
            .iter()
            .map(|subset| {
                MlpParams::init(&arch.mlp_spec(subset.len(), subset.len(), rng.next_u64()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rho, psi })
    }

    /// Check that shapes line up with the partition.
    pub fn validate(&self, partition: &PartitionSpec) -> Result<()> {
        if self.rho.input_dim() != 1 || self.rho.output_dim() != 1 {
            return Err(Error::InvalidSpec(
                "rho must map a scalar to a scalar".into(),
            ));
        }
        if self.psi.len() != partition.feature_subsets.len() {
            return Err(Error::InvalidSpec(format!(
                "expected {} shape networks, got {}",
                partition.feature_subsets.len(),
                self.psi.len()
            )));
        }
        for (l, (net, subset)) in self.psi.iter().zip(&partition.feature_subsets).enumerate() {
            if net.input_dim() != subset.len() || net.output_dim() != subset.len() {
                return Err(Error::InvalidSpec(format!(
                    "psi[{l}] must map R^{n} -> R^{n} for its feature subset",
                    n = subset.len()
                )));
            }
        }
        Ok(())
    }

    /// Representation of node `j`: per-subset distance-weighted sums of shape
    /// outputs, blocks concatenated in partition order.
    pub fn node_repr(
        &self,
        traj: &Trajectory,
        j: usize,
        partition: &PartitionSpec,
    ) -> Result<Vec<f64>> {
        if j >= traj.len() {
            return Err(Error::InvalidData(format!(
                "node index {j} out of bounds for trajectory '{}' with {} nodes",
                traj.channel_id(),
                traj.len()
            )));
        }
        let trace = self.forward_traced(traj, partition)?;
        Ok(trace.node_reprs[j].clone())
    }

    /// Graph representation: the sum of node representations.
    pub fn graph_repr(&self, traj: &Trajectory, partition: &PartitionSpec) -> Result<Vec<f64>> {
        Ok(self.forward_traced(traj, partition)?.graph_repr)
    }

    /// Full forward pass with tapes kept for backward.
    pub fn forward_traced(
        &self,
        traj: &Trajectory,
        partition: &PartitionSpec,
    ) -> Result<EncoderTrace> {
        self.validate(partition)?;
        let nodes = traj.nodes();
        let n = nodes.len();
        let dim: usize = partition.feature_subsets.iter().map(Vec::len).sum();

        let mut psi_out = Vec::with_capacity(n);
        let mut psi_tapes = Vec::with_capacity(n);
        for node in nodes {
            let mut outs = Vec::with_capacity(self.psi.len());
            let mut tapes = Vec::with_capacity(self.psi.len());
            for (net, subset) in self.psi.iter().zip(&partition.feature_subsets) {
                let input: Vec<f64> = subset.iter().map(|&i| node.features[i]).collect();
                let (out, tape) = net.forward(&input)?;
                outs.push(out);
                tapes.push(tape);
            }
            psi_out.push(outs);
            psi_tapes.push(tapes);
        }

        let mut rho_out = Vec::with_capacity(n);
        let mut rho_tapes = Vec::with_capacity(n);
        for j in nodes {
            let mut row = Vec::with_capacity(n);
            let mut row_tapes = Vec::with_capacity(n);
            for w in nodes {
                let (out, tape) = self.rho.forward(&[time_delta(w, j)])?;
                row.push(out[0]);
                row_tapes.push(tape);
            }
            rho_out.push(row);
            rho_tapes.push(row_tapes);
        }

        let mut node_reprs = Vec::with_capacity(n);
        for rho_row in &rho_out {
            let mut h = Vec::with_capacity(dim);
            for (l, subset) in partition.feature_subsets.iter().enumerate() {
                let mut block = vec![0.0; subset.len()];
                for (weight, outs) in rho_row.iter().zip(&psi_out) {
                    for (b, p) in block.iter_mut().zip(&outs[l]) {
                        *b += weight * p;
                    }
                }
                h.extend_from_slice(&block);
            }
            node_reprs.push(h);
        }

        let mut graph_repr = vec![0.0; dim];
        for h in &node_reprs {
            for (g, v) in graph_repr.iter_mut().zip(h) {
                *g += v;
            }
        }
        if graph_repr.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                locus: format!("encoder output for channel '{}'", traj.channel_id()),
            });
        }

        Ok(EncoderTrace {
            psi_out,
            psi_tapes,
            rho_out,
            rho_tapes,
            node_reprs,
            graph_repr,
        })
    }

    /// Gradients of `graph_repr . upstream` with respect to rho and psi
    /// parameters, given the trace of the matching forward pass.
    pub fn backward(
        &self,
        partition: &PartitionSpec,
        trace: &EncoderTrace,
        upstream: &[f64],
    ) -> Result<ExtGnanGrads> {
        let n = trace.psi_out.len();
        let mut grads = ExtGnanGrads::zeros_like(self);

        // Split the upstream vector into per-subset blocks (partition order).
        let mut blocks: Vec<&[f64]> = Vec::with_capacity(partition.feature_subsets.len());
        let mut offset = 0;
        for subset in &partition.feature_subsets {
            blocks.push(&upstream[offset..offset + subset.len()]);
            offset += subset.len();
        }

        // Shape networks: node w's psi output is scaled by rho(t_w - t_j) and
        // summed over every target j, so its upstream is the total incoming
        // distance mass times the subset block of the upstream vector.
        for w in 0..n {
            let mass = trace.source_weight(w);
            for (l, block) in blocks.iter().enumerate() {
                let up: Vec<f64> = block.iter().map(|u| u * mass).collect();
                let g = self.psi[l].backward(&trace.psi_tapes[w][l], &up)?;
                grads.psi[l].add_assign(&g);
            }
        }

        // Distance network: the weight of pair (j, w) multiplies node w's shape
        // outputs, so its upstream is upstream . psi(x_w), identical for every
        // target node j.
        let pair_upstream: Vec<f64> = (0..n)
            .map(|w| {
                blocks
                    .iter()
                    .enumerate()
                    .map(|(l, block)| {
                        block
                            .iter()
                            .zip(&trace.psi_out[w][l])
                            .map(|(u, p)| u * p)
                            .sum::<f64>()
                    })
                    .sum()
            })
            .collect();
        for row in &trace.rho_tapes {
            for (tape, upstream) in row.iter().zip(&pair_upstream) {
                let g = self.rho.backward(tape, &[*upstream])?;
                grads.rho.add_assign(&g);
            }
        }
        Ok(grads)
    }
}

/// Hand-set encoder parameters realizing the exclusive-or of two binary
/// features: the shape network maps (x1, x2) to (x1 - x1*x2, x2 - x1*x2) on
/// {0,1}^2 via a relu AND gate, so its entry sum is x1 + x2 - 2*x1*x2, and the
/// distance network is the constant 1. Requires d = 2 with a single feature
/// subset {0, 1}.
pub fn xor_gadget_params() -> ExtGnanParams {
    let psi_spec = MlpSpec::new(2, vec![3, 2], Activation::Relu, 0)
        .with_output_activation(Activation::Identity);
    let psi = MlpParams::from_layers(
        psi_spec,
        vec![
            Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]),
            Matrix::from_rows(&[vec![1.0, 0.0, -1.0], vec![0.0, 1.0, -1.0]]),
        ],
        vec![vec![0.0, 0.0, -1.0], vec![0.0, 0.0]],
    )
    .expect("gadget shapes are consistent");

    let rho_spec = MlpSpec::new(1, vec![1], Activation::Identity, 0);
    let rho = MlpParams::from_layers(
        rho_spec,
        vec![Matrix::from_rows(&[vec![0.0]])],
        vec![vec![1.0]],
    )
    .expect("gadget shapes are consistent");

    ExtGnanParams {
        rho,
        psi: vec![psi],
    }
}

/// Partition matching [`xor_gadget_params`]: both features in one subset.
pub fn xor_gadget_partition(channel: &str) -> PartitionSpec {
    PartitionSpec {
        feature_subsets: vec![vec![0, 1]],
        graph_subsets: vec![vec![channel.to_string()]],
    }
}
