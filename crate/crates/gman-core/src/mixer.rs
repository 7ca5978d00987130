//! Subset mixing and the scalar score.
//!
//! Every graph subset produces a d-dimensional representation: singleton
//! subsets pass their lone trajectory's encoder output straight through,
//! multi-graph subsets push each member through a shared encoder, then apply
//! a DeepSet `g(sum_l f(h_l))`. The score is the sum of all subset
//! representation entries, so the model stays an exact sum of per-subset
//! contributions.

use serde::{Deserialize, Serialize};

use crate::data::{PartitionSpec, Trajectory, TrajectorySet};
use crate::error::{Error, Result};
use crate::extgnan::{ArchConfig, EncoderTrace, ExtGnanGrads, ExtGnanParams};
use crate::nn::{Activation, ForwardTape, GradBundle, Matrix, MlpParams, MlpSpec, SplitMix64};

/// DeepSet element and aggregate networks, both `R^d -> R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepSetParams {
    pub f: MlpParams,
    pub g: MlpParams,
}

/// Parameters owned by one graph subset: a shared encoder, plus a DeepSet
/// when the subset's declared capacity exceeds one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetParams {
    pub encoder: ExtGnanParams,
    pub deepset: Option<DeepSetParams>,
}

/// All model parameters, aligned index-for-index with
/// `PartitionSpec::graph_subsets`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmanParams {
    pub subsets: Vec<SubsetParams>,
}

impl GmanParams {
    pub fn init(partition: &PartitionSpec, arch: &ArchConfig, seed: u64) -> Result<Self> {
        let dim: usize = partition.feature_subsets.iter().map(Vec::len).sum();
        let mut rng = SplitMix64::new(seed);
        let subsets = partition
            .graph_subsets
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let encoder = ExtGnanParams::init(partition, arch, &mut rng)?;
                let deepset = if partition.is_multi(i) {
                    Some(DeepSetParams {
                        f: MlpParams::init(&arch.mlp_spec(dim, dim, rng.next_u64()))?,
                        g: MlpParams::init(&arch.mlp_spec(dim, dim, rng.next_u64()))?,
                    })
                } else {
                    None
                };
                Ok(SubsetParams { encoder, deepset })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { subsets })
    }

    pub fn validate(&self, partition: &PartitionSpec) -> Result<()> {
        if self.subsets.len() != partition.graph_subsets.len() {
            return Err(Error::InvalidSpec(format!(
                "expected {} subset parameter groups, got {}",
                partition.graph_subsets.len(),
                self.subsets.len()
            )));
        }
        for (i, subset) in self.subsets.iter().enumerate() {
            subset.encoder.validate(partition)?;
            if partition.is_multi(i) != subset.deepset.is_some() {
                return Err(Error::InvalidSpec(format!(
                    "graph subset {i}: DeepSet parameters must be present iff capacity > 1"
                )));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.subsets.iter().all(|s| {
            s.encoder.rho.is_finite()
                && s.encoder.psi.iter().all(MlpParams::is_finite)
                && s.deepset
                    .as_ref()
                    .is_none_or(|d| d.f.is_finite() && d.g.is_finite())
        })
    }
}

/// Gradients mirroring [`GmanParams`].
#[derive(Debug, Clone)]
pub struct GmanGrads {
    pub subsets: Vec<SubsetGrads>,
}

#[derive(Debug, Clone)]
pub struct SubsetGrads {
    pub encoder: ExtGnanGrads,
    pub deepset: Option<(GradBundle, GradBundle)>,
}

impl GmanGrads {
    pub fn zeros_like(params: &GmanParams) -> Self {
        Self {
            subsets: params
                .subsets
                .iter()
                .map(|s| SubsetGrads {
                    encoder: ExtGnanGrads::zeros_like(&s.encoder),
                    deepset: s
                        .deepset
                        .as_ref()
                        .map(|d| (GradBundle::zeros_like(&d.f), GradBundle::zeros_like(&d.g))),
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &GmanGrads) {
        for (a, b) in self.subsets.iter_mut().zip(&other.subsets) {
            a.encoder.add_assign(&b.encoder);
            if let (Some((af, ag)), Some((bf, bg))) = (a.deepset.as_mut(), b.deepset.as_ref()) {
                af.add_assign(bf);
                ag.add_assign(bg);
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for s in &mut self.subsets {
            s.encoder.scale(factor);
            if let Some((f, g)) = s.deepset.as_mut() {
                f.scale(factor);
                g.scale(factor);
            }
        }
    }
}

/// Forward record of one subset for one sample.
pub struct SubsetTrace {
    /// Indices into the sample's trajectory list, canonical channel order.
    pub members: Vec<usize>,
    pub encoder_traces: Vec<EncoderTrace>,
    pub deepset: Option<DeepSetTrace>,
    pub repr: Vec<f64>,
}

pub struct DeepSetTrace {
    pub f_tapes: Vec<ForwardTape>,
    pub g_tape: ForwardTape,
}

/// Forward record of a full scoring pass.
pub struct ScoreTrace {
    pub subsets: Vec<SubsetTrace>,
    pub score: f64,
}

/// A partition paired with matching parameters; the scoring surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmanModel {
    pub partition: PartitionSpec,
    pub params: GmanParams,
}

impl GmanModel {
    pub fn init(partition: PartitionSpec, arch: &ArchConfig, seed: u64) -> Result<Self> {
        let params = GmanParams::init(&partition, arch, seed)?;
        Ok(Self { partition, params })
    }

    pub fn feature_dim(&self) -> usize {
        self.partition.feature_subsets.iter().map(Vec::len).sum()
    }

    /// Representation of graph subset `i` over the trajectories present in
    /// this sample. Empty singleton subsets contribute the zero vector; empty
    /// multi subsets still pass through the DeepSet, contributing `g(0)`.
    pub fn subset_repr(&self, graphs: &[&Trajectory], subset: usize) -> Result<Vec<f64>> {
        Ok(self.subset_repr_traced(graphs, subset, None)?.repr)
    }

    fn subset_repr_traced(
        &self,
        graphs: &[&Trajectory],
        subset: usize,
        member_indices: Option<Vec<usize>>,
    ) -> Result<SubsetTrace> {
        let dim = self.feature_dim();
        let channels = &self.partition.graph_subsets[subset];
        for g in graphs {
            if !channels.iter().any(|c| c == g.channel_id()) {
                return Err(Error::Routing {
                    channel: g.channel_id().to_string(),
                    subset,
                });
            }
        }
        let params = &self.params.subsets[subset];
        let members = member_indices.unwrap_or_else(|| (0..graphs.len()).collect());

        match &params.deepset {
            None => {
                if graphs.len() > 1 {
                    return Err(Error::Routing {
                        channel: graphs[1].channel_id().to_string(),
                        subset,
                    });
                }
                match graphs.first() {
                    None => Ok(SubsetTrace {
                        members,
                        encoder_traces: Vec::new(),
                        deepset: None,
                        repr: vec![0.0; dim],
                    }),
                    Some(g) => {
                        let trace = params.encoder.forward_traced(g, &self.partition)?;
                        let repr = trace.graph_repr().to_vec();
                        Ok(SubsetTrace {
                            members,
                            encoder_traces: vec![trace],
                            deepset: None,
                            repr,
                        })
                    }
                }
            }
            Some(deepset) => {
                let mut encoder_traces = Vec::with_capacity(graphs.len());
                let mut f_tapes = Vec::with_capacity(graphs.len());
                let mut z = vec![0.0; dim];
                for g in graphs {
                    let trace = params.encoder.forward_traced(g, &self.partition)?;
                    let (f_out, f_tape) = deepset.f.forward(trace.graph_repr())?;
                    for (zi, fi) in z.iter_mut().zip(&f_out) {
                        *zi += fi;
                    }
                    encoder_traces.push(trace);
                    f_tapes.push(f_tape);
                }
                let (repr, g_tape) = deepset.g.forward(&z)?;
                Ok(SubsetTrace {
                    members,
                    encoder_traces,
                    deepset: Some(DeepSetTrace { f_tapes, g_tape }),
                    repr,
                })
            }
        }
    }

    /// Check that every channel of the sample routes to a subset and the
    /// feature dimension matches the partition.
    pub fn validate_sample(&self, sample: &TrajectorySet) -> Result<()> {
        if sample.feature_dim() != self.feature_dim() {
            return Err(Error::ShapeMismatch {
                what: format!("sample '{}' feature dimension", sample.set_id()),
                expected: self.feature_dim(),
                actual: sample.feature_dim(),
            });
        }
        for t in sample.trajectories() {
            if self.partition.subset_of_channel(t.channel_id()).is_none() {
                return Err(Error::UnknownChannel {
                    channel: t.channel_id().to_string(),
                    set_id: sample.set_id().to_string(),
                });
            }
        }
        Ok(())
    }

    /// Full scoring pass with traces kept for backward.
    pub fn score_traced(&self, sample: &TrajectorySet) -> Result<ScoreTrace> {
        self.validate_sample(sample)?;
        let mut subsets = Vec::with_capacity(self.partition.graph_subsets.len());
        let mut score = 0.0;
        for i in 0..self.partition.graph_subsets.len() {
            // Sample trajectories are in canonical channel order already.
            let mut members = Vec::new();
            let mut graphs = Vec::new();
            for (t_idx, t) in sample.trajectories().iter().enumerate() {
                if self.partition.subset_of_channel(t.channel_id()) == Some(i) {
                    members.push(t_idx);
                    graphs.push(t);
                }
            }
            let trace = self.subset_repr_traced(&graphs, i, Some(members))?;
            score += trace.repr.iter().sum::<f64>();
            subsets.push(trace);
        }
        if !score.is_finite() {
            return Err(Error::NonFinite {
                locus: format!("score of sample '{}'", sample.set_id()),
            });
        }
        Ok(ScoreTrace { subsets, score })
    }

    /// Scalar score: subset representations summed, then entries summed.
    pub fn score(&self, sample: &TrajectorySet) -> Result<f64> {
        Ok(self.score_traced(sample)?.score)
    }

    pub fn predict_proba(&self, sample: &TrajectorySet) -> Result<f64> {
        Ok(predict_proba(self.score(sample)?))
    }

    /// Gradients of `d_score * score` with respect to every parameter.
    pub fn backward(
        &self,
        sample: &TrajectorySet,
        trace: &ScoreTrace,
        d_score: f64,
    ) -> Result<GmanGrads> {
        let dim = self.feature_dim();
        let mut grads = GmanGrads::zeros_like(&self.params);
        // The score sums every entry of every subset representation, so the
        // upstream for each representation is d_score replicated across d.
        let upstream = vec![d_score; dim];

        for (i, subset_trace) in trace.subsets.iter().enumerate() {
            let params = &self.params.subsets[i];
            let subset_grads = &mut grads.subsets[i];
            match (&params.deepset, &subset_trace.deepset) {
                (None, _) => {
                    if let Some(enc_trace) = subset_trace.encoder_traces.first() {
                        let g = params
                            .encoder
                            .backward(&self.partition, enc_trace, &upstream)?;
                        subset_grads.encoder.add_assign(&g);
                    }
                }
                (Some(deepset), Some(ds_trace)) => {
                    let g_grads = deepset.g.backward(&ds_trace.g_tape, &upstream)?;
                    let d_z = g_grads.input_gradient.clone();
                    let (f_acc, g_acc) =
                        subset_grads.deepset.as_mut().expect("grads mirror params");
                    g_acc.add_assign(&g_grads);
                    for (enc_trace, f_tape) in
                        subset_trace.encoder_traces.iter().zip(&ds_trace.f_tapes)
                    {
                        let f_grads = deepset.f.backward(f_tape, &d_z)?;
                        let d_h = f_grads.input_gradient.clone();
                        f_acc.add_assign(&f_grads);
                        let enc_grads =
                            params.encoder.backward(&self.partition, enc_trace, &d_h)?;
                        subset_grads.encoder.add_assign(&enc_grads);
                    }
                }
                (Some(_), None) => {
                    return Err(Error::InvalidSpec(format!(
                        "trace for subset {i} is missing its DeepSet record"
                    )));
                }
            }
        }
        let _ = sample;
        Ok(grads)
    }
}

/// Logistic link mapping a score to a probability. Numerically stable for
/// large |score|.
pub fn predict_proba(score: f64) -> f64 {
    if score >= 0.0 {
        1.0 / (1.0 + (-score).exp())
    } else {
        let e = score.exp();
        e / (1.0 + e)
    }
}

/// Hand-set two-channel model realizing the exclusive-or of two binary
/// single-feature graphs: encoders return the feature unchanged (constant-1
/// distance weight, identity shape function), `f` is the identity, and `g`
/// computes `s - 2*relu(s - 1)`, which equals `s*(2 - s)` on {0, 1, 2}.
pub fn set_xor_gadget_model() -> GmanModel {
    let partition = PartitionSpec {
        feature_subsets: vec![vec![0]],
        graph_subsets: vec![vec!["g1".to_string(), "g2".to_string()]],
    };
    let rho = MlpParams::from_layers(
        MlpSpec::new(1, vec![1], Activation::Identity, 0),
        vec![Matrix::from_rows(&[vec![0.0]])],
        vec![vec![1.0]],
    )
    .expect("gadget shapes are consistent");
    let psi = MlpParams::from_layers(
        MlpSpec::new(1, vec![1], Activation::Identity, 0),
        vec![Matrix::identity(1)],
        vec![vec![0.0]],
    )
    .expect("gadget shapes are consistent");
    let f = MlpParams::from_layers(
        MlpSpec::new(1, vec![1], Activation::Identity, 0),
        vec![Matrix::identity(1)],
        vec![vec![0.0]],
    )
    .expect("gadget shapes are consistent");
    let g_spec = MlpSpec::new(1, vec![2, 1], Activation::Relu, 0)
        .with_output_activation(Activation::Identity);
    let g = MlpParams::from_layers(
        g_spec,
        vec![
            Matrix::from_rows(&[vec![1.0], vec![1.0]]),
            Matrix::from_rows(&[vec![1.0, -2.0]]),
        ],
        vec![vec![0.0, -1.0], vec![0.0]],
    )
    .expect("gadget shapes are consistent");

    GmanModel {
        partition,
        params: GmanParams {
            subsets: vec![SubsetParams {
                encoder: ExtGnanParams {
                    rho,
                    psi: vec![psi],
                },
                deepset: Some(DeepSetParams { f, g }),
            }],
        },
    }
}
