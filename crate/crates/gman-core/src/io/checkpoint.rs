//! Checkpoint file format.
//!
//! JSON, with every f64 parameter encoded as the 16-hex-digit IEEE-754 bit
//! pattern of the value. That trades size for a text format that round-trips
//! bit-exactly on every platform: `load(save(m))` reproduces the parameters
//! down to the last bit, and so reproduces predictions exactly.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::{NormStats, PartitionSpec};
use crate::error::{Error, Result};
use crate::extgnan::ExtGnanParams;
use crate::mixer::{DeepSetParams, GmanModel, GmanParams, SubsetParams};
use crate::nn::{Matrix, MlpParams, MlpSpec};
use crate::training::TrainConfig;

pub const FORMAT_VERSION: u32 = 1;

fn encode_f64(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn decode_f64(s: &str) -> Result<f64> {
    let bits = u64::from_str_radix(s, 16)
        .map_err(|_| Error::Checkpoint(format!("bad float encoding '{s}'")))?;
    Ok(f64::from_bits(bits))
}

fn encode_vec(v: &[f64]) -> Vec<String> {
    v.iter().copied().map(encode_f64).collect()
}

fn decode_vec(v: &[String]) -> Result<Vec<f64>> {
    v.iter().map(|s| decode_f64(s)).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct EncodedMatrix {
    rows: usize,
    cols: usize,
    data: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EncodedMlp {
    spec: MlpSpec,
    weights: Vec<EncodedMatrix>,
    biases: Vec<Vec<String>>,
}

fn encode_mlp(p: &MlpParams) -> EncodedMlp {
    EncodedMlp {
        spec: p.spec.clone(),
        weights: p
            .weights
            .iter()
            .map(|w| EncodedMatrix {
                rows: w.rows(),
                cols: w.cols(),
                data: encode_vec(w.data()),
            })
            .collect(),
        biases: p.biases.iter().map(|b| encode_vec(b)).collect(),
    }
}

fn decode_mlp(e: &EncodedMlp) -> Result<MlpParams> {
    let mut weights = Vec::with_capacity(e.weights.len());
    for w in &e.weights {
        if w.data.len() != w.rows * w.cols {
            return Err(Error::Checkpoint(format!(
                "matrix data length {} does not match {}x{}",
                w.data.len(),
                w.rows,
                w.cols
            )));
        }
        let mut m = Matrix::zeros(w.rows, w.cols);
        for (dst, src) in m.data_mut().iter_mut().zip(&w.data) {
            *dst = decode_f64(src)?;
        }
        weights.push(m);
    }
    let biases = e
        .biases
        .iter()
        .map(|b| decode_vec(b))
        .collect::<Result<Vec<_>>>()?;
    MlpParams::from_layers(e.spec.clone(), weights, biases)
        .map_err(|e| Error::Checkpoint(e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
struct EncodedDeepSet {
    f: EncodedMlp,
    g: EncodedMlp,
}

#[derive(Debug, Serialize, Deserialize)]
struct EncodedSubset {
    rho: EncodedMlp,
    psi: Vec<EncodedMlp>,
    deepset: Option<EncodedDeepSet>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EncodedNormStats {
    mean: Vec<String>,
    std: Vec<String>,
    floored: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    partition: PartitionSpec,
    feature_dim: usize,
    subsets: Vec<EncodedSubset>,
    train_config: Option<TrainConfig>,
    norm: Option<EncodedNormStats>,
}

/// Everything a checkpoint restores.
#[derive(Debug, Clone)]
pub struct LoadedCheckpoint {
    pub model: GmanModel,
    pub train_config: Option<TrainConfig>,
    pub norm: Option<NormStats>,
}

pub fn save_checkpoint<W: Write>(
    writer: W,
    model: &GmanModel,
    train_config: Option<&TrainConfig>,
    norm: Option<&NormStats>,
) -> Result<()> {
    let file = CheckpointFile {
        format_version: FORMAT_VERSION,
        partition: model.partition.clone(),
        feature_dim: model.feature_dim(),
        subsets: model
            .params
            .subsets
            .iter()
            .map(|s| EncodedSubset {
                rho: encode_mlp(&s.encoder.rho),
                psi: s.encoder.psi.iter().map(encode_mlp).collect(),
                deepset: s.deepset.as_ref().map(|d| EncodedDeepSet {
                    f: encode_mlp(&d.f),
                    g: encode_mlp(&d.g),
                }),
            })
            .collect(),
        train_config: train_config.cloned(),
        norm: norm.map(|n| EncodedNormStats {
            mean: encode_vec(&n.mean),
            std: encode_vec(&n.std),
            floored: n.floored.clone(),
        }),
    };
    serde_json::to_writer_pretty(writer, &file)?;
    Ok(())
}

pub fn load_checkpoint<R: Read>(reader: R) -> Result<LoadedCheckpoint> {
    let file: CheckpointFile = serde_json::from_reader(reader)
        .map_err(|e| Error::Checkpoint(format!("unparseable checkpoint: {e}")))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format_version {} (this build reads version {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let subsets = file
        .subsets
        .iter()
        .map(|s| {
            Ok(SubsetParams {
                encoder: ExtGnanParams {
                    rho: decode_mlp(&s.rho)?,
                    psi: s.psi.iter().map(decode_mlp).collect::<Result<Vec<_>>>()?,
                },
                deepset: s
                    .deepset
                    .as_ref()
                    .map(|d| {
                        Ok::<_, Error>(DeepSetParams {
                            f: decode_mlp(&d.f)?,
                            g: decode_mlp(&d.g)?,
                        })
                    })
                    .transpose()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let model = GmanModel {
        partition: file.partition,
        params: GmanParams { subsets },
    };
    model
        .params
        .validate(&model.partition)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let norm = file
        .norm
        .map(|n| {
            Ok::<_, Error>(NormStats {
                mean: decode_vec(&n.mean)?,
                std: decode_vec(&n.std)?,
                floored: n.floored,
            })
        })
        .transpose()?;
    Ok(LoadedCheckpoint {
        model,
        train_config: file.train_config,
        norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extgnan::ArchConfig;
    use crate::nn::Activation;

    fn sample_model() -> GmanModel {
        let partition = PartitionSpec {
            feature_subsets: vec![vec![0], vec![1]],
            graph_subsets: vec![
                vec!["solo".to_string()],
                vec!["a".to_string(), "b".to_string()],
            ],
        };
        let arch = ArchConfig {
            hidden_widths: vec![4, 3],
            activation: Activation::Relu,
        };
        GmanModel::init(partition, &arch, 2024).unwrap()
    }

    #[test]
    fn hex_encoding_is_lossless() {
        for v in [
            0.0,
            -0.0,
            1.0,
            -1.5,
            std::f64::consts::PI,
            f64::MIN_POSITIVE,
            1e-308,
            123456.789,
        ] {
            let back = decode_f64(&encode_f64(v)).unwrap();
            assert_eq!(v.to_bits(), back.to_bits());
        }
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let model = sample_model();
        let norm = NormStats {
            mean: vec![0.25, -1.75],
            std: vec![1.0, 2.5],
            floored: vec![],
        };
        let config = TrainConfig::default();
        let mut buf = Vec::new();
        save_checkpoint(&mut buf, &model, Some(&config), Some(&norm)).unwrap();
        let loaded = load_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(loaded.model, model);
        assert_eq!(loaded.norm, Some(norm));
        assert_eq!(loaded.train_config, Some(config));
    }

    #[test]
    fn version_mismatch_is_rejected_with_message() {
        let model = sample_model();
        let mut buf = Vec::new();
        save_checkpoint(&mut buf, &model, None, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let bumped = text.replace("\"format_version\": 1", "\"format_version\": 9");
        let err = load_checkpoint(bumped.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("format_version 9"), "{err}");
    }

    #[test]
    fn corrupt_hex_is_rejected() {
        let model = sample_model();
        let mut buf = Vec::new();
        save_checkpoint(&mut buf, &model, None, None).unwrap();
        let mut value: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        value["subsets"][0]["rho"]["weights"][0]["data"][0] = "not-a-float".into();
        let damaged = serde_json::to_vec(&value).unwrap();
        let err = load_checkpoint(damaged.as_slice()).unwrap_err();
        assert!(err.to_string().contains("bad float encoding"), "{err}");
    }
}
