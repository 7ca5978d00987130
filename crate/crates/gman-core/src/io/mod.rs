//! File formats: JSONL datasets, bit-exact checkpoints, training logs,
//! prediction records.

pub mod checkpoint;
pub mod dataset;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, NormStats};
use crate::error::Result;
use crate::mixer::{predict_proba, GmanModel};
use crate::training::EpochRecord;
use crate::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, LoadedCheckpoint, FORMAT_VERSION};
pub use dataset::{read_dataset, read_samples, write_dataset};

/// Write the training log as one JSON record per epoch.
pub fn write_training_log<W: Write>(mut writer: W, log: &[EpochRecord]) -> Result<()> {
    for record in log {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_training_log<R: BufRead>(reader: R) -> Result<Vec<EpochRecord>> {
    reader
        .lines()
        .filter(|l| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true))
        .map(|line| Ok(serde_json::from_str(&line?)?))
        .collect()
}

/// One prediction per sample; samples whose channels the model does not know
/// are skipped with a flag and a reason instead of failing the batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub set_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_label: Option<u8>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub skipped: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Score every sample of a raw dataset, applying the checkpoint's
/// normalization first when present. Output is ordered by set_id. A feature
/// dimension mismatch is an error; an unknown channel skips that sample.
pub fn predict_records(
    model: &GmanModel,
    norm: Option<&NormStats>,
    dataset: &Dataset,
) -> Result<Vec<PredictionRecord>> {
    if dataset.feature_dim != model.feature_dim() {
        return Err(Error::ShapeMismatch {
            what: "dataset feature dimension".into(),
            expected: model.feature_dim(),
            actual: dataset.feature_dim,
        });
    }
    let normalized;
    let data = match norm {
        Some(stats) => {
            normalized = dataset.normalized(stats)?;
            &normalized
        }
        None => dataset,
    };
    let mut records: Vec<PredictionRecord> = data
        .samples
        .iter()
        .map(|sample| match model.score(sample) {
            Ok(score) => {
                let probability = predict_proba(score);
                Ok(PredictionRecord {
                    set_id: sample.set_id().to_string(),
                    score: Some(score),
                    probability: Some(probability),
                    predicted_label: Some(u8::from(probability >= 0.5)),
                    skipped: false,
                    reason: None,
                })
            }
            Err(Error::UnknownChannel { channel, .. }) => Ok(PredictionRecord {
                set_id: sample.set_id().to_string(),
                score: None,
                probability: None,
                predicted_label: None,
                skipped: true,
                reason: Some(format!("unknown channel '{channel}'")),
            }),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| a.set_id.cmp(&b.set_id));
    Ok(records)
}

pub fn write_predictions<W: Write>(mut writer: W, records: &[PredictionRecord]) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixer::set_xor_gadget_model;
    use crate::synth;

    #[test]
    fn training_log_roundtrips() {
        let log = vec![
            EpochRecord {
                epoch: 0,
                train_loss: 0.7,
                val_loss: 0.71,
                val_metric: 0.71,
                lr: 1e-3,
            },
            EpochRecord {
                epoch: 1,
                train_loss: 0.6,
                val_loss: 0.62,
                val_metric: 0.62,
                lr: 1e-3,
            },
        ];
        let mut buf = Vec::new();
        write_training_log(&mut buf, &log).unwrap();
        let back = read_training_log(buf.as_slice()).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn predictions_on_gadget_dataset() {
        let model = set_xor_gadget_model();
        let data = synth::set_xor();
        let records = predict_records(&model, None, &data).unwrap();
        assert_eq!(records.len(), 4);
        for r in &records {
            assert!(!r.skipped);
            // score 0 -> probability exactly one half
            if r.score == Some(0.0) {
                assert_eq!(r.probability, Some(0.5));
            }
        }
        // sorted by set_id
        let ids: Vec<_> = records.iter().map(|r| r.set_id.clone()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn unknown_channel_skips_sample() {
        use crate::data::{Trajectory, TrajectoryNode, TrajectorySet};
        let model = set_xor_gadget_model();
        let stray = TrajectorySet::new(
            "strange",
            0,
            vec![Trajectory::new(
                "mystery",
                vec![TrajectoryNode {
                    timestamp: 0.0,
                    features: vec![1.0],
                }],
            )
            .unwrap()],
        )
        .unwrap();
        let mut samples = synth::set_xor().samples;
        samples.push(stray);
        let data = Dataset::from_samples(samples).unwrap();
        let records = predict_records(&model, None, &data).unwrap();
        assert_eq!(records.len(), 5);
        let skipped: Vec<_> = records.iter().filter(|r| r.skipped).collect();
        assert_eq!(skipped.len(), 1);
        assert_eq!(skipped[0].set_id, "strange");
        assert!(skipped[0].reason.as_ref().unwrap().contains("mystery"));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let model = set_xor_gadget_model(); // d = 1
        let data = synth::feature_xor(); // d = 2
        assert!(predict_records(&model, None, &data).is_err());
    }
}
