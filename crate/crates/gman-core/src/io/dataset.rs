//! Line-delimited JSON dataset format.
//!
//! One sample per line:
//!
//! ```json
//! {"set_id":"s0","label":1,"graphs":[{"channel":"hr","nodes":[{"t":0.5,"x":[1.0,2.0]}]}]}
//! ```
//!
//! An optional first line `{"meta":{...}}` documents the generator and its
//! label rule. Parsing rejects non-finite numbers, ragged feature vectors,
//! and duplicate channels, and reports the offending line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Trajectory, TrajectoryNode, TrajectorySet};
use crate::error::{Error, Result};
use crate::synth::GeneratorMeta;

#[derive(Debug, Serialize, Deserialize)]
struct NodeRecord {
    t: f64,
    x: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphRecord {
    channel: String,
    nodes: Vec<NodeRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRecord {
    set_id: String,
    label: u8,
    graphs: Vec<GraphRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaRecord {
    meta: GeneratorMeta,
}

fn sample_to_record(sample: &TrajectorySet) -> SampleRecord {
    SampleRecord {
        set_id: sample.set_id().to_string(),
        label: sample.label(),
        graphs: sample
            .trajectories()
            .iter()
            .map(|t| GraphRecord {
                channel: t.channel_id().to_string(),
                nodes: t
                    .nodes()
                    .iter()
                    .map(|n| NodeRecord {
                        t: n.timestamp,
                        x: n.features.clone(),
                    })
                    .collect(),
            })
            .collect(),
    }
}

fn record_to_sample(record: SampleRecord, line: usize) -> Result<TrajectorySet> {
    let locus = |e: Error| Error::Dataset(format!("line {line}: {e}"));
    let trajectories = record
        .graphs
        .into_iter()
        .map(|g| {
            let nodes = g
                .nodes
                .into_iter()
                .map(|n| TrajectoryNode {
                    timestamp: n.t,
                    features: n.x,
                })
                .collect();
            Trajectory::new(g.channel, nodes)
        })
        .collect::<Result<Vec<_>>>()
        .map_err(locus)?;
    TrajectorySet::new(record.set_id, record.label, trajectories).map_err(locus)
}

/// Write samples as JSONL, with an optional meta header line.
pub fn write_dataset<W: Write>(
    mut writer: W,
    samples: &[TrajectorySet],
    meta: Option<&GeneratorMeta>,
) -> Result<()> {
    if let Some(meta) = meta {
        serde_json::to_writer(&mut writer, &MetaRecord { meta: meta.clone() })?;
        writer.write_all(b"\n")?;
    }
    for sample in samples {
        serde_json::to_writer(&mut writer, &sample_to_record(sample))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Read a JSONL dataset. Returns the samples plus the meta header if present.
/// Fails on an empty file; use [`read_samples`] where zero samples are legal.
pub fn read_dataset<R: BufRead>(reader: R) -> Result<(Dataset, Option<GeneratorMeta>)> {
    let (samples, meta) = read_samples(reader)?;
    Ok((Dataset::from_samples(samples)?, meta))
}

/// Read raw samples (possibly none) plus the meta header if present.
pub fn read_samples<R: BufRead>(reader: R) -> Result<(Vec<TrajectorySet>, Option<GeneratorMeta>)> {
    let mut samples = Vec::new();
    let mut meta = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| Error::Dataset(format!("line {line_no}: {e}")))?;
        if value.get("meta").is_some() {
            if line_no != 1 {
                return Err(Error::Dataset(format!(
                    "line {line_no}: meta header is only allowed on the first line"
                )));
            }
            let record: MetaRecord = serde_json::from_value(value)
                .map_err(|e| Error::Dataset(format!("line {line_no}: {e}")))?;
            meta = Some(record.meta);
            continue;
        }
        let record: SampleRecord = serde_json::from_value(value)
            .map_err(|e| Error::Dataset(format!("line {line_no}: {e}")))?;
        samples.push(record_to_sample(record, line_no)?);
    }
    Ok((samples, meta))
}
