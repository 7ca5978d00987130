//! Command implementations. Each returns `Ok(())` or a categorized error the
//! caller maps to an exit code.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gman_core::data::{split_train_val, validate_partition, Dataset, NormStats, PartitionSpec};
use gman_core::extgnan::ArchConfig;
use gman_core::interpret::ReportOptions;
use gman_core::io::{
    load_checkpoint, predict_records, read_dataset, read_samples, save_checkpoint, write_dataset,
    write_predictions, write_training_log,
};
use gman_core::mixer::predict_proba;
use gman_core::nn::Activation;
use gman_core::synth;
use gman_core::training::{
    accuracy, auroc, fit, run_gradcheck, EarlyStopMetric, FitStatus, TrainConfig,
};

use crate::{Category, CliError};

type CmdResult = Result<(), CliError>;

/// Relative output paths can be redirected with the GMAN_OUT_DIR variable.
pub fn resolve_out(path: &Path) -> PathBuf {
    if path.is_relative() {
        if let Ok(dir) = std::env::var("GMAN_OUT_DIR") {
            return PathBuf::from(dir).join(path);
        }
    }
    path.to_path_buf()
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| CliError::runtime(format!("{e}")))?;
        }
    }
    Ok(())
}

fn open_reader(path: &Path) -> Result<BufReader<fs::File>, CliError> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::runtime(format!("cannot open {}: {e}", path.display())))
}

fn create_writer(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    create_parent(path)?;
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", path.display())))
}

/* ---------------------------------------------------------------- synth -- */

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthTask {
    FeatureXor,
    SetXor,
    SparseTraj,
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_synth(
    task: SynthTask,
    out: &Path,
    samples: usize,
    seed: u64,
    extra_channels: usize,
    min_nodes: usize,
    max_nodes: usize,
    t_max: f64,
    noise: f64,
    missing_rate: f64,
) -> CmdResult {
    let (dataset, meta) = match task {
        SynthTask::FeatureXor => (synth::feature_xor(), synth::feature_xor_meta()),
        SynthTask::SetXor => (synth::set_xor(), synth::set_xor_meta()),
        SynthTask::SparseTraj => {
            if samples == 0 {
                return Err(CliError::validation("sample count must be positive"));
            }
            if min_nodes == 0 || max_nodes < min_nodes {
                return Err(CliError::validation("need 1 <= min-nodes <= max-nodes"));
            }
            if !(0.0..=1.0).contains(&missing_rate) {
                return Err(CliError::validation("missing-rate must lie in [0, 1]"));
            }
            if !t_max.is_finite() || t_max <= 0.0 || !noise.is_finite() || noise < 0.0 {
                return Err(CliError::validation("t-max must be > 0 and noise >= 0"));
            }
            let config = synth::SparseTrajConfig {
                n_samples: samples,
                seed,
                extra_channels,
                min_nodes,
                max_nodes,
                t_max,
                noise,
                missing_rate,
            };
            (
                synth::sparse_traj(&config).map_err(CliError::from)?,
                synth::sparse_traj_meta(&config),
            )
        }
    };
    let out = resolve_out(out);
    let mut writer = create_writer(&out)?;
    write_dataset(&mut writer, &dataset.samples, Some(&meta))?;
    writer
        .flush()
        .map_err(|e| CliError::runtime(e.to_string()))?;
    println!(
        "wrote {} samples to {}",
        dataset.samples.len(),
        out.display()
    );
    Ok(())
}

/* ---------------------------------------------------------------- train -- */

/// On-disk training configuration; every field has a default so a partial
/// file (or `{}`) is valid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainFileConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub max_lr: f64,
    pub min_lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub early_stop_metric: EarlyStopMetric,
    /// Fraction of samples held out for validation (seeded shuffle split).
    pub val_fraction: f64,
    /// Z-score features using statistics from the training split.
    pub normalize: bool,
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
}

impl Default for TrainFileConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            max_epochs: t.max_epochs,
            batch_size: t.batch_size,
            max_lr: t.max_lr,
            min_lr: t.min_lr,
            factor: t.factor,
            patience: t.patience,
            weight_decay: t.weight_decay,
            seed: t.seed,
            early_stop_metric: t.early_stop_metric,
            val_fraction: 0.2,
            normalize: true,
            hidden_widths: vec![32, 32, 32],
            activation: Activation::Relu,
        }
    }
}

impl TrainFileConfig {
    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            max_lr: self.max_lr,
            min_lr: self.min_lr,
            factor: self.factor,
            patience: self.patience,
            weight_decay: self.weight_decay,
            seed: self.seed,
            early_stop_metric: self.early_stop_metric,
        }
    }

    fn arch(&self) -> ArchConfig {
        ArchConfig {
            hidden_widths: self.hidden_widths.clone(),
            activation: self.activation,
        }
    }
}

fn read_partition(path: &Path) -> Result<PartitionSpec, CliError> {
    let reader = open_reader(path)?;
    serde_json::from_reader(reader)
        .map_err(|e| CliError::validation(format!("partition file {}: {e}", path.display())))
}

pub fn cmd_train(
    data: &Path,
    partition_path: &Path,
    config_path: Option<&Path>,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> CmdResult {
    let (dataset, _) = read_dataset(open_reader(data)?)?;
    let partition = read_partition(partition_path)?;
    let mut file_config = match config_path {
        Some(path) => serde_json::from_reader(open_reader(path)?)
            .map_err(|e| CliError::validation(format!("config file {}: {e}", path.display())))?,
        None => TrainFileConfig::default(),
    };
    if let Some(seed) = seed_override {
        file_config.seed = seed;
    }
    if !(0.0..1.0).contains(&file_config.val_fraction) {
        return Err(CliError::validation("val_fraction must lie in [0, 1)"));
    }

    let violations = validate_partition(&partition, dataset.feature_dim, &dataset.channels());
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("partition violation: {v}");
        }
        return Err(CliError::validation(format!(
            "partition has {} violation(s)",
            violations.len()
        )));
    }

    let (train, val) =
        split_train_val(&dataset.samples, file_config.val_fraction, file_config.seed);
    let (train, val, norm) = if file_config.normalize {
        let stats = NormStats::from_samples(&train)?;
        for &i in &stats.floored {
            eprintln!("warning: feature {i} is constant in the training split; std floored");
        }
        let train_n = Dataset::from_samples(train)?.normalized(&stats)?;
        let val_n = if val.is_empty() {
            val
        } else {
            Dataset::from_samples(val)?.normalized(&stats)?.samples
        };
        (train_n.samples, val_n, Some(stats))
    } else {
        (train, val, None)
    };

    let config = file_config.train_config();
    let result = fit(&train, &val, &partition, &file_config.arch(), &config)?;

    let out_dir = resolve_out(out_dir);
    fs::create_dir_all(&out_dir).map_err(|e| CliError::runtime(e.to_string()))?;
    let ckpt_path = out_dir.join("checkpoint.json");
    let log_path = out_dir.join("train_log.jsonl");
    save_checkpoint(
        create_writer(&ckpt_path)?,
        &result.model,
        Some(&config),
        norm.as_ref(),
    )?;
    write_training_log(create_writer(&log_path)?, &result.log)?;

    match result.status {
        FitStatus::Completed => {
            println!(
                "trained {} epochs (best epoch {}, best {} {:.6}); checkpoint {}",
                result.log.len(),
                result.best_epoch,
                gman_core::training::sweep::metric_name(config.early_stop_metric),
                result.best_metric,
                ckpt_path.display()
            );
            Ok(())
        }
        FitStatus::Diverged { epoch } => Err(CliError {
            category: Category::Divergence,
            message: format!(
                "training diverged at epoch {epoch}; last good checkpoint written to {}",
                ckpt_path.display()
            ),
        }),
    }
}

/* -------------------------------------------------------------- predict -- */

pub fn cmd_predict(checkpoint: &Path, data: &Path, out: Option<&Path>) -> CmdResult {
    let loaded = load_checkpoint(open_reader(checkpoint)?)?;
    let (samples, _) = read_samples(open_reader(data)?)?;
    let records = if samples.is_empty() {
        Vec::new()
    } else {
        let dataset = Dataset::from_samples(samples)?;
        predict_records(&loaded.model, loaded.norm.as_ref(), &dataset)?
    };
    match out {
        Some(path) => {
            let path = resolve_out(path);
            let mut writer = create_writer(&path)?;
            write_predictions(&mut writer, &records)?;
            writer
                .flush()
                .map_err(|e| CliError::runtime(e.to_string()))?;
        }
        None => {
            let stdout = std::io::stdout();
            write_predictions(stdout.lock(), &records)?;
        }
    }
    Ok(())
}

/* -------------------------------------------------------------- explain -- */

pub fn cmd_explain(
    checkpoint: &Path,
    data: &Path,
    sample_id: &str,
    out: Option<&Path>,
    svg: Option<&Path>,
    sources: bool,
) -> CmdResult {
    let loaded = load_checkpoint(open_reader(checkpoint)?)?;
    let (dataset, _) = read_dataset(open_reader(data)?)?;
    let dataset = match loaded.norm.as_ref() {
        Some(stats) => dataset.normalized(stats)?,
        None => dataset,
    };
    let sample = dataset
        .samples
        .iter()
        .find(|s| s.set_id() == sample_id)
        .ok_or_else(|| {
            CliError::validation(format!(
                "sample '{sample_id}' not found in {}",
                data.display()
            ))
        })?;
    let report = loaded.model.build_report(
        sample,
        ReportOptions {
            include_source_view: sources,
        },
    )?;

    let json = serde_json::to_string_pretty(&report).map_err(gman_core::Error::from)?;
    match out {
        Some(path) => {
            let path = resolve_out(path);
            let mut writer = create_writer(&path)?;
            writer
                .write_all(json.as_bytes())
                .and_then(|()| writer.write_all(b"\n"))
                .map_err(|e| CliError::runtime(e.to_string()))?;
        }
        None => println!("{json}"),
    }

    if let Some(svg_path) = svg {
        let mut entries: Vec<(String, f64)> = report
            .graphs
            .iter()
            .map(|g| (format!("{} (graph)", g.channel), g.total))
            .collect();
        entries.extend(report.subsets.iter().map(|s| {
            (
                format!("subset {} [{}]", s.subset, s.channels.join(",")),
                s.contribution,
            )
        }));
        let chart = crate::svg::bar_chart(
            &format!(
                "contributions for {} (score {:.4})",
                report.set_id, report.raw_score
            ),
            &entries,
        );
        let svg_path = resolve_out(svg_path);
        create_parent(&svg_path)?;
        fs::write(&svg_path, chart).map_err(|e| CliError::runtime(e.to_string()))?;
    }
    Ok(())
}

/* ----------------------------------------------------------------- eval -- */

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalMetric {
    Auroc,
    Accuracy,
}

pub fn cmd_eval(checkpoint: &Path, data: &Path, metric: EvalMetric, json: bool) -> CmdResult {
    let loaded = load_checkpoint(open_reader(checkpoint)?)?;
    let (dataset, _) = read_dataset(open_reader(data)?)?;
    let dataset = match loaded.norm.as_ref() {
        Some(stats) => dataset.normalized(stats)?,
        None => dataset,
    };
    let mut scores = Vec::with_capacity(dataset.samples.len());
    let mut labels = Vec::with_capacity(dataset.samples.len());
    for sample in &dataset.samples {
        scores.push(loaded.model.score(sample)?);
        labels.push(sample.label());
    }
    let (name, value) = match metric {
        EvalMetric::Auroc => ("auroc", auroc(&scores, &labels)?),
        EvalMetric::Accuracy => {
            let probs: Vec<f64> = scores.iter().map(|&s| predict_proba(s)).collect();
            ("accuracy", accuracy(&probs, &labels, 0.5))
        }
    };
    if json {
        println!(
            "{}",
            serde_json::json!({"metric": name, "value": value, "n_samples": labels.len()})
        );
    } else {
        println!("{name} = {value:.6} over {} samples", labels.len());
    }
    Ok(())
}

/* ------------------------------------------------------------ gradcheck -- */

pub fn cmd_gradcheck(cases: u64, seed: u64, json: bool) -> CmdResult {
    if cases == 0 {
        return Err(CliError::validation("need at least one case"));
    }
    let report = run_gradcheck(cases, seed)?;
    if json {
        println!(
            "{}",
            serde_json::to_string(&report).map_err(gman_core::Error::from)?
        );
    } else {
        for case in &report.cases {
            println!(
                "case seed {:>3}: d={} channels={} params={} max_rel_error={:.3e}",
                case.seed, case.feature_dim, case.channels, case.params_checked, case.max_rel_error
            );
        }
        println!(
            "gradcheck {}: max relative error {:.3e} (tolerance {:.1e})",
            if report.passed { "PASS" } else { "FAIL" },
            report.max_rel_error,
            report.tolerance
        );
    }
    if report.passed {
        Ok(())
    } else {
        Err(CliError::runtime(format!(
            "gradient check failed: max relative error {:.3e} exceeds {:.1e}",
            report.max_rel_error, report.tolerance
        )))
    }
}
