//! Grid sweeps over named hyperparameters.

use serde::{Deserialize, Serialize};

use crate::data::{PartitionSpec, TrajectorySet};
use crate::error::{Error, Result};
use crate::extgnan::ArchConfig;
use crate::training::{fit, EarlyStopMetric, MetricDirection, TrainConfig};

/// Named hyperparameter -> candidate values. Cells are enumerated in
/// deterministic order: the Cartesian product with the last entry varying
/// fastest.
///
/// Supported names: `max_lr`, `min_lr`, `weight_decay`, `batch_size`,
/// `patience`, `factor`, `max_epochs`, `hidden_width`, `n_layers`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub entries: Vec<(String, Vec<f64>)>,
}

impl SweepGrid {
    pub fn cell_count(&self) -> usize {
        self.entries.iter().map(|(_, v)| v.len().max(1)).product()
    }

    fn cells(&self) -> Vec<Vec<(String, f64)>> {
        let mut cells: Vec<Vec<(String, f64)>> = vec![Vec::new()];
        for (name, values) in &self.entries {
            let mut next = Vec::with_capacity(cells.len() * values.len());
            for cell in &cells {
                for &v in values {
                    let mut c = cell.clone();
                    c.push((name.clone(), v));
                    next.push(c);
                }
            }
            cells = next;
        }
        cells
    }
}

fn apply_setting(
    config: &mut TrainConfig,
    arch: &mut ArchConfig,
    name: &str,
    value: f64,
) -> Result<()> {
    match name {
        "max_lr" => config.max_lr = value,
        "min_lr" => config.min_lr = value,
        "weight_decay" => config.weight_decay = value,
        "factor" => config.factor = value,
        "batch_size" => config.batch_size = value as usize,
        "patience" => config.patience = value as usize,
        "max_epochs" => config.max_epochs = value as usize,
        "hidden_width" => {
            let width = value as usize;
            arch.hidden_widths = vec![width; arch.hidden_widths.len().max(1)];
        }
        "n_layers" => {
            let layers = value as usize;
            let width = arch.hidden_widths.first().copied().unwrap_or(32);
            arch.hidden_widths = vec![width; layers];
        }
        other => {
            return Err(Error::InvalidSpec(format!(
                "unknown sweep parameter '{other}' (supported: max_lr, min_lr, weight_decay, \
                 batch_size, patience, factor, max_epochs, hidden_width, n_layers)"
            )))
        }
    }
    Ok(())
}

/// Result of one completed sweep cell: per-seed validation metrics at the
/// best epoch, plus their mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub settings: Vec<(String, f64)>,
    pub seed_metrics: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum SweepOutcome {
    Completed(SweepCell),
    Failed {
        settings: Vec<(String, f64)>,
        error: String,
    },
}

/// Train every cell of the grid with `n_seeds` seeds (config.seed, +1, ...),
/// rank completed cells by mean validation metric (best first), and append
/// failed cells after them. A failing cell is recorded, not fatal.
pub fn grid_search(
    grid: &SweepGrid,
    train: &[TrajectorySet],
    val: &[TrajectorySet],
    partition: &PartitionSpec,
    base_arch: &ArchConfig,
    base_config: &TrainConfig,
    n_seeds: u64,
) -> Result<Vec<SweepOutcome>> {
    if n_seeds == 0 {
        return Err(Error::InvalidSpec("n_seeds must be >= 1".into()));
    }
    let mut completed: Vec<SweepCell> = Vec::new();
    let mut failed: Vec<SweepOutcome> = Vec::new();

    for cell in grid.cells() {
        let mut config = base_config.clone();
        let mut arch = base_arch.clone();
        let mut setting_err = None;
        for (name, value) in &cell {
            if let Err(e) = apply_setting(&mut config, &mut arch, name, *value) {
                setting_err = Some(e);
                break;
            }
        }
        if let Some(e) = setting_err {
            failed.push(SweepOutcome::Failed {
                settings: cell,
                error: e.to_string(),
            });
            continue;
        }

        let mut seed_metrics = Vec::with_capacity(n_seeds as usize);
        let mut cell_error = None;
        for s in 0..n_seeds {
            config.seed = base_config.seed.wrapping_add(s);
            match fit(train, val, partition, &arch, &config) {
                Ok(result) => match result.status {
                    crate::training::FitStatus::Completed => seed_metrics.push(result.best_metric),
                    crate::training::FitStatus::Diverged { epoch } => {
                        cell_error = Some(format!("diverged at epoch {epoch}"));
                        break;
                    }
                },
                Err(e) => {
                    cell_error = Some(e.to_string());
                    break;
                }
            }
        }
        match cell_error {
            Some(error) => failed.push(SweepOutcome::Failed {
                settings: cell,
                error,
            }),
            None => {
                let mean = seed_metrics.iter().sum::<f64>() / seed_metrics.len() as f64;
                let var = seed_metrics.iter().map(|m| (m - mean).powi(2)).sum::<f64>()
                    / seed_metrics.len() as f64;
                completed.push(SweepCell {
                    settings: cell,
                    seed_metrics,
                    mean,
                    std: var.sqrt(),
                });
            }
        }
    }

    match base_config.early_stop_metric.direction() {
        MetricDirection::Minimize => {
            completed.sort_by(|a, b| a.mean.partial_cmp(&b.mean).expect("finite metrics"))
        }
        MetricDirection::Maximize => {
            completed.sort_by(|a, b| b.mean.partial_cmp(&a.mean).expect("finite metrics"))
        }
    }
    let mut out: Vec<SweepOutcome> = completed.into_iter().map(SweepOutcome::Completed).collect();
    out.extend(failed);
    Ok(out)
}

/// Convenience: the metric the sweep optimizes, for display.
pub fn metric_name(metric: EarlyStopMetric) -> &'static str {
    match metric {
        EarlyStopMetric::ValLoss => "val_loss",
        EarlyStopMetric::ValAuroc => "val_auroc",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use crate::synth;

    fn tiny_setup() -> (Vec<TrajectorySet>, PartitionSpec, ArchConfig, TrainConfig) {
        let data = synth::feature_xor();
        let partition = synth::feature_xor_grouped_partition();
        let arch = ArchConfig {
            hidden_widths: vec![6],
            activation: Activation::Relu,
        };
        let config = TrainConfig {
            max_epochs: 20,
            batch_size: 4,
            max_lr: 3e-2,
            min_lr: 1e-4,
            weight_decay: 0.0,
            seed: 5,
            ..TrainConfig::default()
        };
        (data.samples, partition, arch, config)
    }

    #[test]
    fn one_cell_grid_matches_single_fit() {
        let (samples, partition, arch, config) = tiny_setup();
        let grid = SweepGrid {
            entries: vec![("max_lr".into(), vec![3e-2])],
        };
        let outcome = grid_search(&grid, &samples, &[], &partition, &arch, &config, 1).unwrap();
        assert_eq!(outcome.len(), 1);
        let direct = fit(&samples, &[], &partition, &arch, &config).unwrap();
        match &outcome[0] {
            SweepOutcome::Completed(cell) => {
                assert_eq!(cell.seed_metrics.len(), 1);
                assert_eq!(cell.seed_metrics[0], direct.best_metric);
                assert_eq!(cell.std, 0.0);
            }
            SweepOutcome::Failed { .. } => panic!("cell should complete"),
        }
    }

    #[test]
    fn divergent_cell_is_recorded_not_fatal() {
        let (samples, partition, arch, config) = tiny_setup();
        let grid = SweepGrid {
            entries: vec![("max_lr".into(), vec![3e-2, 1e155])],
        };
        let outcome = grid_search(&grid, &samples, &[], &partition, &arch, &config, 1).unwrap();
        assert_eq!(outcome.len(), 2);
        let completed = outcome
            .iter()
            .filter(|o| matches!(o, SweepOutcome::Completed(_)))
            .count();
        let failed = outcome
            .iter()
            .filter(|o| matches!(o, SweepOutcome::Failed { .. }))
            .count();
        assert_eq!((completed, failed), (1, 1));
    }

    #[test]
    fn mean_and_std_over_seeds() {
        let (samples, partition, arch, config) = tiny_setup();
        let grid = SweepGrid {
            entries: vec![("hidden_width".into(), vec![6.0])],
        };
        let outcome = grid_search(&grid, &samples, &[], &partition, &arch, &config, 3).unwrap();
        match &outcome[0] {
            SweepOutcome::Completed(cell) => {
                assert_eq!(cell.seed_metrics.len(), 3);
                let mean = cell.seed_metrics.iter().sum::<f64>() / 3.0;
                assert!((cell.mean - mean).abs() < 1e-15);
            }
            SweepOutcome::Failed { error, .. } => panic!("cell failed: {error}"),
        }
    }

    #[test]
    fn unknown_parameter_is_a_failed_cell() {
        let (samples, partition, arch, config) = tiny_setup();
        let grid = SweepGrid {
            entries: vec![("dropout".into(), vec![0.5])],
        };
        let outcome = grid_search(&grid, &samples, &[], &partition, &arch, &config, 1).unwrap();
        assert!(
            matches!(&outcome[0], SweepOutcome::Failed { error, .. } if error.contains("dropout"))
        );
    }
}
