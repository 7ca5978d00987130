//! Loss, end-to-end gradients, the epoch loop, and sweeps.
//!
//! Training is deliberately deterministic: batches are shuffled by the seeded
//! generator, per-sample gradients are averaged in fixed order, and the
//! optimizer has a single writer, so a (data, config, seed) triple reproduces
//! its training log exactly.

pub mod gradcheck;
pub mod metrics;
pub mod scheduler;
pub mod sweep;

use serde::{Deserialize, Serialize};

use crate::data::{PartitionSpec, TrajectorySet};
use crate::error::{Error, Result};
use crate::extgnan::ArchConfig;
use crate::mixer::{predict_proba, GmanGrads, GmanModel, GmanParams};
use crate::nn::{AdamConfig, OptimState, SplitMix64};

pub use gradcheck::{check_case, run_gradcheck, GradCheckReport, GRADCHECK_TOLERANCE};
pub use metrics::{accuracy, auroc};
pub use scheduler::{MetricDirection, PlateauScheduler};
pub use sweep::{grid_search, SweepCell, SweepGrid, SweepOutcome};

/// Which validation quantity drives the plateau scheduler and checkpoint
/// selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarlyStopMetric {
    ValLoss,
    ValAuroc,
}

impl EarlyStopMetric {
    pub fn direction(self) -> MetricDirection {
        match self {
            EarlyStopMetric::ValLoss => MetricDirection::Minimize,
            EarlyStopMetric::ValAuroc => MetricDirection::Maximize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub max_lr: f64,
    pub min_lr: f64,
    /// Plateau scheduler multiplier, in (0, 1).
    pub factor: f64,
    /// Epochs without improvement before the learning rate is reduced.
    pub patience: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub early_stop_metric: EarlyStopMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 500,
            batch_size: 16,
            max_lr: 1e-3,
            min_lr: 1e-5,
            factor: 0.5,
            patience: 20,
            weight_decay: 1e-4,
            seed: 0,
            early_stop_metric: EarlyStopMetric::ValLoss,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidSpec(
                "max_epochs and batch_size must be positive".into(),
            ));
        }
        if !self.min_lr.is_finite() || !self.max_lr.is_finite() || self.min_lr > self.max_lr {
            return Err(Error::InvalidSpec("need finite min_lr <= max_lr".into()));
        }
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(Error::InvalidSpec("factor must lie in (0, 1)".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidSpec("patience must be >= 1".into()));
        }
        Ok(())
    }
}

/// Binary cross-entropy on a probability, clamped away from 0 and 1.
pub fn bce_loss(prob: f64, label: u8) -> f64 {
    let p = prob.clamp(1e-12, 1.0 - 1e-12);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Binary cross-entropy evaluated on the raw score. Numerically this fuses
/// the logistic link with the log loss: `max(s,0) - s*y + ln(1 + exp(-|s|))`,
/// equivalent to `bce_loss(predict_proba(s), y)` without the saturation.
pub fn bce_with_logits(score: f64, label: u8) -> f64 {
    let y = f64::from(label);
    score.max(0.0) - score * y + (-score.abs()).exp().ln_1p()
}

/// Loss and exact gradients for one sample through the whole pipeline:
/// link, score, subset mixing, encoders.
pub fn backward_sample(
    model: &GmanModel,
    sample: &TrajectorySet,
    label: u8,
) -> Result<(f64, GmanGrads)> {
    let trace = model.score_traced(sample)?;
    let loss = bce_with_logits(trace.score, label);
    // d loss / d score for the fused logistic + BCE head.
    let d_score = predict_proba(trace.score) - f64::from(label);
    let grads = model.backward(sample, &trace, d_score)?;
    Ok((loss, grads))
}

/// One optimizer state per network in the model, stepped in lockstep.
pub struct GmanOptimizer {
    subsets: Vec<SubsetOptim>,
}

struct SubsetOptim {
    rho: OptimState,
    psi: Vec<OptimState>,
    deepset: Option<(OptimState, OptimState)>,
}

impl GmanOptimizer {
    pub fn new(params: &GmanParams, config: AdamConfig) -> Self {
        let subsets = params
            .subsets
            .iter()
            .map(|s| SubsetOptim {
                rho: OptimState::new(&s.encoder.rho, config.clone()),
                psi: s
                    .encoder
                    .psi
                    .iter()
                    .map(|p| OptimState::new(p, config.clone()))
                    .collect(),
                deepset: s.deepset.as_ref().map(|d| {
                    (
                        OptimState::new(&d.f, config.clone()),
                        OptimState::new(&d.g, config.clone()),
                    )
                }),
            })
            .collect();
        Self { subsets }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        for s in &mut self.subsets {
            s.rho.config.learning_rate = lr;
            for p in &mut s.psi {
                p.config.learning_rate = lr;
            }
            if let Some((f, g)) = s.deepset.as_mut() {
                f.config.learning_rate = lr;
                g.config.learning_rate = lr;
            }
        }
    }

    pub fn step(&mut self, params: &mut GmanParams, grads: &GmanGrads) -> Result<()> {
        for ((opt, p), g) in self
            .subsets
            .iter_mut()
            .zip(&mut params.subsets)
            .zip(&grads.subsets)
        {
            opt.rho.step(&mut p.encoder.rho, &g.encoder.rho)?;
            for ((o, net), gb) in opt
                .psi
                .iter_mut()
                .zip(&mut p.encoder.psi)
                .zip(&g.encoder.psi)
            {
                o.step(net, gb)?;
            }
            if let (Some((of, og)), Some(ds), Some((gf, gg))) =
                (opt.deepset.as_mut(), p.deepset.as_mut(), g.deepset.as_ref())
            {
                of.step(&mut ds.f, gf)?;
                og.step(&mut ds.g, gg)?;
            }
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_metric: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum FitStatus {
    Completed,
    /// A non-finite loss or gradient appeared; training stopped early and the
    /// result carries the best checkpoint seen before the blow-up.
    Diverged {
        epoch: usize,
    },
}

pub struct FitResult {
    pub model: GmanModel,
    pub log: Vec<EpochRecord>,
    pub status: FitStatus,
    pub best_epoch: usize,
    pub best_metric: f64,
}

/// Mean loss and the configured metric over a split.
fn evaluate_split(
    model: &GmanModel,
    samples: &[TrajectorySet],
    metric: EarlyStopMetric,
) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut scores = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    for s in samples {
        let score = model.score(s)?;
        loss += bce_with_logits(score, s.label());
        scores.push(score);
        labels.push(s.label());
    }
    let loss = loss / samples.len() as f64;
    let metric_value = match metric {
        EarlyStopMetric::ValLoss => loss,
        EarlyStopMetric::ValAuroc => auroc(&scores, &labels)?,
    };
    Ok((loss, metric_value))
}

/// Mini-batch training with a plateau schedule, returning the checkpoint
/// with the best validation metric.
///
/// `train` and `val` must be disjoint. An empty `val` is allowed for tiny
/// datasets: the schedule and checkpoint selection then run on the training
/// split itself.
pub fn fit(
    train: &[TrajectorySet],
    val: &[TrajectorySet],
    partition: &PartitionSpec,
    arch: &ArchConfig,
    config: &TrainConfig,
) -> Result<FitResult> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Training("training split is empty".into()));
    }

    let mut model = GmanModel::init(partition.clone(), arch, config.seed)?;
    model.params.validate(partition)?;
    let adam = AdamConfig {
        learning_rate: config.max_lr,
        weight_decay: config.weight_decay,
        ..AdamConfig::default()
    };
    let mut optimizer = GmanOptimizer::new(&model.params, adam);
    let mut scheduler = PlateauScheduler::new(
        config.max_lr,
        config.min_lr,
        config.factor,
        config.patience,
        config.early_stop_metric.direction(),
    );
    let direction = config.early_stop_metric.direction();
    let eval_on: &[TrajectorySet] = if val.is_empty() { train } else { val };

    let mut shuffle_rng = SplitMix64::new(config.seed ^ 0xD6E8_FEB8_6659_FD93);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut log = Vec::with_capacity(config.max_epochs);
    let mut best_params = model.params.clone();
    let mut best_metric = match direction {
        MetricDirection::Minimize => f64::INFINITY,
        MetricDirection::Maximize => f64::NEG_INFINITY,
    };
    let mut best_epoch = 0;

    for epoch in 0..config.max_epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut diverged = false;

        'batches: for batch in order.chunks(config.batch_size) {
            let mut batch_grads: Option<GmanGrads> = None;
            let mut batch_loss = 0.0;
            for &idx in batch {
                let sample = &train[idx];
                let (loss, grads) = match backward_sample(&model, sample, sample.label()) {
                    Ok(v) => v,
                    Err(Error::NonFinite { .. }) => {
                        diverged = true;
                        break 'batches;
                    }
                    Err(e) => return Err(e),
                };
                batch_loss += loss;
                match batch_grads.as_mut() {
                    Some(acc) => acc.add_assign(&grads),
                    None => batch_grads = Some(grads),
                }
            }
            if !batch_loss.is_finite() {
                diverged = true;
                break 'batches;
            }
            let mut grads = batch_grads.expect("non-empty batch");
            grads.scale(1.0 / batch.len() as f64);
            match optimizer.step(&mut model.params, &grads) {
                Ok(()) => {}
                Err(Error::NonFinite { .. }) => {
                    diverged = true;
                    break 'batches;
                }
                Err(e) => return Err(e),
            }
            epoch_loss += batch_loss;
        }

        if diverged || !model.params.is_finite() {
            return Ok(FitResult {
                model: GmanModel {
                    partition: model.partition,
                    params: best_params,
                },
                log,
                status: FitStatus::Diverged { epoch },
                best_epoch,
                best_metric,
            });
        }

        let train_loss = epoch_loss / train.len() as f64;
        let (val_loss, val_metric) = match evaluate_split(&model, eval_on, config.early_stop_metric)
        {
            Ok(v) if v.0.is_finite() => v,
            Ok(_) | Err(Error::NonFinite { .. }) => {
                return Ok(FitResult {
                    model: GmanModel {
                        partition: model.partition,
                        params: best_params,
                    },
                    log,
                    status: FitStatus::Diverged { epoch },
                    best_epoch,
                    best_metric,
                })
            }
            Err(e) => return Err(e),
        };
        let improved = match direction {
            MetricDirection::Minimize => val_metric < best_metric,
            MetricDirection::Maximize => val_metric > best_metric,
        };
        if improved {
            best_metric = val_metric;
            best_epoch = epoch;
            best_params = model.params.clone();
        }
        let lr = scheduler.step(val_metric);
        optimizer.set_learning_rate(lr);
        log.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_metric,
            lr,
        });
    }

    Ok(FitResult {
        model: GmanModel {
            partition: model.partition,
            params: best_params,
        },
        log,
        status: FitStatus::Completed,
        best_epoch,
        best_metric,
    })
}
