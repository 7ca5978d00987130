//! Reduce-on-plateau learning-rate schedule.

/// Whether smaller or larger metric values count as improvement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricDirection {
    Minimize,
    Maximize,
}

/// Multiplies the learning rate by `factor` once the monitored metric has
/// gone `patience` consecutive epochs without improving, never dropping below
/// `min_lr`. The rate is non-increasing over a run.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    factor: f64,
    patience: usize,
    min_lr: f64,
    direction: MetricDirection,
    lr: f64,
    best: Option<f64>,
    epochs_since_best: usize,
}

impl PlateauScheduler {
    pub fn new(
        max_lr: f64,
        min_lr: f64,
        factor: f64,
        patience: usize,
        direction: MetricDirection,
    ) -> Self {
        Self {
            factor,
            patience,
            min_lr,
            direction,
            lr: max_lr,
            best: None,
            epochs_since_best: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    fn improved(&self, metric: f64) -> bool {
        match (self.best, self.direction) {
            (None, _) => true,
            (Some(best), MetricDirection::Minimize) => metric < best,
            (Some(best), MetricDirection::Maximize) => metric > best,
        }
    }

    /// Record one epoch's metric; returns the learning rate to use next.
    pub fn step(&mut self, metric: f64) -> f64 {
        if self.improved(metric) {
            self.best = Some(metric);
            self.epochs_since_best = 0;
        } else {
            self.epochs_since_best += 1;
            if self.epochs_since_best >= self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.epochs_since_best = 0;
            }
        }
        self.lr
    }
}
