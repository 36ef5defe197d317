//! Reduce-on-plateau learning-rate schedule keyed to a "higher is better"
//! metric.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub initial_lr: f64,
    pub factor: f64,
    pub patience: usize,
    /// Absolute improvement required over the best value so far.
    pub threshold: f64,
    pub min_lr: Option<f64>,
    pub best: f64,
    pub epochs_since_improvement: usize,
    pub reductions: u32,
    pub current_lr: f64,
}

impl PlateauScheduler {
    pub fn new(initial_lr: f64, factor: f64, patience: usize, threshold: f64, min_lr: Option<f64>) -> Self {
        Self {
            initial_lr,
            factor,
            patience,
            threshold,
            min_lr,
            best: f64::NEG_INFINITY,
            epochs_since_improvement: 0,
            reductions: 0,
            current_lr: initial_lr,
        }
    }

    /// Records one epoch's metric. Returns `true` if the rate was reduced.
    pub fn step(&mut self, metric: f64) -> bool {
        if metric > self.best + self.threshold {
            self.best = metric;
            self.epochs_since_improvement = 0;
            return false;
        }
        self.epochs_since_improvement += 1;
        if self.epochs_since_improvement < self.patience {
            return false;
        }
        self.epochs_since_improvement = 0;
        let next = self.initial_lr * self.factor.powi(self.reductions as i32 + 1);
        if self.min_lr.is_some_and(|floor| next < floor) {
            return false;
        }
        self.reductions += 1;
        self.current_lr = next;
        true
    }
}
