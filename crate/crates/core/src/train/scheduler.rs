use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerConfig {
    pub factor: f64,
    pub patience: usize,
}

impl SchedulerConfig {
    pub fn stage1_default() -> Self {
        Self { factor: 0.9, patience: 5 }
    }

    pub fn stage2_default() -> Self {
        Self { factor: 0.5, patience: 5 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(Error::InvalidArgument(format!("scheduler factor must be in (0,1), got {}", self.factor)));
        }
        if self.patience == 0 {
            return Err(Error::InvalidArgument("scheduler patience must be positive".into()));
        }
        Ok(())
    }
}

/// Reduce-on-plateau: the learning rate is multiplied by `factor` once the
/// validation loss has failed to beat its best value for more than
/// `patience` consecutive epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateauScheduler {
    factor: f64,
    patience: usize,
    best_val: Option<f64>,
    epochs_since_improvement: usize,
}

impl PlateauScheduler {
    pub fn new(cfg: SchedulerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { factor: cfg.factor, patience: cfg.patience, best_val: None, epochs_since_improvement: 0 })
    }

    pub fn best_val(&self) -> Option<f64> {
        self.best_val
    }

    pub fn epochs_since_improvement(&self) -> usize {
        self.epochs_since_improvement
    }

    pub fn step(&mut self, val_loss: f64, lr: f64) -> Result<f64> {
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("validation loss is {val_loss}")));
        }
        match self.best_val {
            Some(best) if val_loss >= best => self.epochs_since_improvement += 1,
            _ => {
                self.best_val = Some(val_loss);
                self.epochs_since_improvement = 0;
            }
        }
        if self.epochs_since_improvement > self.patience {
            self.epochs_since_improvement = 0;
            return Ok(lr * self.factor);
        }
        Ok(lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sched() -> PlateauScheduler {
        PlateauScheduler::new(SchedulerConfig { factor: 0.9, patience: 5 }).unwrap()
    }

    #[test]
    fn decreasing_losses_keep_lr() {
        let mut s = sched();
        let mut lr = 1e-4;
        for k in 0..50 {
            lr = s.step(10.0 - k as f64 * 0.1, lr).unwrap();
        }
        assert_eq!(lr, 1e-4);
    }

    #[test]
    fn plateau_trace() {
        let mut s = sched();
        let mut lr = s.step(1.0, 1e-4).unwrap();
        let mut trace = vec![];
        for _ in 0..6 {
            lr = s.step(1.0, lr).unwrap();
            trace.push(lr);
        }
        assert_eq!(&trace[..5], &[1e-4; 5]);
        assert!((trace[5] - 9e-5).abs() < 1e-20);
        assert_eq!(s.epochs_since_improvement(), 0);
    }

    #[test]
    fn improvement_resets_counter() {
        let mut s = sched();
        let mut lr = s.step(1.0, 1e-4).unwrap();
        for _ in 0..4 {
            lr = s.step(1.5, lr).unwrap();
        }
        lr = s.step(0.5, lr).unwrap();
        assert_eq!(s.epochs_since_improvement(), 0);
        for _ in 0..5 {
            lr = s.step(0.5, lr).unwrap();
        }
        assert_eq!(lr, 1e-4);
    }

    #[test]
    fn rejects_non_finite_and_bad_config() {
        assert!(sched().step(f64::NAN, 1.0).is_err());
        assert!(PlateauScheduler::new(SchedulerConfig { factor: 1.0, patience: 5 }).is_err());
        assert!(PlateauScheduler::new(SchedulerConfig { factor: 0.5, patience: 0 }).is_err());
    }

    proptest! {
        #[test]
        fn lr_non_increasing(losses in prop::collection::vec(0.0f64..10.0, 1..80)) {
            let mut s = sched();
            let mut lr = 1e-2;
            for l in losses {
                let next = s.step(l, lr).unwrap();
                prop_assert!(next <= lr);
                prop_assert!(s.epochs_since_improvement() <= 5);
                lr = next;
            }
        }
    }
}
