use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LR_MAX: f64 = 0.1;
pub const LR_MIN: f64 = 0.002;

/// Half-cosine decay from `lr_max` at epoch 0 to `lr_min` at epoch `total_epochs`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr_max: f64,
    pub lr_min: f64,
    pub total_epochs: usize,
}

impl LrSchedule {
    pub fn new(lr_max: f64, lr_min: f64, total_epochs: usize) -> Result<Self> {
        if total_epochs == 0 {
            return Err(Error::InvalidArgument("schedule needs at least one epoch".into()));
        }
        if !(lr_min.is_finite() && lr_max.is_finite() && 0.0 <= lr_min && lr_min <= lr_max) {
            return Err(Error::InvalidArgument(format!("need 0 <= lr_min <= lr_max, got {lr_min} and {lr_max}")));
        }
        Ok(LrSchedule { lr_max, lr_min, total_epochs })
    }

    /// The standard recipe: 0.1 down to 0.002.
    pub fn recipe(total_epochs: usize) -> Result<Self> {
        Self::new(LR_MAX, LR_MIN, total_epochs)
    }

    pub fn lr(&self, epoch: usize) -> f64 {
        cosine_lr(self, epoch)
    }
}

/// `lr_min + ½(lr_max − lr_min)(1 + cos(π t / T))`, clamped to `lr_min` past `T`.
pub fn cosine_lr(schedule: &LrSchedule, epoch: usize) -> f64 {
    let t = epoch as f64;
    let total = schedule.total_epochs as f64;
    if epoch >= schedule.total_epochs {
        return schedule.lr_min;
    }
    let lr = schedule.lr_min + 0.5 * (schedule.lr_max - schedule.lr_min) * (1.0 + (std::f64::consts::PI * t / total).cos());
    lr.clamp(schedule.lr_min, schedule.lr_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn endpoints_and_midpoint() {
        let s = LrSchedule::recipe(300).unwrap();
        assert_eq!(cosine_lr(&s, 0), 0.1);
        assert_eq!(cosine_lr(&s, 300), 0.002);
        assert_eq!(cosine_lr(&s, 301), 0.002);
        assert!((cosine_lr(&s, 150) - 0.051).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_schedules() {
        assert!(LrSchedule::new(0.1, 0.002, 0).is_err());
        assert!(LrSchedule::new(0.01, 0.1, 10).is_err());
    }

    proptest! {
        #[test]
        fn monotone_and_bounded(total in 1usize..500) {
            let s = LrSchedule::recipe(total).unwrap();
            let mut prev = f64::INFINITY;
            for t in 0..=total {
                let lr = cosine_lr(&s, t);
                prop_assert!((LR_MIN..=LR_MAX).contains(&lr));
                prop_assert!(lr <= prev);
                prev = lr;
            }
        }
    }
}
