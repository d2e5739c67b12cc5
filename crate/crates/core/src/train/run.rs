use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{batch_iterator, AugmentConfig, Dataset};
use crate::error::{Error, Result};
use crate::net::{preset, NetworkConfig, SdcNet};
use crate::ops::{argmax, softmax_cross_entropy};
use crate::rng::Rng;
use crate::train::optim::{sgd_step, OptimizerState, MOMENTUM, WEIGHT_DECAY};
use crate::train::schedule::{LrSchedule, LR_MAX, LR_MIN};

/// Fork keys under the run seed.
const INIT_STREAM: u64 = 0x494E_4954;
const EPOCH_STREAM: u64 = 0x4550_4F43;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub preset: String,
    pub classes: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Train on the first `subset_size` examples only.
    pub subset_size: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    /// Evaluate on the test split every this many epochs (0 disables).
    pub eval_every: usize,
    pub augment: bool,
    pub lr_max: f64,
    pub lr_min: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub decay_bn_params: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            preset: "g3-s".to_string(),
            classes: 10,
            batch_size: 128,
            epochs: 300,
            seed: 0,
            subset_size: None,
            checkpoint: None,
            eval_every: 1,
            augment: true,
            lr_max: LR_MAX,
            lr_min: LR_MIN,
            momentum: MOMENTUM,
            weight_decay: WEIGHT_DECAY,
            decay_bn_params: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.subset_size == Some(0) {
            return Err(Error::Config("subset size must be at least 1".into()));
        }
        self.schedule()?;
        Ok(())
    }

    pub fn schedule(&self) -> Result<LrSchedule> {
        LrSchedule::new(self.lr_max, self.lr_min, self.epochs)
    }

    pub fn network(&self) -> Result<NetworkConfig> {
        let cfg = preset(&self.preset)?.with_classes(self.classes);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn augment_config(&self) -> Option<AugmentConfig> {
        self.augment.then(AugmentConfig::default)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    /// Mean of the per-batch losses.
    pub mean_loss: f64,
    /// Fraction of training examples classified correctly during the epoch.
    pub accuracy: f64,
    pub steps: usize,
    pub batch_losses: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalMetrics {
    pub accuracy: f64,
    /// Mean per-example cross-entropy.
    pub mean_loss: f64,
    pub examples: usize,
}

/// One pass over `dataset`: forward, loss, backward and an optimizer step
/// per batch at the epoch's learning rate. Batches are shuffled and
/// augmented from `rng.fork(epoch)`.
pub fn train_epoch(
    net: &mut SdcNet<f32>,
    dataset: &Dataset,
    optimizer: &mut OptimizerState<f32>,
    schedule: &LrSchedule,
    epoch: usize,
    rng: &Rng,
    batch_size: usize,
    augment: Option<AugmentConfig>,
) -> Result<EpochMetrics> {
    let lr = schedule.lr(epoch);
    let epoch_rng = rng.fork(EPOCH_STREAM).fork(epoch as u64);
    let batches = batch_iterator(dataset, batch_size, true, &epoch_rng, augment)?;
    let mut batch_losses = Vec::with_capacity(batches.batch_count());
    let mut correct = 0usize;
    let mut seen = 0usize;
    for (b, batch) in batches.enumerate() {
        let (scores, tape) = net.forward_training(&batch.images)?;
        let (loss, grad) = softmax_cross_entropy(&scores, &batch.labels)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { batch: b, lr, loss });
        }
        correct += argmax(&scores).iter().zip(&batch.labels).filter(|(p, l)| p == l).count();
        seen += batch.labels.len();
        let grads = net.backward(&tape, &grad)?;
        sgd_step(net, &grads.params, optimizer, lr)?;
        batch_losses.push(loss);
    }
    let steps = batch_losses.len();
    Ok(EpochMetrics {
        epoch,
        lr,
        mean_loss: batch_losses.iter().sum::<f64>() / steps as f64,
        accuracy: correct as f64 / seen as f64,
        steps,
        batch_losses,
    })
}

/// Inference-mode top-1 accuracy and loss over the whole split, unaugmented.
pub fn evaluate(net: &SdcNet<f32>, dataset: &Dataset, batch_size: usize) -> Result<EvalMetrics> {
    let mut correct = 0usize;
    let mut loss_sum = 0f64;
    for batch in batch_iterator(dataset, batch_size, false, &Rng::new(0), None)? {
        let scores = net.forward_inference(&batch.images)?;
        let (loss, _) = softmax_cross_entropy(&scores, &batch.labels)?;
        loss_sum += loss * batch.labels.len() as f64;
        correct += argmax(&scores).iter().zip(&batch.labels).filter(|(p, l)| p == l).count();
    }
    let n = dataset.len();
    Ok(EvalMetrics { accuracy: correct as f64 / n as f64, mean_loss: loss_sum / n as f64, examples: n })
}

/// Network, optimizer and schedule for a run, resumable at epoch boundaries.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub net: SdcNet<f32>,
    pub optimizer: OptimizerState<f32>,
    pub schedule: LrSchedule,
    pub rng: Rng,
    /// Number of completed epochs; the next epoch to run.
    pub epoch: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let rng = Rng::new(config.seed);
        let net = SdcNet::build(config.network()?, &mut rng.fork(INIT_STREAM))?;
        let optimizer = OptimizerState::with_hyperparams(&net, config.momentum, config.weight_decay, config.decay_bn_params);
        let schedule = config.schedule()?;
        Ok(Trainer { config, net, optimizer, schedule, rng, epoch: 0 })
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    pub fn run_epoch(&mut self, dataset: &Dataset) -> Result<EpochMetrics> {
        let metrics = train_epoch(
            &mut self.net,
            dataset,
            &mut self.optimizer,
            &self.schedule,
            self.epoch,
            &self.rng,
            self.config.batch_size,
            self.config.augment_config(),
        )?;
        self.epoch += 1;
        Ok(metrics)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_records, CifarFormat, Split};
    use crate::params::Parameterized;

    fn dataset(n: usize) -> Dataset {
        Dataset::from_records(Split::Train, CifarFormat::Cifar10, synthetic_records(n, CifarFormat::Cifar10, 5), None).unwrap()
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig { preset: "tiny".into(), batch_size: 16, epochs: 4, seed: 3, augment: true, ..TrainConfig::default() }
    }

    fn snapshot(net: &SdcNet<f32>) -> Vec<(String, Vec<f32>)> {
        let mut out = Vec::new();
        net.visit_params("", &mut |n, role, t| {
            if role.is_trainable() {
                out.push((n.to_string(), t.data().to_vec()));
            }
        });
        out
    }

    #[test]
    fn one_step_per_batch() {
        let ds = dataset(128);
        let mut t = Trainer::new(TrainConfig { batch_size: 128, ..tiny_config() }).unwrap();
        let m = t.run_epoch(&ds).unwrap();
        assert_eq!(m.steps, 1);
        assert_eq!(m.batch_losses.len(), 1);
        assert_eq!(t.epoch, 1);
    }

    #[test]
    fn zero_lr_leaves_weights_fixed() {
        let ds = dataset(32);
        let cfg = TrainConfig { lr_max: 0.0, lr_min: 0.0, weight_decay: 0.0, augment: false, ..tiny_config() };
        let mut t = Trainer::new(cfg).unwrap();
        let before = snapshot(&t.net);
        t.run_epoch(&ds).unwrap();
        assert_eq!(before, snapshot(&t.net));
    }

    #[test]
    fn untrained_loss_near_log_classes() {
        let ds = dataset(64);
        let mut t = Trainer::new(tiny_config()).unwrap();
        let batch = batch_iterator(&ds, 64, false, &Rng::new(0), None).unwrap().next().unwrap();
        let (scores, _) = t.net.forward_training(&batch.images).unwrap();
        let (loss, _) = softmax_cross_entropy(&scores, &batch.labels).unwrap();
        assert!((loss - 10f64.ln()).abs() <= 0.3, "{loss}");
        let m = evaluate(&t.net, &ds, 32).unwrap();
        assert_eq!(evaluate(&t.net, &ds, 32).unwrap(), m);
        assert_eq!(m.examples, 64);
    }

    #[test]
    fn huge_lr_diverges_with_report() {
        let ds = dataset(64);
        let cfg = TrainConfig { lr_max: 1e30, lr_min: 1e30, ..tiny_config() };
        let mut t = Trainer::new(cfg).unwrap();
        let mut result = Ok(());
        for _ in 0..3 {
            if let Err(e) = t.run_epoch(&ds) {
                result = Err(e);
                break;
            }
        }
        match result {
            Err(Error::Divergence { lr, .. }) => assert_eq!(lr, 1e30),
            Err(e) => panic!("expected divergence, got {e}"),
            Ok(()) => panic!("expected divergence"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { preset: "nope".into(), ..TrainConfig::default() }.network().is_err());
    }
}
