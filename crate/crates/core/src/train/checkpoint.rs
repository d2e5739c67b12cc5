//! Binary checkpoint format. All integers are little-endian.
//!
//! ```text
//! magic        4 bytes  "SDCN"
//! version      u32
//! config       u32 byte length, then UTF-8 JSON {"network": .., "train": ..}
//! records      u32 count, then per record:
//!                u32 name length, name bytes (UTF-8),
//!                4 × u32 extents (n, c, h, w), u64 element count,
//!                element count × f32
//! optimizer    f64 momentum, f64 weight decay, u8 decay-BN flag,
//!              u32 count, then velocity records in the record layout above
//! epoch        u64 completed epochs
//! rng          u64 seed, u64 stream, u128 word position
//! ```
//!
//! Parameter records cover every trainable tensor and batch-norm running
//! statistic, in the network's visiting order.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{NetworkConfig, SdcNet};
use crate::params::Parameterized;
use crate::rng::{Rng, RngState};
use crate::tensor::{Shape4, Tensor};
use crate::train::optim::OptimizerState;
use crate::train::run::{TrainConfig, Trainer};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SDCN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub network: NetworkConfig,
    pub train: Option<TrainConfig>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: IndexMap<String, Tensor<f32>>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub decay_bn_params: bool,
    pub velocities: IndexMap<String, Tensor<f32>>,
    pub epoch: u64,
    pub rng: RngState,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            corrupt(format!("truncated while reading {what} at byte {} ({} bytes total)", self.pos, self.bytes.len()))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.array::<1>(what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    fn u128(&mut self, what: &str) -> Result<u128> {
        Ok(u128::from_le_bytes(self.array(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }

    fn records(&mut self, what: &str) -> Result<IndexMap<String, Tensor<f32>>> {
        let count = self.u32(what)? as usize;
        let mut out = IndexMap::new();
        for _ in 0..count {
            let len = self.u32("record name length")? as usize;
            let name = std::str::from_utf8(self.take(len, "record name")?)
                .map_err(|_| corrupt("record name is not UTF-8"))?
                .to_string();
            let mut dims = [0usize; 4];
            for d in &mut dims {
                *d = self.u32("record extents")? as usize;
            }
            let shape = Shape4::from(dims);
            let count = self.u64("record element count")? as usize;
            if shape.validate().is_err() || shape.numel() != count {
                return Err(corrupt(format!("record {name}: extents {shape} disagree with {count} elements")));
            }
            let raw = self.take(count.checked_mul(4).ok_or_else(|| corrupt("record too large"))?, "record values")?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            if out.insert(name.clone(), Tensor::from_vec(shape, data)?).is_some() {
                return Err(corrupt(format!("duplicate record {name}")));
            }
        }
        Ok(out)
    }
}

fn put_records(out: &mut Vec<u8>, records: &IndexMap<String, Tensor<f32>>) {
    out.extend((records.len() as u32).to_le_bytes());
    for (name, t) in records {
        out.extend((name.len() as u32).to_le_bytes());
        out.extend(name.as_bytes());
        for d in t.shape().as_array() {
            out.extend((d as u32).to_le_bytes());
        }
        out.extend((t.len() as u64).to_le_bytes());
        for v in t.data() {
            out.extend(v.to_le_bytes());
        }
    }
}

impl Checkpoint {
    pub fn capture(
        net: &SdcNet<f32>,
        optimizer: &OptimizerState<f32>,
        epoch: u64,
        rng: &Rng,
        train: Option<&TrainConfig>,
    ) -> Self {
        let mut params = IndexMap::new();
        net.visit_params("", &mut |name, _, t| {
            params.insert(name.to_string(), t.clone());
        });
        Checkpoint {
            meta: CheckpointMeta { network: net.config.clone(), train: train.cloned() },
            params,
            momentum: optimizer.momentum,
            weight_decay: optimizer.weight_decay,
            decay_bn_params: optimizer.decay_bn_params,
            velocities: optimizer.velocities.clone(),
            epoch,
            rng: rng.state(),
        }
    }

    pub fn from_trainer(trainer: &Trainer) -> Self {
        Self::capture(&trainer.net, &trainer.optimizer, trainer.epoch as u64, &trainer.rng, Some(&trainer.config))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let config = serde_json::to_vec(&self.meta).map_err(|e| corrupt(format!("config encoding: {e}")))?;
        let mut out = Vec::new();
        out.extend(CHECKPOINT_MAGIC);
        out.extend(CHECKPOINT_VERSION.to_le_bytes());
        out.extend((config.len() as u32).to_le_bytes());
        out.extend(config);
        put_records(&mut out, &self.params);
        out.extend(self.momentum.to_le_bytes());
        out.extend(self.weight_decay.to_le_bytes());
        out.push(self.decay_bn_params as u8);
        put_records(&mut out, &self.velocities);
        out.extend(self.epoch.to_le_bytes());
        out.extend(self.rng.seed.to_le_bytes());
        out.extend(self.rng.stream.to_le_bytes());
        out.extend(self.rng.word_pos.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.array::<4>("magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(corrupt(format!("bad magic {magic:?}, expected \"SDCN\"")));
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(corrupt(format!("unsupported format version {version}, expected {CHECKPOINT_VERSION}")));
        }
        let len = r.u32("config length")? as usize;
        let meta: CheckpointMeta =
            serde_json::from_slice(r.take(len, "config")?).map_err(|e| corrupt(format!("config: {e}")))?;
        let params = r.records("parameter count")?;
        let momentum = r.f64("momentum")?;
        let weight_decay = r.f64("weight decay")?;
        let decay_bn_params = match r.u8("decay flag")? {
            0 => false,
            1 => true,
            v => return Err(corrupt(format!("decay flag {v}"))),
        };
        let velocities = r.records("velocity count")?;
        let epoch = r.u64("epoch")?;
        let rng = RngState { seed: r.u64("rng seed")?, stream: r.u64("rng stream")?, word_pos: r.u128("rng position")? };
        if r.pos != bytes.len() {
            return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { meta, params, momentum, weight_decay, decay_bn_params, velocities, epoch, rng })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_bytes(&bytes)
    }

    /// Rebuilds the network; every record must match a tensor of the
    /// configured architecture by name and extents.
    pub fn network(&self) -> Result<SdcNet<f32>> {
        let mut net = SdcNet::build(self.meta.network.clone(), &mut Rng::new(0))?;
        let mut problems = Vec::new();
        let mut seen = 0;
        net.visit_params("", &mut |name, _, t| match self.params.get(name) {
            Some(saved) if saved.shape() == t.shape() => seen += 1,
            Some(saved) => problems.push(format!("{name}: saved {}, expected {}", saved.shape(), t.shape())),
            None => problems.push(format!("missing record {name}")),
        });
        if seen != self.params.len() {
            let mut known = Vec::new();
            net.visit_params("", &mut |name, _, _| known.push(name.to_string()));
            for name in self.params.keys().filter(|n| !known.contains(n)) {
                problems.push(format!("unknown parameter {name}"));
            }
        }
        if !problems.is_empty() {
            return Err(corrupt(problems.join("; ")));
        }
        net.visit_params_mut("", &mut |name, _, t| *t = self.params[name].clone());
        Ok(net)
    }

    pub fn optimizer(&self, net: &SdcNet<f32>) -> Result<OptimizerState<f32>> {
        let mut opt = OptimizerState::with_hyperparams(net, self.momentum, self.weight_decay, self.decay_bn_params);
        if opt.velocities.len() != self.velocities.len() {
            return Err(corrupt(format!("{} velocities for {} trainable records", self.velocities.len(), opt.velocities.len())));
        }
        for (name, v) in opt.velocities.iter_mut() {
            match self.velocities.get(name) {
                Some(saved) if saved.shape() == v.shape() => *v = saved.clone(),
                _ => return Err(corrupt(format!("velocity for {name} missing or misshapen"))),
            }
        }
        Ok(opt)
    }

    /// Trainer positioned after the saved epoch.
    pub fn trainer(&self) -> Result<Trainer> {
        let config = self.meta.train.clone().ok_or_else(|| corrupt("checkpoint carries no training configuration"))?;
        config.validate()?;
        let net = self.network()?;
        let optimizer = self.optimizer(&net)?;
        let schedule = config.schedule()?;
        Ok(Trainer { config, net, optimizer, schedule, rng: Rng::from_state(self.rng), epoch: self.epoch as usize })
    }
}

pub fn checkpoint_save(trainer: &Trainer, path: &Path) -> Result<()> {
    Checkpoint::from_trainer(trainer).save(path)
}

pub fn checkpoint_load(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_records, CifarFormat, Dataset, Split};

    fn trained() -> Trainer {
        let ds = Dataset::from_records(Split::Train, CifarFormat::Cifar10, synthetic_records(24, CifarFormat::Cifar10, 1), None)
            .unwrap();
        let cfg = TrainConfig { preset: "tiny".into(), batch_size: 12, epochs: 3, seed: 7, ..TrainConfig::default() };
        let mut t = Trainer::new(cfg).unwrap();
        t.run_epoch(&ds).unwrap();
        t
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let t = trained();
        let ck = Checkpoint::from_trainer(&t);
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(&bytes[..4], b"SDCN");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), CHECKPOINT_VERSION);

        let restored = back.trainer().unwrap();
        assert_eq!(restored.epoch, 1);
        assert_eq!(restored.optimizer, t.optimizer);
        assert_eq!(restored.rng.state(), t.rng.state());
        let mut a = Vec::new();
        let mut b = Vec::new();
        t.net.visit_params("", &mut |n, _, x| a.push((n.to_string(), x.clone())));
        restored.net.visit_params("", &mut |n, _, x| b.push((n.to_string(), x.clone())));
        assert_eq!(a, b);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = Checkpoint::from_trainer(&trained()).to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Checkpoint(m)) if m.contains("magic")));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Checkpoint(m)) if m.contains("version")));
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Checkpoint(m)) if m.contains("truncated")));
        let mut long = bytes.clone();
        long.push(0);
        assert!(Checkpoint::from_bytes(&long).is_err());
    }

    #[test]
    fn unknown_and_missing_records() {
        let mut ck = Checkpoint::from_trainer(&trained());
        ck.params.insert("bogus.weight".into(), Tensor::zeros([1, 1, 1, 1]).unwrap());
        assert!(matches!(ck.network(), Err(Error::Checkpoint(m)) if m.contains("unknown parameter bogus.weight")));
        let mut ck = Checkpoint::from_trainer(&trained());
        ck.params.shift_remove("fc.bias");
        assert!(matches!(ck.network(), Err(Error::Checkpoint(m)) if m.contains("missing record fc.bias")));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.ckpt");
        let t = trained();
        checkpoint_save(&t, &path).unwrap();
        let first = fs::read(&path).unwrap();
        checkpoint_load(&path).unwrap().save(&path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
        assert!(matches!(checkpoint_load(&dir.path().join("absent")), Err(Error::NotFound(_))));
    }
}
