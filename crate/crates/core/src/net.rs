//! SdcNet: group-convolution stem, stages of SdcBlocks, average pooling and a
//! fully connected classifier.

use serde::{Deserialize, Serialize};

use crate::block::{next_id, BlockTape, BlockVariant, MismatchShortcut, SdcBlock, SdcBlockConfig};
use crate::error::{ensure, Error, Result};
use crate::ops::{
    argmax, avgpool_backward, avgpool_forward, relu, relu_backward, BatchNormCache, BatchNormLayer, ConvLayer,
    ConvSpec, LinearLayer,
};
use crate::params::{extend_prefixed, join, Gradients, ParamVisitor, ParamVisitorMut, Parameterized};
use crate::rng::Rng;
use crate::tensor::{Scalar, Shape4, Tensor};

/// Input images are `3 × 32 × 32`.
pub const INPUT_CHANNELS: usize = 3;
pub const INPUT_SIZE: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub out_channels: usize,
    /// Stride of the stage's first block; later blocks use stride 1.
    pub stride: usize,
    pub repeat: usize,
    pub groups: usize,
    pub expansion: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StemSpec {
    pub out_channels: usize,
    pub groups: usize,
    pub kernel: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub pool_kernel: usize,
    pub pool_stride: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub name: String,
    pub stem: StemSpec,
    pub stages: Vec<StageSpec>,
    pub head: HeadSpec,
    pub classes: usize,
    /// Block used wherever a stage starts with stride 2: `S2` or `S2F`.
    pub s2_variant: BlockVariant,
    #[serde(default)]
    pub mismatch: MismatchShortcut,
}

/// Preset names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 5] = ["g4-l", "g3-s", "g4-l-f", "g3-s-f", "tiny"];

fn stages(table: &[(usize, usize, usize)], groups: usize, expansion: usize) -> Vec<StageSpec> {
    table
        .iter()
        .enumerate()
        .map(|(i, &(out_channels, stride, repeat))| StageSpec {
            out_channels,
            stride,
            repeat,
            groups,
            // the first stage runs without expansion, E applies from stage 2 on
            expansion: if i == 0 { 1 } else { expansion },
        })
        .collect()
}

const G4L_TABLE: [(usize, usize, usize); 7] =
    [(24, 1, 1), (36, 1, 2), (72, 2, 3), (96, 2, 4), (144, 1, 3), (300, 2, 3), (600, 1, 1)];
const G3S_TABLE: [(usize, usize, usize); 7] =
    [(24, 1, 1), (24, 1, 2), (36, 2, 3), (72, 2, 4), (96, 1, 3), (150, 2, 3), (300, 1, 1)];

/// Looks up a preset by name (case-insensitive, with or without the `sdcnet-` prefix).
pub fn preset(name: &str) -> Result<NetworkConfig> {
    let key = name.to_ascii_lowercase();
    let key = key.strip_prefix("sdcnet-").unwrap_or(&key);
    let named = |display: &str, table: &[(usize, usize, usize)], g: usize, variant: BlockVariant| NetworkConfig {
        name: display.to_string(),
        stem: StemSpec { out_channels: 36, groups: 3, kernel: 3 },
        stages: stages(table, g, 6),
        head: HeadSpec { pool_kernel: 4, pool_stride: 2 },
        classes: 10,
        s2_variant: variant,
        mismatch: MismatchShortcut::Projection,
    };
    let cfg = match key {
        "g4-l" => named("SdcNet-G4-L", &G4L_TABLE, 4, BlockVariant::S2),
        "g3-s" => named("SdcNet-G3-S", &G3S_TABLE, 3, BlockVariant::S2),
        "g4-l-f" => named("SdcNet-G4-L-F", &G4L_TABLE, 4, BlockVariant::S2F),
        "g3-s-f" => named("SdcNet-G3-S-F", &G3S_TABLE, 3, BlockVariant::S2F),
        "tiny" => NetworkConfig {
            name: "Tiny".to_string(),
            stem: StemSpec { out_channels: 12, groups: 3, kernel: 3 },
            stages: [(8, 1, 1), (16, 2, 1), (24, 2, 1)]
                .iter()
                .map(|&(out_channels, stride, repeat)| StageSpec { out_channels, stride, repeat, groups: 2, expansion: 3 })
                .collect(),
            head: HeadSpec { pool_kernel: 4, pool_stride: 4 },
            classes: 10,
            s2_variant: BlockVariant::S2,
            mismatch: MismatchShortcut::Projection,
        },
        _ => {
            return Err(Error::Config(format!(
                "unknown preset {name:?}; expected one of {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(cfg)
}

/// One block of the expanded stage table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockPlan {
    pub stage: usize,
    pub index_in_stage: usize,
    pub config: SdcBlockConfig,
    pub input: Shape4,
    pub output: Shape4,
}

impl NetworkConfig {
    pub fn with_classes(mut self, classes: usize) -> Self {
        self.classes = classes;
        self
    }

    pub fn block_count(&self) -> usize {
        self.stages.iter().map(|s| s.repeat).sum()
    }

    pub fn stem_spec(&self) -> Result<ConvSpec> {
        ConvSpec::new(INPUT_CHANNELS, self.stem.out_channels, self.stem.groups, self.stem.kernel, 1, self.stem.kernel / 2)
    }

    /// Expands the stage table into per-block configurations with the
    /// single-image activation shape entering and leaving each block.
    pub fn plan(&self) -> Result<Vec<BlockPlan>> {
        ensure!(!self.stages.is_empty(), Config, "network needs at least one stage");
        ensure!(self.classes > 0, Config, "class count must be positive");
        ensure!(
            matches!(self.s2_variant, BlockVariant::S2 | BlockVariant::S2F),
            Config,
            "stride-2 variant must be S2 or S2F, got {:?}",
            self.s2_variant
        );
        let stem_out = self.stem_spec()?.output_shape(Shape4 { n: 1, c: INPUT_CHANNELS, h: INPUT_SIZE, w: INPUT_SIZE })?;
        let mut shape = stem_out;
        let mut plans = Vec::with_capacity(self.block_count());
        for (si, stage) in self.stages.iter().enumerate() {
            ensure!(stage.repeat >= 1, Config, "stage {} has repeat 0", si + 1);
            ensure!(
                stage.stride == 1 || stage.stride == 2,
                Config,
                "stage {} stride must be 1 or 2, got {}",
                si + 1,
                stage.stride
            );
            for r in 0..stage.repeat {
                let variant = if r == 0 && stage.stride == 2 { self.s2_variant } else { BlockVariant::Basic };
                let config = SdcBlockConfig::new(shape.c, stage.out_channels, stage.groups, stage.expansion, variant)
                    .map_err(|e| Error::Config(format!("stage {} block {}: {e}", si + 1, r + 1)))?
                    .with_mismatch(self.mismatch);
                let stride = config.stride;
                ensure!(
                    shape.h % stride == 0 && shape.w % stride == 0 && shape.h >= stride,
                    Config,
                    "stage {} cannot downsample {}x{} by {stride}",
                    si + 1,
                    shape.h,
                    shape.w
                );
                let output = Shape4 { n: 1, c: stage.out_channels, h: shape.h / stride, w: shape.w / stride };
                plans.push(BlockPlan { stage: si, index_in_stage: r, config, input: shape, output });
                shape = output;
            }
        }
        Ok(plans)
    }

    pub fn validate(&self) -> Result<()> {
        self.pooled_shape().map(|_| ())
    }

    /// Single-image shape after the last stage.
    pub fn final_shape(&self) -> Result<Shape4> {
        Ok(self.plan()?.last().expect("non-empty plan").output)
    }

    /// Single-image shape entering the classifier.
    pub fn pooled_shape(&self) -> Result<Shape4> {
        let s = self.final_shape()?;
        let (k, st) = (self.head.pool_kernel, self.head.pool_stride);
        ensure!(k > 0 && st > 0 && s.h >= k && s.w >= k, Config, "pool kernel {k} does not fit {}x{}", s.h, s.w);
        Ok(Shape4 { h: (s.h - k) / st + 1, w: (s.w - k) / st + 1, ..s })
    }
}

#[derive(Clone, Debug)]
pub struct SdcNet<T: Scalar = f32> {
    pub config: NetworkConfig,
    pub stem: ConvLayer<T>,
    pub stem_bn: BatchNormLayer<T>,
    pub blocks: Vec<SdcBlock<T>>,
    pub fc: LinearLayer<T>,
    id: u64,
    version: u64,
}

/// Activations cached by [`SdcNet::forward_training`].
#[derive(Clone, Debug)]
pub struct NetTape<T: Scalar> {
    owner: (u64, u64),
    input: Tensor<T>,
    stem_pre: Tensor<T>,
    stem_bn: BatchNormCache<T>,
    blocks: Vec<BlockTape<T>>,
    last_shape: Shape4,
    pooled: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct NetGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub params: Gradients<T>,
}

impl<T: Scalar> SdcNet<T> {
    pub fn build(config: NetworkConfig, rng: &mut Rng) -> Result<Self> {
        let plans = config.plan()?;
        let pooled = config.pooled_shape()?;
        let stem = ConvLayer::init(config.stem_spec()?, rng)?;
        let stem_bn = BatchNormLayer::new(config.stem.out_channels)?;
        let blocks = plans.iter().map(|p| SdcBlock::build(p.config, rng)).collect::<Result<Vec<_>>>()?;
        let fc = LinearLayer::init(pooled.item(), config.classes, rng)?;
        Ok(SdcNet { config, stem, stem_bn, blocks, fc, id: next_id(), version: 0 })
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        let s = input.shape();
        ensure!(
            s.c == INPUT_CHANNELS && s.h == INPUT_SIZE && s.w == INPUT_SIZE,
            ShapeMismatch,
            "network expects (n,{INPUT_CHANNELS},{INPUT_SIZE},{INPUT_SIZE}) input, got {s}"
        );
        Ok(())
    }

    fn head(&self, features: &Tensor<T>) -> Result<Tensor<T>> {
        avgpool_forward(features, self.config.head.pool_kernel, self.config.head.pool_stride)
    }

    /// Inference-mode scores `(n, classes, 1, 1)`; no state is modified.
    pub fn forward_inference(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_inference_stages(input)?.0)
    }

    /// Inference forward that also returns the activation after each stage.
    pub fn forward_inference_stages(&self, input: &Tensor<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        self.check_input(input)?;
        let mut x = relu(&self.stem_bn.forward_inference(&self.stem.forward(input)?)?);
        let mut stage_outputs = Vec::with_capacity(self.config.stages.len());
        let mut block = 0;
        for stage in &self.config.stages {
            for _ in 0..stage.repeat {
                x = self.blocks[block].forward_inference(&x)?;
                block += 1;
            }
            stage_outputs.push(x.clone());
        }
        let scores = self.fc.forward(&self.head(&x)?)?;
        Ok((scores, stage_outputs))
    }

    pub fn forward_training(&mut self, input: &Tensor<T>) -> Result<(Tensor<T>, NetTape<T>)> {
        self.check_input(input)?;
        let (stem_pre, stem_bn) = self.stem_bn.forward_training(&self.stem.forward(input)?)?;
        let mut x = relu(&stem_pre);
        let mut tapes = Vec::with_capacity(self.blocks.len());
        for block in &mut self.blocks {
            let (y, tape) = block.forward_training(&x)?;
            tapes.push(tape);
            x = y;
        }
        let pooled = self.head(&x)?;
        let scores = self.fc.forward(&pooled)?;
        let tape = NetTape {
            owner: (self.id, self.version),
            input: input.clone(),
            stem_pre,
            stem_bn,
            blocks: tapes,
            last_shape: x.shape(),
            pooled,
        };
        Ok((scores, tape))
    }

    pub fn forward(&mut self, input: &Tensor<T>, training: bool) -> Result<(Tensor<T>, Option<NetTape<T>>)> {
        if training {
            let (s, t) = self.forward_training(input)?;
            Ok((s, Some(t)))
        } else {
            Ok((self.forward_inference(input)?, None))
        }
    }

    pub fn backward(&self, tape: &NetTape<T>, grad_scores: &Tensor<T>) -> Result<NetGrads<T>> {
        ensure!(
            tape.owner == (self.id, self.version),
            Tape,
            "tape was recorded by network {:?}, this is {:?}; run a fresh forward",
            tape.owner,
            (self.id, self.version)
        );
        let gfc = self.fc.backward(&tape.pooled, grad_scores)?;
        let mut g = avgpool_backward(tape.last_shape, &gfc.input, self.config.head.pool_kernel, self.config.head.pool_stride)?;
        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for (block, btape) in self.blocks.iter().zip(&tape.blocks).rev() {
            let bg = block.backward(btape, &g)?;
            g = bg.input;
            block_grads.push(bg.params);
        }
        block_grads.reverse();
        let gbn = self.stem_bn.backward(&tape.stem_bn, &relu_backward(&tape.stem_pre, &g)?)?;
        let gstem = self.stem.backward(&tape.input, &gbn.input)?;

        let mut params = Gradients::new();
        extend_prefixed(&mut params, "stem", gstem.param_gradients());
        extend_prefixed(&mut params, "stem_bn", gbn.param_gradients());
        for (i, bg) in block_grads.into_iter().enumerate() {
            extend_prefixed(&mut params, &format!("blocks.{i}"), bg);
        }
        extend_prefixed(&mut params, "fc", gfc.param_gradients());
        Ok(NetGrads { input: gstem.input, params })
    }

    /// Arg-max class per image using running batch-norm statistics.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Vec<usize>> {
        Ok(argmax(&self.forward_inference(input)?))
    }
}

impl<T: Scalar> Parameterized<T> for SdcNet<T> {
    fn visit_params(&self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        self.stem.visit_params(&join(prefix, "stem"), f);
        self.stem_bn.visit_params(&join(prefix, "stem_bn"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit_params(&join(prefix, &format!("blocks.{i}")), f);
        }
        self.fc.visit_params(&join(prefix, "fc"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_, T>) {
        self.version += 1;
        self.stem.visit_params_mut(&join(prefix, "stem"), f);
        self.stem_bn.visit_params_mut(&join(prefix, "stem_bn"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_params_mut(&join(prefix, &format!("blocks.{i}")), f);
        }
        self.fc.visit_params_mut(&join(prefix, "fc"), f);
    }
}

pub fn build_network<T: Scalar>(config: NetworkConfig, rng: &mut Rng) -> Result<SdcNet<T>> {
    SdcNet::build(config, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_presets_have_seventeen_blocks() {
        for name in ["g4-l", "g3-s", "g4-l-f", "g3-s-f"] {
            let cfg = preset(name).unwrap();
            assert_eq!(cfg.block_count(), 17, "{name}");
            assert_eq!(cfg.stages.iter().map(|s| s.repeat).collect::<Vec<_>>(), vec![1, 2, 3, 4, 3, 3, 1]);
            assert_eq!(cfg.plan().unwrap().len(), 17);
        }
    }

    #[test]
    fn preset_tables() {
        let l = preset("g4-l").unwrap();
        assert_eq!(l.stages.iter().map(|s| s.out_channels).collect::<Vec<_>>(), vec![24, 36, 72, 96, 144, 300, 600]);
        assert_eq!(l.stages.iter().map(|s| s.stride).collect::<Vec<_>>(), vec![1, 1, 2, 2, 1, 2, 1]);
        assert!(l.stages.iter().all(|s| s.groups == 4));
        let s = preset("g3-s").unwrap();
        assert_eq!(s.stages[5].out_channels, 150);
        assert!(s.stages.iter().all(|s| s.groups == 3));

        let lf = preset("g4-l-f").unwrap();
        assert_eq!(lf.stages, l.stages);
        assert_eq!((l.s2_variant, lf.s2_variant), (BlockVariant::S2, BlockVariant::S2F));
        assert_eq!(lf.stem, l.stem);
        assert!(matches!(preset("bogus"), Err(Error::Config(_))));
        assert_eq!(preset("SdcNet-G3-S").unwrap(), s);
    }

    #[test]
    fn plan_output_sizes() {
        let plans = preset("g4-l").unwrap().plan().unwrap();
        let mut last_of_stage = vec![Shape4 { n: 0, c: 0, h: 0, w: 0 }; 7];
        for p in &plans {
            last_of_stage[p.stage] = p.output;
        }
        let hw: Vec<usize> = last_of_stage.iter().map(|s| s.h).collect();
        assert_eq!(hw, vec![32, 32, 16, 8, 8, 4, 4]);
        assert_eq!(preset("g4-l").unwrap().pooled_shape().unwrap().as_array(), [1, 600, 1, 1]);
        assert_eq!(preset("g3-s").unwrap().pooled_shape().unwrap().as_array(), [1, 300, 1, 1]);
    }

    #[test]
    fn chaining_violation_reported() {
        let mut cfg = preset("tiny").unwrap();
        cfg.stages[1].groups = 3;
        assert!(matches!(SdcNet::<f32>::build(cfg, &mut Rng::new(0)), Err(Error::Config(_))));
    }

    #[test]
    fn tiny_forward_shapes() {
        let mut net = SdcNet::<f32>::build(preset("tiny").unwrap(), &mut Rng::new(0)).unwrap();
        let x = Tensor::random_normal([2, 3, 32, 32], 0.0, 1.0, &mut Rng::new(1)).unwrap();
        assert_eq!(net.forward_inference(&x).unwrap().shape().as_array(), [2, 10, 1, 1]);
        let (s, tape) = net.forward_training(&x).unwrap();
        assert_eq!(s.shape().as_array(), [2, 10, 1, 1]);
        let g = net.backward(&tape, &Tensor::zeros(s.shape()).unwrap()).unwrap();
        assert_eq!(g.params.len(), net.trainable_names().len());
        assert!(g.params.values().all(|t| t.data().iter().all(|&v| v == 0.0)));
        assert!(net.forward_inference(&Tensor::zeros([1, 3, 28, 28]).unwrap()).is_err());
    }
}
