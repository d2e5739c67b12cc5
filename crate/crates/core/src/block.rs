//! SdcBlock: expand → two successive depthwise convolutions → concatenate →
//! interleave → combine.
//!
//! ```text
//!  x ─ G-Conv 1×1 ─ BN ─ ReLU ─ DW 3×3 (stride) ─ BN ─ ReLU ─┬─ DW 3×3 ─ BN ─ ReLU ─┐
//!                                                           └────────── d1 ─────────┤ concat
//!                                   shuffle(2) ─ G-Conv 1×1 ─ BN ─ y ───────────────┘
//! ```
//!
//! The output joins `y` with the input according to the variant:
//!
//! * `Basic` (stride 1): `y + x` when `N_I == N_O`; otherwise `y + BN(conv1×1(x))`
//!   with a projection shortcut, or `y` alone when projections are disabled.
//! * `S2` (stride 2): `concat(avgpool2×2(x), y)`; the conv path emits `N_O − N_I`.
//! * `S2F` (stride 2): `y` alone.
//!
//! No ReLU follows the final batch norm or the residual addition.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::ops::{
    avgpool_backward, avgpool_forward, channel_shuffle, channel_shuffle_backward, relu, relu_backward,
    BatchNormCache, BatchNormLayer, ConvLayer, ConvSpec,
};
use crate::params::{extend_prefixed, join, Gradients, ParamVisitor, ParamVisitorMut, Parameterized};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

pub(crate) fn next_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Sections interleaved after the depthwise concatenation.
pub const SHUFFLE_SECTIONS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockVariant {
    Basic,
    S2,
    S2F,
}

/// How a stride-1 block with `N_I != N_O` joins its input back in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MismatchShortcut {
    /// 1×1 standard convolution plus batch norm on the input.
    #[default]
    Projection,
    /// No shortcut; the block output is the conv path alone.
    Omit,
}

/// Resolved shortcut of a built block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shortcut {
    Identity,
    Projection,
    AvgPoolConcat,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SdcBlockConfig {
    pub n_in: usize,
    pub n_out: usize,
    pub groups: usize,
    pub expansion: usize,
    pub stride: usize,
    pub variant: BlockVariant,
    #[serde(default)]
    pub mismatch: MismatchShortcut,
}

impl SdcBlockConfig {
    pub fn new(n_in: usize, n_out: usize, groups: usize, expansion: usize, variant: BlockVariant) -> Result<Self> {
        let stride = if variant == BlockVariant::Basic { 1 } else { 2 };
        let cfg = SdcBlockConfig { n_in, n_out, groups, expansion, stride, variant, mismatch: MismatchShortcut::Projection };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_mismatch(mut self, mismatch: MismatchShortcut) -> Self {
        self.mismatch = mismatch;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.n_in > 0 && self.n_out > 0 && self.groups > 0 && self.expansion > 0,
            Config,
            "block sizes must be positive: {self:?}"
        );
        let expected_stride = if self.variant == BlockVariant::Basic { 1 } else { 2 };
        ensure!(
            self.stride == expected_stride,
            Config,
            "{:?} blocks have stride {expected_stride}, got {}",
            self.variant,
            self.stride
        );
        ensure!(
            self.variant != BlockVariant::S2 || self.n_out > self.n_in,
            Config,
            "S2 block needs N_O > N_I to leave channels for the conv path ({} -> {})",
            self.n_in,
            self.n_out
        );
        let g = self.groups;
        ensure!(
            self.n_in % g == 0 && self.expanded() % g == 0 && self.conv_out() % g == 0,
            Config,
            "groups {g} must divide N_I {}, E·N_I {} and conv-path outputs {}",
            self.n_in,
            self.expanded(),
            self.conv_out()
        );
        Ok(())
    }

    /// `E·N_I`, the width of the depthwise pair.
    pub fn expanded(&self) -> usize {
        self.expansion * self.n_in
    }

    /// Channels produced by the second group convolution.
    pub fn conv_out(&self) -> usize {
        match self.variant {
            BlockVariant::S2 => self.n_out.saturating_sub(self.n_in),
            _ => self.n_out,
        }
    }

    pub fn shortcut(&self) -> Shortcut {
        match self.variant {
            BlockVariant::S2 => Shortcut::AvgPoolConcat,
            BlockVariant::S2F => Shortcut::None,
            BlockVariant::Basic if self.n_in == self.n_out => Shortcut::Identity,
            BlockVariant::Basic => match self.mismatch {
                MismatchShortcut::Projection => Shortcut::Projection,
                MismatchShortcut::Omit => Shortcut::None,
            },
        }
    }

    pub fn gconv1_spec(&self) -> Result<ConvSpec> {
        ConvSpec::pointwise(self.n_in, self.expanded(), self.groups)
    }

    pub fn dw1_spec(&self) -> Result<ConvSpec> {
        ConvSpec::depthwise3x3(self.expanded(), self.stride)
    }

    pub fn dw2_spec(&self) -> Result<ConvSpec> {
        ConvSpec::depthwise3x3(self.expanded(), 1)
    }

    pub fn gconv2_spec(&self) -> Result<ConvSpec> {
        ConvSpec::pointwise(2 * self.expanded(), self.conv_out(), self.groups)
    }

    pub fn projection_spec(&self) -> Result<Option<ConvSpec>> {
        match self.shortcut() {
            Shortcut::Projection => Ok(Some(ConvSpec::pointwise(self.n_in, self.n_out, 1)?)),
            _ => Ok(None),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Projection<T: Scalar> {
    pub conv: ConvLayer<T>,
    pub bn: BatchNormLayer<T>,
}

#[derive(Clone, Debug)]
pub struct SdcBlock<T: Scalar = f32> {
    pub config: SdcBlockConfig,
    pub gconv1: ConvLayer<T>,
    pub bn1: BatchNormLayer<T>,
    pub dw1: ConvLayer<T>,
    pub bn2: BatchNormLayer<T>,
    pub dw2: ConvLayer<T>,
    pub bn3: BatchNormLayer<T>,
    pub gconv2: ConvLayer<T>,
    pub bn4: BatchNormLayer<T>,
    pub projection: Option<Projection<T>>,
    id: u64,
    version: u64,
}

/// Activations cached by a training-mode forward for [`SdcBlock::backward`].
#[derive(Clone, Debug)]
pub struct BlockTape<T: Scalar> {
    owner: (u64, u64),
    input: Tensor<T>,
    a1: Tensor<T>,
    t1: Tensor<T>,
    a2: Tensor<T>,
    d1: Tensor<T>,
    a3: Tensor<T>,
    shuffled: Tensor<T>,
    bn: [BatchNormCache<T>; 4],
    projection_bn: Option<BatchNormCache<T>>,
}

#[derive(Clone, Debug)]
pub struct BlockGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub params: Gradients<T>,
}

impl<T: Scalar> SdcBlock<T> {
    pub fn build(config: SdcBlockConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let e = config.expanded();
        let projection = match config.projection_spec()? {
            Some(spec) => Some(Projection { conv: ConvLayer::init(spec, rng)?, bn: BatchNormLayer::new(config.n_out)? }),
            None => None,
        };
        Ok(SdcBlock {
            config,
            gconv1: ConvLayer::init(config.gconv1_spec()?, rng)?,
            bn1: BatchNormLayer::new(e)?,
            dw1: ConvLayer::init(config.dw1_spec()?, rng)?,
            bn2: BatchNormLayer::new(e)?,
            dw2: ConvLayer::init(config.dw2_spec()?, rng)?,
            bn3: BatchNormLayer::new(e)?,
            gconv2: ConvLayer::init(config.gconv2_spec()?, rng)?,
            bn4: BatchNormLayer::new(config.conv_out())?,
            projection,
            id: next_id(),
            version: 0,
        })
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        ensure!(
            input.shape().c == self.config.n_in,
            ShapeMismatch,
            "block expects {} input channels, got {}",
            self.config.n_in,
            input.shape().c
        );
        Ok(())
    }

    fn join_output(&self, input: &Tensor<T>, y: Tensor<T>, shortcut: Option<Tensor<T>>) -> Result<Tensor<T>> {
        match self.config.shortcut() {
            Shortcut::Identity => y.add(input),
            Shortcut::Projection => y.add(&shortcut.expect("projection output")),
            Shortcut::AvgPoolConcat => avgpool_forward(input, 2, 2)?.concat_channels(&y),
            Shortcut::None => Ok(y),
        }
    }

    /// Inference forward using batch-norm running statistics.
    pub fn forward_inference(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let t1 = relu(&self.bn1.forward_inference(&self.gconv1.forward(input)?)?);
        let d1 = relu(&self.bn2.forward_inference(&self.dw1.forward(&t1)?)?);
        let d2 = relu(&self.bn3.forward_inference(&self.dw2.forward(&d1)?)?);
        let shuffled = channel_shuffle(&d1.concat_channels(&d2)?, SHUFFLE_SECTIONS)?;
        let y = self.bn4.forward_inference(&self.gconv2.forward(&shuffled)?)?;
        let shortcut = match &self.projection {
            Some(p) => Some(p.bn.forward_inference(&p.conv.forward(input)?)?),
            None => None,
        };
        self.join_output(input, y, shortcut)
    }

    /// Training forward: batch statistics, running-stat updates, and a tape.
    pub fn forward_training(&mut self, input: &Tensor<T>) -> Result<(Tensor<T>, BlockTape<T>)> {
        self.check_input(input)?;
        let (a1, c1) = self.bn1.forward_training(&self.gconv1.forward(input)?)?;
        let t1 = relu(&a1);
        let (a2, c2) = self.bn2.forward_training(&self.dw1.forward(&t1)?)?;
        let d1 = relu(&a2);
        let (a3, c3) = self.bn3.forward_training(&self.dw2.forward(&d1)?)?;
        let d2 = relu(&a3);
        let shuffled = channel_shuffle(&d1.concat_channels(&d2)?, SHUFFLE_SECTIONS)?;
        let (y, c4) = self.bn4.forward_training(&self.gconv2.forward(&shuffled)?)?;
        let (shortcut, projection_bn) = match &mut self.projection {
            Some(p) => {
                let (s, c) = p.bn.forward_training(&p.conv.forward(input)?)?;
                (Some(s), Some(c))
            }
            None => (None, None),
        };
        let out = self.join_output(input, y, shortcut)?;
        let tape = BlockTape {
            owner: (self.id, self.version),
            input: input.clone(),
            a1,
            t1,
            a2,
            d1,
            a3,
            shuffled,
            bn: [c1, c2, c3, c4],
            projection_bn,
        };
        Ok((out, tape))
    }

    pub fn forward(&mut self, input: &Tensor<T>, training: bool) -> Result<(Tensor<T>, Option<BlockTape<T>>)> {
        if training {
            let (out, tape) = self.forward_training(input)?;
            Ok((out, Some(tape)))
        } else {
            Ok((self.forward_inference(input)?, None))
        }
    }

    pub fn backward(&self, tape: &BlockTape<T>, grad_out: &Tensor<T>) -> Result<BlockGrads<T>> {
        ensure!(
            tape.owner == (self.id, self.version),
            Tape,
            "tape was recorded by block {:?}, this is block {:?}; run a fresh forward",
            tape.owner,
            (self.id, self.version)
        );
        let cfg = &self.config;
        let x = &tape.input;
        let out_shape = crate::tensor::Shape4 {
            c: cfg.n_out,
            h: tape.shuffled.shape().h,
            w: tape.shuffled.shape().w,
            ..x.shape()
        };
        ensure!(
            grad_out.shape() == out_shape,
            ShapeMismatch,
            "block grad_out {} does not match output {out_shape}",
            grad_out.shape()
        );

        let mut params = Gradients::new();
        let mut grad_shortcut = None;
        let mut projection_grads = None;
        let gy = match cfg.shortcut() {
            Shortcut::Identity => {
                grad_shortcut = Some(grad_out.clone());
                grad_out.clone()
            }
            Shortcut::Projection => {
                let p = self.projection.as_ref().expect("projection layers");
                let cache = tape.projection_bn.as_ref().ok_or_else(|| Error::Tape("missing projection cache".into()))?;
                let gbn = p.bn.backward(cache, grad_out)?;
                let gconv = p.conv.backward(x, &gbn.input)?;
                grad_shortcut = Some(gconv.input.clone());
                projection_grads = Some((gconv.param_gradients(), gbn.param_gradients()));
                grad_out.clone()
            }
            Shortcut::AvgPoolConcat => {
                let (gpool, gy) = grad_out.split_channels(cfg.n_in)?;
                grad_shortcut = Some(avgpool_backward(x.shape(), &gpool, 2, 2)?);
                gy
            }
            Shortcut::None => grad_out.clone(),
        };

        let g4 = self.bn4.backward(&tape.bn[3], &gy)?;
        let gc2 = self.gconv2.backward(&tape.shuffled, &g4.input)?;
        let gcat = channel_shuffle_backward(&gc2.input, SHUFFLE_SECTIONS)?;
        let (mut gd1, gd2) = gcat.split_channels(cfg.expanded())?;

        let g3 = self.bn3.backward(&tape.bn[2], &relu_backward(&tape.a3, &gd2)?)?;
        let gdw2 = self.dw2.backward(&tape.d1, &g3.input)?;
        gd1.add_assign(&gdw2.input)?;

        let g2 = self.bn2.backward(&tape.bn[1], &relu_backward(&tape.a2, &gd1)?)?;
        let gdw1 = self.dw1.backward(&tape.t1, &g2.input)?;

        let g1 = self.bn1.backward(&tape.bn[0], &relu_backward(&tape.a1, &gdw1.input)?)?;
        let gc1 = self.gconv1.backward(x, &g1.input)?;

        let mut grad_input = gc1.input.clone();
        if let Some(gs) = &grad_shortcut {
            grad_input.add_assign(gs)?;
        }

        extend_prefixed(&mut params, "gconv1", gc1.param_gradients());
        extend_prefixed(&mut params, "bn1", g1.param_gradients());
        extend_prefixed(&mut params, "dw1", gdw1.param_gradients());
        extend_prefixed(&mut params, "bn2", g2.param_gradients());
        extend_prefixed(&mut params, "dw2", gdw2.param_gradients());
        extend_prefixed(&mut params, "bn3", g3.param_gradients());
        extend_prefixed(&mut params, "gconv2", gc2.param_gradients());
        extend_prefixed(&mut params, "bn4", g4.param_gradients());
        if let Some((conv, bn)) = projection_grads {
            extend_prefixed(&mut params, "proj", conv);
            extend_prefixed(&mut params, "proj_bn", bn);
        }
        Ok(BlockGrads { input: grad_input, params })
    }
}

impl<T: Scalar> Parameterized<T> for SdcBlock<T> {
    fn visit_params(&self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        self.gconv1.visit_params(&join(prefix, "gconv1"), f);
        self.bn1.visit_params(&join(prefix, "bn1"), f);
        self.dw1.visit_params(&join(prefix, "dw1"), f);
        self.bn2.visit_params(&join(prefix, "bn2"), f);
        self.dw2.visit_params(&join(prefix, "dw2"), f);
        self.bn3.visit_params(&join(prefix, "bn3"), f);
        self.gconv2.visit_params(&join(prefix, "gconv2"), f);
        self.bn4.visit_params(&join(prefix, "bn4"), f);
        if let Some(p) = &self.projection {
            p.conv.visit_params(&join(prefix, "proj"), f);
            p.bn.visit_params(&join(prefix, "proj_bn"), f);
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_, T>) {
        self.version += 1;
        self.gconv1.visit_params_mut(&join(prefix, "gconv1"), f);
        self.bn1.visit_params_mut(&join(prefix, "bn1"), f);
        self.dw1.visit_params_mut(&join(prefix, "dw1"), f);
        self.bn2.visit_params_mut(&join(prefix, "bn2"), f);
        self.dw2.visit_params_mut(&join(prefix, "dw2"), f);
        self.bn3.visit_params_mut(&join(prefix, "bn3"), f);
        self.gconv2.visit_params_mut(&join(prefix, "gconv2"), f);
        self.bn4.visit_params_mut(&join(prefix, "bn4"), f);
        if let Some(p) = &mut self.projection {
            p.conv.visit_params_mut(&join(prefix, "proj"), f);
            p.bn.visit_params_mut(&join(prefix, "proj_bn"), f);
        }
    }
}

pub fn build_block<T: Scalar>(config: SdcBlockConfig, rng: &mut Rng) -> Result<SdcBlock<T>> {
    SdcBlock::build(config, rng)
}
