//! Static cost model: multiply-adds and trainable parameters per layer.
//!
//! FLOPs are counted as multiply-adds of convolution and fully connected
//! layers for a single input image. Batch norm contributes its scale and
//! shift as parameters and no FLOPs; ReLU, pooling, shuffles, concatenation
//! and residual additions are free. Running statistics are not parameters.

use std::fmt::Write as _;

use crate::block::{BlockVariant, Shortcut};
use crate::error::Result;
use crate::net::{NetworkConfig, INPUT_CHANNELS, INPUT_SIZE};
use crate::ops::ConvSpec;
use crate::tensor::Shape4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv(ConvSpec),
    Linear { in_features: usize, out_features: usize },
    BatchNorm { channels: usize },
    Relu,
    AvgPool { kernel: usize, stride: usize },
    Shuffle,
    Concat,
    Add,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct LayerCost {
    pub flops: u64,
    pub params: u64,
}

/// Multiply-adds and parameters of one layer applied to `input`.
pub fn count_layer(layer: &LayerKind, input: Shape4) -> Result<LayerCost> {
    Ok(match *layer {
        LayerKind::Conv(spec) => {
            let (ho, wo) = spec.output_hw(input.h, input.w)?;
            let per_output = spec.fan_in() as u64;
            let k = spec.out_channels as u64;
            LayerCost {
                flops: (ho * wo) as u64 * k * per_output,
                params: k * per_output + if spec.bias { k } else { 0 },
            }
        }
        LayerKind::Linear { in_features, out_features } => {
            let (i, o) = (in_features as u64, out_features as u64);
            LayerCost { flops: i * o, params: i * o + o }
        }
        LayerKind::BatchNorm { channels } => LayerCost { flops: 0, params: 2 * channels as u64 },
        LayerKind::Relu | LayerKind::AvgPool { .. } | LayerKind::Shuffle | LayerKind::Concat | LayerKind::Add => {
            LayerCost::default()
        }
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostRow {
    pub layer: String,
    pub out_shape: Shape4,
    pub flops: u64,
    pub params: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostReport {
    pub name: String,
    pub rows: Vec<CostRow>,
    pub total_flops: u64,
    pub total_params: u64,
}

struct Builder {
    rows: Vec<CostRow>,
}

impl Builder {
    fn push(&mut self, name: String, layer: LayerKind, input: Shape4, out_shape: Shape4) -> Result<()> {
        let cost = count_layer(&layer, input)?;
        self.rows.push(CostRow { layer: name, out_shape, flops: cost.flops, params: cost.params });
        Ok(())
    }

    fn conv_bn(&mut self, name: &str, bn_name: &str, spec: ConvSpec, input: Shape4) -> Result<Shape4> {
        let out = spec.output_shape(input)?;
        self.push(name.to_string(), LayerKind::Conv(spec), input, out)?;
        self.push(bn_name.to_string(), LayerKind::BatchNorm { channels: spec.out_channels }, out, out)?;
        Ok(out)
    }
}

/// Cost report for one image through the network described by `config`.
pub fn count_network(config: &NetworkConfig) -> Result<CostReport> {
    let mut b = Builder { rows: Vec::new() };
    let input = Shape4 { n: 1, c: INPUT_CHANNELS, h: INPUT_SIZE, w: INPUT_SIZE };
    b.conv_bn("stem", "stem_bn", config.stem_spec()?, input)?;
    for (i, plan) in config.plan()?.iter().enumerate() {
        let cfg = &plan.config;
        let p = |s: &str| format!("blocks.{i}.{s}");
        let t1 = b.conv_bn(&p("gconv1"), &p("bn1"), cfg.gconv1_spec()?, plan.input)?;
        let d1 = b.conv_bn(&p("dw1"), &p("bn2"), cfg.dw1_spec()?, t1)?;
        let d2 = b.conv_bn(&p("dw2"), &p("bn3"), cfg.dw2_spec()?, d1)?;
        let cat = Shape4 { c: d1.c + d2.c, ..d2 };
        b.conv_bn(&p("gconv2"), &p("bn4"), cfg.gconv2_spec()?, cat)?;
        if cfg.shortcut() == Shortcut::Projection {
            if let Some(spec) = cfg.projection_spec()? {
                b.conv_bn(&p("proj"), &p("proj_bn"), spec, plan.input)?;
            }
        }
    }
    let pooled = config.pooled_shape()?;
    b.push(
        "avgpool".into(),
        LayerKind::AvgPool { kernel: config.head.pool_kernel, stride: config.head.pool_stride },
        config.final_shape()?,
        pooled,
    )?;
    let scores = Shape4 { n: 1, c: config.classes, h: 1, w: 1 };
    b.push("fc".into(), LayerKind::Linear { in_features: pooled.item(), out_features: config.classes }, pooled, scores)?;

    let total_flops = b.rows.iter().map(|r| r.flops).sum();
    let total_params = b.rows.iter().map(|r| r.params).sum();
    Ok(CostReport { name: config.name.clone(), rows: b.rows, total_flops, total_params })
}

fn shape_str(s: Shape4) -> String {
    format!("{}x{}x{}", s.c, s.h, s.w)
}

impl CostReport {
    pub fn flops_millions(&self) -> f64 {
        self.total_flops as f64 / 1e6
    }

    pub fn params_millions(&self) -> f64 {
        self.total_params as f64 / 1e6
    }

    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.layer.len()).max().unwrap_or(5).max(5);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>12}  {:>12}  {:>10}", "layer", "output", "flops", "params");
        for r in &self.rows {
            let _ = writeln!(out, "{:<width$}  {:>12}  {:>12}  {:>10}", r.layer, shape_str(r.out_shape), r.flops, r.params);
        }
        let _ = writeln!(out, "{:<width$}  {:>12}  {:>12}  {:>10}", "total", "", self.total_flops, self.total_params);
        out
    }

    /// `layer,out_shape,flops,params` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,out_shape,flops,params\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.layer, shape_str(r.out_shape), r.flops, r.params);
        }
        let _ = writeln!(out, "total,,{},{}", self.total_flops, self.total_params);
        out
    }
}

/// Published FLOPs and parameter totals for the CIFAR-10 presets, in millions.
pub const REFERENCE_BUDGETS: [(&str, f64, f64); 4] = [
    ("SdcNet-G3-S-F", 56.55, 1.09),
    ("SdcNet-G3-S", 55.12, 1.04),
    ("SdcNet-G4-L-F", 106.1, 2.61),
    ("SdcNet-G4-L", 103.3, 2.53),
];

/// Published `(FLOPs M, params M)` for a preset name, if any.
pub fn reference_budget(name: &str) -> Option<(f64, f64)> {
    REFERENCE_BUDGETS.iter().find(|(n, _, _)| n.eq_ignore_ascii_case(name)).map(|&(_, f, p)| (f, p))
}

/// Plain-text architecture table in the Layer / Output size / Stride /
/// Repeat / Output-channels layout, with one channel column per config.
///
/// All configs must share stem kernel, stage strides and repeats.
pub fn describe(configs: &[&NetworkConfig]) -> Result<String> {
    use crate::error::Error;
    let first = *configs.first().ok_or_else(|| Error::InvalidArgument("describe needs a config".into()))?;
    let plans = configs.iter().map(|c| c.plan()).collect::<Result<Vec<_>>>()?;
    for c in configs {
        let same_layout = c.stages.len() == first.stages.len()
            && c.stages.iter().zip(&first.stages).all(|(a, b)| a.stride == b.stride && a.repeat == b.repeat);
        if !same_layout {
            return Err(Error::InvalidArgument(format!(
                "{} and {} have different stage layouts",
                first.name, c.name
            )));
        }
    }
    let reports = configs.iter().map(|c| count_network(c)).collect::<Result<Vec<_>>>()?;

    let headers: Vec<String> = configs
        .iter()
        .map(|c| {
            let groups = c.stages.first().map(|s| s.groups).unwrap_or(1);
            format!("{}(g={groups})", c.name)
        })
        .collect();
    let col = headers.iter().map(|h| h.len()).max().unwrap_or(8).max(8);

    let mut rows: Vec<(String, String, String, String, Vec<String>)> = Vec::new();
    let stem = first.stem_spec()?;
    let stem_hw = stem.output_hw(INPUT_SIZE, INPUT_SIZE)?;
    rows.push((
        format!("G-Conv(g={})", first.stem.groups),
        format!("{}x{}", stem_hw.0, stem_hw.1),
        "1".into(),
        "1".into(),
        configs.iter().map(|c| c.stem.out_channels.to_string()).collect(),
    ));
    for (si, stage) in first.stages.iter().enumerate() {
        let stage_plans: Vec<_> = plans[0].iter().filter(|p| p.stage == si).collect();
        let out = stage_plans[0].output;
        let channels: Vec<String> = configs.iter().map(|c| c.stages[si].out_channels.to_string()).collect();
        let label = format!("Stages {}", si + 1);
        let size = format!("{}x{}", out.h, out.w);
        if stage.stride == 2 {
            rows.push((label, size.clone(), "2".into(), "1".into(), channels.clone()));
            if stage.repeat > 1 {
                rows.push((String::new(), size, "1".into(), (stage.repeat - 1).to_string(), channels));
            }
        } else {
            rows.push((label, size, "1".into(), stage.repeat.to_string(), channels));
        }
    }
    let pooled = first.pooled_shape()?;
    rows.push((
        "Avg Pool".into(),
        format!("{}x{}", pooled.h, pooled.w),
        first.head.pool_stride.to_string(),
        "1".into(),
        configs.iter().map(|c| c.final_shape().map(|s| s.c.to_string())).collect::<Result<_>>()?,
    ));
    rows.push((
        "FC".into(),
        "1x1".into(),
        String::new(),
        "1".into(),
        configs.iter().map(|c| c.classes.to_string()).collect(),
    ));
    rows.push((
        "Complexity".into(),
        String::new(),
        String::new(),
        String::new(),
        reports.iter().map(|r| format!("{:.2}M", r.flops_millions())).collect(),
    ));
    rows.push((
        "Params".into(),
        String::new(),
        String::new(),
        String::new(),
        reports.iter().map(|r| format!("{:.2}M", r.params_millions())).collect(),
    ));

    let mut out = String::new();
    let mut line = format!("{:<12} {:<11} {:<6} {:<12}", "Layer", "Output size", "Stride", "Repeat Times");
    for h in &headers {
        let _ = write!(line, " {h:>col$}");
    }
    let _ = writeln!(out, "{}", line.trim_end());
    let _ = writeln!(out, "{}", "-".repeat(line.trim_end().len()));
    for (label, size, stride, repeat, chans) in rows {
        let mut line = format!("{label:<12} {size:<11} {stride:<6} {repeat:<12}");
        for c in chans {
            let _ = write!(line, " {c:>col$}");
        }
        let _ = writeln!(out, "{}", line.trim_end());
    }
    let _ = writeln!(out);
    for (c, r) in configs.iter().zip(&reports) {
        let s2 = match c.s2_variant {
            BlockVariant::S2F => "SdcBlock-S2-F",
            _ => "SdcBlock-S2",
        };
        let pooled = c.pooled_shape()?;
        let _ = writeln!(
            out,
            "{}: {} blocks in {} stages, stride-2 blocks {s2}, stem G-Conv(g={}) {}→{}, {} multiply-adds, {} params, FC {}→{}",
            c.name,
            c.block_count(),
            c.stages.len(),
            c.stem.groups,
            INPUT_CHANNELS,
            c.stem.out_channels,
            r.total_flops,
            r.total_params,
            pooled.item(),
            c.classes
        );
    }
    Ok(out)
}
