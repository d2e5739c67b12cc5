//! Central finite-difference checks of analytic gradients in `f64`.
//!
//! Each check perturbs one scalar by `±h`, re-evaluates a scalar loss, and
//! compares `(L(x+h) − L(x−h)) / 2h` with the analytic derivative using
//! `|a − f| / max(|a|, |f|, 1e-8)`.

use std::fmt::Write as _;

use indexmap::IndexMap;
use rand::seq::SliceRandom;

use crate::block::{BlockVariant, SdcBlock, SdcBlockConfig};
use crate::error::{Error, Result};
use crate::net::{preset, SdcNet};
use crate::ops::{
    avgpool_backward, avgpool_forward, channel_shuffle, channel_shuffle_backward, relu, relu_backward,
    relu_sign_digest_begin, relu_sign_digest_end, softmax_cross_entropy, BatchNormLayer, ConvLayer, ConvSpec, LinearLayer,
};
use crate::params::{Gradients, ParamRole, Parameterized};
use crate::rng::Rng;
use crate::tensor::{Shape4, Tensor};

pub const FD_STEP: f64 = 1e-5;
const REL_FLOOR: f64 = 1e-8;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Which scalars of each tensor to probe.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    All,
    /// Up to `k` random entries from every record.
    PerRecord(usize),
    /// `k` random `(record, entry)` pairs over all records.
    Total(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupReport {
    pub name: String,
    pub checked: usize,
    /// Probes discarded because `±h` crossed a ReLU kink.
    pub skipped: usize,
    pub max_rel_error: f64,
    pub worst: Option<Probe>,
}

impl GroupReport {
    fn new(name: &str) -> Self {
        GroupReport { name: name.to_string(), checked: 0, skipped: 0, max_rel_error: 0.0, worst: None }
    }

    fn record(&mut self, probe: Probe) {
        self.checked += 1;
        if self.worst.is_none() || probe.rel_error > self.max_rel_error {
            self.max_rel_error = probe.rel_error;
            self.worst = Some(probe);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub subject: String,
    pub tolerance: f64,
    pub groups: Vec<GroupReport>,
}

impl GradcheckReport {
    pub fn new(subject: impl Into<String>, tolerance: f64) -> Self {
        GradcheckReport { subject: subject.into(), tolerance, groups: Vec::new() }
    }

    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.groups.iter().map(|g| g.checked).sum()
    }

    pub fn skipped(&self) -> usize {
        self.groups.iter().map(|g| g.skipped).sum()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    pub fn failures(&self) -> Vec<&GroupReport> {
        self.groups.iter().filter(|g| !(g.max_rel_error <= self.tolerance)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let verdict = if self.passed() { "ok" } else { "FAILED" };
        let _ = writeln!(
            out,
            "{}: {} probes ({} skipped at kinks), max rel. error {:.3e} (tolerance {:.0e}) {verdict}",
            self.subject,
            self.checked(),
            self.skipped(),
            self.max_rel_error(),
            self.tolerance
        );
        for g in self.failures() {
            if let Some(p) = &g.worst {
                let _ = writeln!(
                    out,
                    "  {} [{}]: analytic {:.9e}, numeric {:.9e}, rel. error {:.3e}",
                    g.name, p.index, p.analytic, p.numeric, p.rel_error
                );
            }
        }
        out
    }
}

/// Random visiting order of `0..len`.
fn order(len: usize, rng: &mut Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(rng);
    idx
}

/// Evaluates `loss` with ReLU sign recording on.
fn traced<E>(eval: &mut E, value: f64) -> Result<(f64, u64)>
where
    E: FnMut(f64) -> Result<f64>,
{
    relu_sign_digest_begin();
    let out = eval(value);
    let digest = relu_sign_digest_end();
    Ok((out?, digest))
}

/// Central difference at `original`, or `None` when `±h` flips any ReLU.
fn central_difference<E>(eval: &mut E, original: f64) -> Result<Option<f64>>
where
    E: FnMut(f64) -> Result<f64>,
{
    let (_, base) = traced(eval, original)?;
    let plus = traced(eval, original + FD_STEP);
    let minus = traced(eval, original - FD_STEP);
    eval(original)?;
    let ((plus, dp), (minus, dm)) = (plus?, minus?);
    if dp != base || dm != base {
        return Ok(None);
    }
    Ok(Some((plus - minus) / (2.0 * FD_STEP)))
}

fn set_param(model: &mut impl Parameterized<f64>, name: &str, index: usize, value: f64) {
    model.visit_params_mut("", &mut |n, _, t| {
        if n == name {
            t.data_mut()[index] = value;
        }
    });
}

/// Checks `analytic` (trainable gradients of `loss` at the current
/// parameters) by perturbing parameters of `model` in place. Every value is
/// restored afterwards.
///
/// Probes whose perturbation changes the branch taken by any ReLU are
/// skipped and replaced by further random entries, so sampled selections
/// still reach their quota when enough smooth entries exist.
pub fn check_params<M, F>(
    model: &mut M,
    analytic: &Gradients<f64>,
    mut loss: F,
    selection: Selection,
    rng: &mut Rng,
    report: &mut GradcheckReport,
) -> Result<()>
where
    M: Parameterized<f64>,
    F: FnMut(&mut M) -> Result<f64>,
{
    let mut records: IndexMap<String, Vec<f64>> = IndexMap::new();
    model.visit_params("", &mut |name, role, t| {
        if role.is_trainable() {
            records.insert(name.to_string(), t.data().to_vec());
        }
    });
    for name in records.keys() {
        let ok = analytic.get(name).is_some_and(|g| g.len() == records[name].len());
        if !ok {
            return Err(Error::Bookkeeping(format!("analytic gradient missing or misshapen for {name}")));
        }
    }
    if analytic.len() != records.len() {
        return Err(Error::Bookkeeping(format!("{} gradients for {} parameters", analytic.len(), records.len())));
    }

    // (candidates in visiting order, quota)
    let queues: Vec<(Vec<(usize, usize)>, usize)> = match selection {
        Selection::All => records.values().enumerate().map(|(r, v)| ((0..v.len()).map(|i| (r, i)).collect(), v.len())).collect(),
        Selection::PerRecord(k) => records
            .values()
            .enumerate()
            .map(|(r, v)| (order(v.len(), rng).into_iter().map(|i| (r, i)).collect(), k))
            .collect(),
        Selection::Total(k) => {
            let flat: Vec<(usize, usize)> =
                records.values().enumerate().flat_map(|(r, v)| (0..v.len()).map(move |i| (r, i))).collect();
            let perm = order(flat.len(), rng);
            vec![(perm.into_iter().map(|j| flat[j]).collect(), k)]
        }
    };

    let mut groups: IndexMap<usize, GroupReport> =
        records.keys().enumerate().map(|(r, name)| (r, GroupReport::new(name))).collect();
    for (candidates, quota) in queues {
        let mut accepted = 0;
        for (r, i) in candidates {
            if accepted == quota {
                break;
            }
            let (name, values) = records.get_index(r).expect("record index");
            let mut eval = |v: f64| {
                set_param(model, name, i, v);
                loss(model)
            };
            let group = groups.get_mut(&r).expect("group per record");
            match central_difference(&mut eval, values[i])? {
                Some(numeric) => {
                    let a = analytic[name.as_str()].data()[i];
                    group.record(Probe { index: i, analytic: a, numeric, rel_error: relative_error(a, numeric) });
                    accepted += 1;
                }
                None => group.skipped += 1,
            }
        }
    }
    report.groups.extend(groups.into_values().filter(|g| g.checked + g.skipped > 0));
    Ok(())
}

/// Checks the gradient of `loss` with respect to its input tensor, probing
/// `samples` random entries (all entries for `None`).
pub fn check_input<F>(
    name: &str,
    input: &Tensor<f64>,
    analytic: &Tensor<f64>,
    mut loss: F,
    samples: Option<usize>,
    rng: &mut Rng,
    report: &mut GradcheckReport,
) -> Result<()>
where
    F: FnMut(&Tensor<f64>) -> Result<f64>,
{
    if analytic.shape() != input.shape() {
        return Err(Error::ShapeMismatch(format!("input {} but gradient {}", input.shape(), analytic.shape())));
    }
    let (candidates, quota) = match samples {
        Some(k) => (order(input.len(), rng), k),
        None => ((0..input.len()).collect(), input.len()),
    };
    let mut group = GroupReport::new(name);
    let mut x = input.clone();
    for i in candidates {
        if group.checked == quota {
            break;
        }
        let mut eval = |v: f64| {
            x.data_mut()[i] = v;
            loss(&x)
        };
        match central_difference(&mut eval, input.data()[i])? {
            Some(numeric) => {
                let a = analytic.data()[i];
                group.record(Probe { index: i, analytic: a, numeric, rel_error: relative_error(a, numeric) });
            }
            None => group.skipped += 1,
        }
    }
    report.groups.push(group);
    Ok(())
}

/// `Σ out ⊙ r`: a scalar loss whose gradient with respect to `out` is `r`.
pub fn projection_loss(out: &Tensor<f64>, r: &Tensor<f64>) -> Result<f64> {
    out.expect_same_shape(r, "projection loss")?;
    Ok(out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum())
}

fn normal(shape: impl Into<Shape4>, rng: &mut Rng) -> Result<Tensor<f64>> {
    Tensor::random_normal(shape, 0.0, 1.0, rng)
}

/// Inputs drawn away from zero so `±h` never crosses the ReLU kink.
fn off_kink(shape: impl Into<Shape4>, rng: &mut Rng) -> Result<Tensor<f64>> {
    Ok(normal(shape, rng)?.map(|v| if v >= 0.0 { v + 0.1 } else { v - 0.1 }))
}

pub fn check_conv(spec: ConvSpec, input: Shape4, tolerance: f64, rng: &mut Rng) -> Result<GradcheckReport> {
    let mut report = GradcheckReport::new(
        format!(
            "conv {}->{} g={} k={}x{} s={} p={}{}",
            spec.in_channels,
            spec.out_channels,
            spec.groups,
            spec.kernel_h,
            spec.kernel_w,
            spec.stride,
            spec.padding,
            if spec.bias { " +bias" } else { "" }
        ),
        tolerance,
    );
    let mut layer = ConvLayer::<f64>::init(spec, rng)?;
    if let Some(b) = layer.bias.as_mut() {
        *b = normal(b.shape(), rng)?;
    }
    let x = normal(input, rng)?;
    let r = normal(spec.output_shape(input)?, rng)?;
    let grads = layer.backward(&x, &r)?;
    check_input("input", &x, &grads.input, |xi| projection_loss(&layer.forward(xi)?, &r), None, rng, &mut report)?;
    let pg = grads.param_gradients();
    check_params(&mut layer, &pg, |l| projection_loss(&l.forward(&x)?, &r), Selection::All, rng, &mut report)?;
    Ok(report)
}

pub fn check_batchnorm(input: Shape4, tolerance: f64, rng: &mut Rng) -> Result<GradcheckReport> {
    let mut report = GradcheckReport::new(format!("batchnorm (training) {input}"), tolerance);
    let mut bn = BatchNormLayer::<f64>::new(input.c)?;
    bn.gamma = normal(bn.gamma.shape(), rng)?;
    bn.beta = normal(bn.beta.shape(), rng)?;
    let x = normal(input, rng)?.map(|v| 2.0 * v + 0.5);
    let r = normal(input, rng)?;
    let (_, cache) = bn.forward_training(&x)?;
    let grads = bn.backward(&cache, &r)?;
    let mut probe = bn.clone();
    check_input("input", &x, &grads.input, |xi| projection_loss(&probe.forward_training(xi)?.0, &r), None, rng, &mut report)?;
    check_params(&mut bn, &grads.param_gradients(), |l| projection_loss(&l.forward_training(&x)?.0, &r), Selection::All, rng, &mut report)?;
    Ok(report)
}

pub fn check_relu(input: Shape4, tolerance: f64, rng: &mut Rng) -> Result<GradcheckReport> {
    let mut report = GradcheckReport::new(format!("relu {input}"), tolerance);
    let x = off_kink(input, rng)?;
    let r = normal(input, rng)?;
    let g = relu_backward(&x, &r)?;
    check_input("input", &x, &g, |xi| projection_loss(&relu(xi), &r), None, rng, &mut report)?;
    Ok(report)
}

pub fn check_avgpool(input: Shape4, kernel: usize, stride: usize, tolerance: f64, rng: &mut Rng) -> Result<GradcheckReport> {
    let mut report = GradcheckReport::new(format!("avgpool {kernel}x{kernel}/{stride} {input}"), tolerance);
    let x = normal(input, rng)?;
    let out = avgpool_forward(&x, kernel, stride)?;
    let r = normal(out.shape(), rng)?;
    let g = avgpool_backward(input, &r, kernel, stride)?;
    check_input("input", &x, &g, |xi| projection_loss(&avgpool_forward(xi, kernel, stride)?, &r), None, rng, &mut report)?;
    Ok(report)
}

pub fn check_shuffle(input: Shape4, sections: usize, tolerance: f64, rng: &mut Rng) -> Result<GradcheckReport> {
    let mut report = GradcheckReport::new(format!("channel shuffle ({sections} sections) {input}"), tolerance);
    let x = normal(input, rng)?;
    let r = normal(input, rng)?;
    let g = channel_shuffle_backward(&r, sections)?;
    check_input("input", &x, &g, |xi| projection_loss(&channel_shuffle(xi, sections)?, &r), None, rng, &mut report)?;
    Ok(report)
}

pub fn check_concat(a: Shape4, b_channels: usize, tolerance: f64, rng: &mut Rng) -> Result<GradcheckReport> {
    let mut report = GradcheckReport::new(format!("channel concat {a} + {b_channels}"), tolerance);
    let xa = normal(a, rng)?;
    let xb = normal(Shape4 { c: b_channels, ..a }, rng)?;
    let r = normal(Shape4 { c: a.c + b_channels, ..a }, rng)?;
    let (ga, gb) = r.split_channels(a.c)?;
    check_input("a", &xa, &ga, |x| projection_loss(&x.concat_channels(&xb)?, &r), None, rng, &mut report)?;
    check_input("b", &xb, &gb, |x| projection_loss(&xa.concat_channels(x)?, &r), None, rng, &mut report)?;
    Ok(report)
}

pub fn check_linear(batch: usize, inputs: usize, outputs: usize, tolerance: f64, rng: &mut Rng) -> Result<GradcheckReport> {
    let mut report = GradcheckReport::new(format!("linear {inputs}->{outputs}"), tolerance);
    let mut fc = LinearLayer::<f64>::init(inputs, outputs, rng)?;
    fc.bias = normal(fc.bias.shape(), rng)?;
    let x = normal([batch, inputs, 1, 1], rng)?;
    let r = normal([batch, outputs, 1, 1], rng)?;
    let grads = fc.backward(&x, &r)?;
    check_input("input", &x, &grads.input, |xi| projection_loss(&fc.forward(xi)?, &r), None, rng, &mut report)?;
    check_params(&mut fc, &grads.param_gradients(), |l| projection_loss(&l.forward(&x)?, &r), Selection::All, rng, &mut report)?;
    Ok(report)
}

pub fn check_softmax_cross_entropy(batch: usize, classes: usize, tolerance: f64, rng: &mut Rng) -> Result<GradcheckReport> {
    let mut report = GradcheckReport::new(format!("softmax cross-entropy {batch}x{classes}"), tolerance);
    let scores = normal([batch, classes, 1, 1], rng)?;
    let labels: Vec<usize> = (0..batch).map(|_| rng.below(classes)).collect();
    let (_, g) = softmax_cross_entropy(&scores, &labels)?;
    check_input("scores", &scores, &g, |s| Ok(softmax_cross_entropy(s, &labels)?.0), None, rng, &mut report)?;
    Ok(report)
}

/// Moves every batch-norm scale into `[1, 1.3)` and shift into `[-0.15, 0.15)`.
/// At `beta = 0` a scale feeding ReLU, a depthwise conv and another batch
/// norm has a gradient that vanishes up to epsilon, which leaves only
/// finite-difference noise to compare.
fn randomize_norm_params<M: Parameterized<f64>>(model: &mut M, rng: &mut Rng) {
    let mut perturb = rng.fork(0xB10C);
    model.visit_params_mut("", &mut |_, role, t| match role {
        ParamRole::NormScale => t.data_mut().iter_mut().for_each(|v| *v = 1.0 + 0.3 * perturb.uniform()),
        ParamRole::NormShift => t.data_mut().iter_mut().for_each(|v| *v = 0.3 * (perturb.uniform() - 0.5)),
        _ => {}
    });
}

/// Full training-mode block: input gradient plus every parameter record.
pub fn check_block(
    config: SdcBlockConfig,
    input: Shape4,
    selection: Selection,
    tolerance: f64,
    rng: &mut Rng,
) -> Result<GradcheckReport> {
    let mut report = GradcheckReport::new(
        format!(
            "SdcBlock {:?} {}->{} g={} E={} on {input}",
            config.variant, config.n_in, config.n_out, config.groups, config.expansion
        ),
        tolerance,
    );
    let mut block = SdcBlock::<f64>::build(config, rng)?;
    randomize_norm_params(&mut block, rng);
    let x = normal(input, rng)?;
    let (out, tape) = block.forward_training(&x)?;
    let r = normal(out.shape(), rng)?;
    let grads = block.backward(&tape, &r)?;
    let mut probe = block.clone();
    check_input("input", &x, &grads.input, |xi| projection_loss(&probe.forward_training(xi)?.0, &r), Some(24), rng, &mut report)?;
    check_params(&mut block, &grads.params, |b| projection_loss(&b.forward_training(&x)?.0, &r), selection, rng, &mut report)?;
    Ok(report)
}

/// Training-mode network with a cross-entropy loss, probing `samples`
/// parameters drawn across all records.
pub fn check_network(net: &mut SdcNet<f64>, batch: usize, samples: usize, tolerance: f64, rng: &mut Rng) -> Result<GradcheckReport> {
    let mut report =
        GradcheckReport::new(format!("{} ({} blocks), {samples} parameters", net.config.name, net.blocks.len()), tolerance);
    randomize_norm_params(net, rng);
    let x = normal([batch, 3, 32, 32], rng)?;
    let labels: Vec<usize> = (0..batch).map(|_| rng.below(net.config.classes)).collect();
    let (scores, tape) = net.forward_training(&x)?;
    let (_, g) = softmax_cross_entropy(&scores, &labels)?;
    let grads = net.backward(&tape, &g)?;
    check_params(
        net,
        &grads.params,
        |n| Ok(softmax_cross_entropy(&n.forward_training(&x)?.0, &labels)?.0),
        Selection::Total(samples),
        rng,
        &mut report,
    )?;
    Ok(report)
}

/// Every primitive, one block of each variant, and a three-block network.
pub fn run_suite(tolerance: f64, seed: u64) -> Result<Vec<GradcheckReport>> {
    let root = Rng::new(seed);
    let mut k = 0u64;
    let mut next = || {
        k += 1;
        root.fork(k)
    };
    let s = |n, c, h, w| Shape4 { n, c, h, w };
    let mut reports = vec![
        check_conv(ConvSpec::new(3, 4, 1, 3, 1, 1)?, s(2, 3, 5, 5), tolerance, &mut next())?,
        check_conv(ConvSpec::new(4, 6, 2, 3, 2, 1)?, s(2, 4, 7, 6), tolerance, &mut next())?,
        check_conv(ConvSpec::depthwise3x3(4, 2)?, s(2, 4, 6, 6), tolerance, &mut next())?,
        check_conv(ConvSpec::pointwise(6, 9, 3)?, s(2, 6, 4, 4), tolerance, &mut next())?,
        check_conv(ConvSpec::new(4, 4, 2, 3, 1, 0)?.with_bias(true), s(2, 4, 5, 5), tolerance, &mut next())?,
        check_batchnorm(s(3, 4, 3, 3), tolerance, &mut next())?,
        check_relu(s(2, 3, 4, 4), tolerance, &mut next())?,
        check_avgpool(s(2, 3, 6, 6), 2, 2, tolerance, &mut next())?,
        check_avgpool(s(1, 2, 8, 8), 4, 4, tolerance, &mut next())?,
        check_shuffle(s(2, 12, 2, 2), 2, tolerance, &mut next())?,
        check_concat(s(2, 3, 3, 3), 5, tolerance, &mut next())?,
        check_linear(3, 8, 5, tolerance, &mut next())?,
        check_softmax_cross_entropy(4, 10, tolerance, &mut next())?,
    ];
    let block_input = s(2, 8, 6, 6);
    for (variant, n_out) in [(BlockVariant::Basic, 8), (BlockVariant::Basic, 12), (BlockVariant::S2, 16), (BlockVariant::S2F, 16)] {
        let cfg = SdcBlockConfig::new(8, n_out, 2, 3, variant)?;
        reports.push(check_block(cfg, block_input, Selection::PerRecord(8), tolerance, &mut next())?);
    }
    let mut rng = next();
    let mut net = SdcNet::<f64>::build(preset("tiny")?, &mut rng)?;
    reports.push(check_network(&mut net, 2, 50, tolerance, &mut rng)?);
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(1e-12, 0.0) - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn relu_passes_tightly_away_from_kinks() {
        let report = check_relu(Shape4 { n: 2, c: 2, h: 3, w: 3 }, 1e-6, &mut Rng::new(1)).unwrap();
        assert!(report.passed(), "{}", report.to_text());
    }

    #[test]
    fn transposed_kernel_backward_is_caught() {
        let mut rng = Rng::new(4);
        let spec = ConvSpec::new(2, 3, 1, 3, 1, 1).unwrap();
        let layer = ConvLayer::<f64>::init(spec, &mut rng).unwrap();
        let mut transposed = layer.clone();
        let ws = layer.weight.shape();
        for o in 0..ws.n {
            for i in 0..ws.c {
                for y in 0..3 {
                    for x in 0..3 {
                        *transposed.weight.at_mut(o, i, y, x) = layer.weight.at(o, i, x, y);
                    }
                }
            }
        }
        let input = Shape4 { n: 1, c: 2, h: 5, w: 5 };
        let x = normal(input, &mut rng).unwrap();
        let r = normal(spec.output_shape(input).unwrap(), &mut rng).unwrap();
        let wrong = transposed.backward(&x, &r).unwrap().input;
        let mut report = GradcheckReport::new("mutant", 1e-4);
        check_input("input", &x, &wrong, |xi| projection_loss(&layer.forward(xi)?, &r), None, &mut rng, &mut report).unwrap();
        assert!(!report.passed());
        assert_eq!(report.failures().len(), 1);
        assert!(report.to_text().contains("FAILED"));

        let right = layer.backward(&x, &r).unwrap().input;
        let mut report = GradcheckReport::new("correct", 1e-4);
        check_input("input", &x, &right, |xi| projection_loss(&layer.forward(xi)?, &r), None, &mut rng, &mut report).unwrap();
        assert!(report.passed(), "{}", report.to_text());
    }

    #[test]
    fn total_selection_spans_records() {
        let mut rng = Rng::new(2);
        let mut fc = LinearLayer::<f64>::init(4, 3, &mut rng).unwrap();
        let x = normal([2, 4, 1, 1], &mut rng).unwrap();
        let r = normal([2, 3, 1, 1], &mut rng).unwrap();
        let g = fc.backward(&x, &r).unwrap().param_gradients();
        let mut report = GradcheckReport::new("fc", 1e-6);
        check_params(&mut fc, &g, |l| projection_loss(&l.forward(&x)?, &r), Selection::Total(15), &mut rng, &mut report).unwrap();
        assert_eq!(report.checked(), 15);
        assert_eq!(report.groups.len(), 2);
        assert!(report.passed(), "{}", report.to_text());
    }

    #[test]
    fn missing_gradient_is_bookkeeping_error() {
        let mut rng = Rng::new(3);
        let mut fc = LinearLayer::<f64>::init(2, 2, &mut rng).unwrap();
        let x = normal([1, 2, 1, 1], &mut rng).unwrap();
        let mut g = fc.backward(&x, &normal([1, 2, 1, 1], &mut rng).unwrap()).unwrap().param_gradients();
        g.shift_remove("bias");
        let mut report = GradcheckReport::new("fc", 1e-6);
        let err = check_params(&mut fc, &g, |_| Ok(0.0), Selection::All, &mut rng, &mut report).unwrap_err();
        assert!(matches!(err, Error::Bookkeeping(_)));
    }
}
