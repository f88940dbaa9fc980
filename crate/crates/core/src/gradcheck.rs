//! Finite-difference verification of every backward implementation.
//!
//! Each check draws random small problems in f64, computes analytic
//! gradients with the production backward code, and compares against
//! central differences. Points where the finite difference itself is
//! numerically untrustworthy — a max-pool argmax flip or a leaky-ReLU kink
//! inside the probe interval — are detected by comparing two step sizes
//! and skipped; skips above a small fraction fail the check, so the filter
//! cannot hide a systematic gradient bug.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{ripeness_classes, synthesize_dataset, GroundTruth};
use crate::error::Result;
use crate::layers::ops::{
    conv_backward, conv_forward, conv_forward_full, maxpool_backward, maxpool_forward,
    route_backward, route_forward, upsample_backward, upsample_forward,
};
use crate::layers::{backward_pass, forward_pass, forward_traced};
use crate::netdef::{Activation, ConvSpec, ConvWeights, MaxpoolSpec};
use crate::postprocess::BBox;
use crate::presets::micro_ripeness;
use crate::tensor::{Shape, Tensor};
use crate::trainer::{yolo_loss, LossWeights};

/// Maximum allowed relative error between analytic and numeric gradients.
pub const FD_TOLERANCE: f64 = 1e-4;

/// Fraction of comparisons allowed to be skipped as numerically unstable.
pub const MAX_SKIP_FRACTION: f64 = 0.05;

#[derive(Clone, Debug)]
pub struct CheckSummary {
    pub name: &'static str,
    pub draws: usize,
    pub comparisons: usize,
    pub skipped: usize,
    pub max_rel_err: f64,
}

impl CheckSummary {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= FD_TOLERANCE
            && self.comparisons > 0
            && (self.skipped as f64) <= MAX_SKIP_FRACTION * (self.comparisons + self.skipped) as f64
    }
}

impl std::fmt::Display for CheckSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<16} draws {:>3}  comparisons {:>6}  skipped {:>3}  max rel err {:.3e}  {}",
            self.name,
            self.draws,
            self.comparisons,
            self.skipped,
            self.max_rel_err,
            if self.passed() { "ok" } else { "FAIL" }
        )
    }
}

/// Gradient accumulator comparing one analytic/numeric pair at a time.
struct Tally {
    comparisons: usize,
    skipped: usize,
    max_rel_err: f64,
    /// Relative errors are measured against gradient magnitude floored at
    /// this value, so absolute noise below `floor·tolerance` cannot fail
    /// a vanishing-gradient comparison.
    floor: f64,
}

impl Tally {
    fn new(floor: f64) -> Tally {
        Tally { comparisons: 0, skipped: 0, max_rel_err: 0.0, floor }
    }

    fn record(&mut self, analytic: f64, numeric: Option<f64>) {
        match numeric {
            None => self.skipped += 1,
            Some(n) => {
                let denom = analytic.abs().max(n.abs()).max(self.floor);
                let err = (analytic - n).abs() / denom;
                self.max_rel_err = self.max_rel_err.max(err);
                self.comparisons += 1;
            }
        }
    }

    fn finish(self, name: &'static str, draws: usize) -> CheckSummary {
        CheckSummary {
            name,
            draws,
            comparisons: self.comparisons,
            skipped: self.skipped,
            max_rel_err: self.max_rel_err,
        }
    }
}

/// Central difference with a two-step consistency probe: estimates at h
/// and h/2 must agree to 0.1%, otherwise the point is reported unstable.
fn stable_fd(mut eval: impl FnMut(f64) -> f64, v0: f64, h: f64) -> Option<f64> {
    let g1 = (eval(v0 + h) - eval(v0 - h)) / (2.0 * h);
    let h2 = h / 2.0;
    let g2 = (eval(v0 + h2) - eval(v0 - h2)) / (2.0 * h2);
    let scale = g1.abs().max(g2.abs()).max(1.0);
    ((g1 - g2).abs() / scale <= 1e-3).then_some(g2)
}

const LAYER_H: f64 = 1e-5;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: Shape, lo: f64, hi: f64) -> Tensor<f64> {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.gen_range(lo..hi);
    }
    t
}

/// Weighted-sum probe loss `L(y) = Σ R ⊙ y`; its gradient w.r.t. `y` is R,
/// which exercises the backward pass with a dense, structureless signal.
fn probe_loss(y: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

pub fn check_convolutional(seed: u64, draws: usize) -> Result<CheckSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new(1e-3);
    for draw in 0..draws {
        let in_c = rng.gen_range(1..=3);
        let out_c = rng.gen_range(1..=4);
        let hw = rng.gen_range(3..=6);
        let size = [1, 3][rng.gen_range(0..2)];
        let stride = rng.gen_range(1..=2);
        let padding = if rng.gen_bool(0.5) { size / 2 } else { 0 };
        let batch_normalize = draw % 2 == 0;
        let activation = if draw % 4 < 2 { Activation::Leaky } else { Activation::Linear };
        let spec = ConvSpec {
            filters: out_c,
            size,
            stride,
            padding,
            batch_normalize,
            activation,
        };
        if (hw + 2 * padding) < size {
            continue;
        }

        let x = rand_tensor(&mut rng, Shape::new(1, in_c, hw, hw), -1.0, 1.0);
        let mut w = ConvWeights::<f64>::zeroed(out_c, in_c, size, batch_normalize);
        for k in w.kernel.iter_mut() {
            *k = rng.gen_range(-1.0..1.0);
        }
        for b in w.biases.iter_mut() {
            *b = rng.gen_range(-0.5..0.5);
        }
        if let Some(bn) = &mut w.bn {
            for g in bn.gamma.iter_mut() {
                *g = rng.gen_range(0.5..1.5);
            }
            for m in bn.rolling_mean.iter_mut() {
                *m = rng.gen_range(-0.5..0.5);
            }
            for v in bn.rolling_var.iter_mut() {
                *v = rng.gen_range(0.5..1.5);
            }
        }

        let (y, pre_bn) = conv_forward_full(&x, &w, &spec)?;
        let r = rand_tensor(&mut rng, y.shape(), -1.0, 1.0);
        let (grad_in, grad_w) = conv_backward(&x, &w, &spec, &y, pre_bn.as_ref(), &r)?;

        // Input gradient.
        for i in 0..x.len() {
            let mut xp = x.clone();
            let fd = stable_fd(
                |v| {
                    xp.data_mut()[i] = v;
                    probe_loss(&conv_forward(&xp, &w, &spec).unwrap(), &r)
                },
                x.data()[i],
                LAYER_H,
            );
            tally.record(grad_in.data()[i], fd);
        }
        // Parameter gradients: biases/β, γ, kernel — the trainable set.
        for i in 0..w.biases.len() {
            let mut wp = w.clone();
            let fd = stable_fd(
                |v| {
                    wp.biases[i] = v;
                    probe_loss(&conv_forward(&x, &wp, &spec).unwrap(), &r)
                },
                w.biases[i],
                LAYER_H,
            );
            tally.record(grad_w.biases[i], fd);
        }
        if let Some(bn) = &w.bn {
            for i in 0..bn.gamma.len() {
                let mut wp = w.clone();
                let fd = stable_fd(
                    |v| {
                        wp.bn.as_mut().unwrap().gamma[i] = v;
                        probe_loss(&conv_forward(&x, &wp, &spec).unwrap(), &r)
                    },
                    bn.gamma[i],
                    LAYER_H,
                );
                tally.record(grad_w.bn.as_ref().unwrap().gamma[i], fd);
            }
        }
        for i in 0..w.kernel.len() {
            let mut wp = w.clone();
            let fd = stable_fd(
                |v| {
                    wp.kernel[i] = v;
                    probe_loss(&conv_forward(&x, &wp, &spec).unwrap(), &r)
                },
                w.kernel[i],
                LAYER_H,
            );
            tally.record(grad_w.kernel[i], fd);
        }
    }
    Ok(tally.finish("convolutional", draws))
}

pub fn check_maxpool(seed: u64, draws: usize) -> Result<CheckSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new(1e-3);
    for _ in 0..draws {
        let c = rng.gen_range(1..=3);
        let hw = rng.gen_range(3..=7);
        let size = rng.gen_range(2..=3);
        let stride = rng.gen_range(1..=2);
        let padding = rng.gen_range(0..size);
        let spec = MaxpoolSpec { size, stride, padding };
        if hw + padding < size {
            continue;
        }
        let x = rand_tensor(&mut rng, Shape::new(1, c, hw, hw), -1.0, 1.0);
        let (y, argmax) = maxpool_forward(&x, &spec)?;
        let r = rand_tensor(&mut rng, y.shape(), -1.0, 1.0);
        let grad_in = maxpool_backward(&r, &argmax, x.shape())?;
        for i in 0..x.len() {
            let mut xp = x.clone();
            let fd = stable_fd(
                |v| {
                    xp.data_mut()[i] = v;
                    probe_loss(&maxpool_forward(&xp, &spec).unwrap().0, &r)
                },
                x.data()[i],
                LAYER_H,
            );
            tally.record(grad_in.data()[i], fd);
        }
    }
    Ok(tally.finish("maxpool", draws))
}

pub fn check_upsample(seed: u64, draws: usize) -> Result<CheckSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new(1e-3);
    for _ in 0..draws {
        let c = rng.gen_range(1..=3);
        let hw = rng.gen_range(2..=5);
        let factor = rng.gen_range(2..=3);
        let x = rand_tensor(&mut rng, Shape::new(1, c, hw, hw), -1.0, 1.0);
        let y = upsample_forward(&x, factor);
        let r = rand_tensor(&mut rng, y.shape(), -1.0, 1.0);
        let grad_in = upsample_backward(&r, factor, x.shape());
        for i in 0..x.len() {
            let mut xp = x.clone();
            let fd = stable_fd(
                |v| {
                    xp.data_mut()[i] = v;
                    probe_loss(&upsample_forward(&xp, factor), &r)
                },
                x.data()[i],
                LAYER_H,
            );
            tally.record(grad_in.data()[i], fd);
        }
    }
    Ok(tally.finish("upsample", draws))
}

pub fn check_route(seed: u64, draws: usize) -> Result<CheckSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new(1e-3);
    for _ in 0..draws {
        let n_inputs = rng.gen_range(1..=3);
        let hw = rng.gen_range(2..=4);
        let inputs: Vec<Tensor<f64>> = (0..n_inputs)
            .map(|_| {
                let c = rng.gen_range(1..=3);
                rand_tensor(&mut rng, Shape::new(1, c, hw, hw), -1.0, 1.0)
            })
            .collect();
        let refs: Vec<&Tensor<f64>> = inputs.iter().collect();
        let y = route_forward(&refs)?;
        let r = rand_tensor(&mut rng, y.shape(), -1.0, 1.0);
        let shapes: Vec<Shape> = inputs.iter().map(|t| t.shape()).collect();
        let grads = route_backward(&r, &shapes)?;
        for (gi, g) in grads.iter().enumerate() {
            for i in 0..inputs[gi].len() {
                let mut cl = inputs.clone();
                let fd = stable_fd(
                    |v| {
                        cl[gi].data_mut()[i] = v;
                        let refs: Vec<&Tensor<f64>> = cl.iter().collect();
                        probe_loss(&route_forward(&refs).unwrap(), &r)
                    },
                    inputs[gi].data()[i],
                    LAYER_H,
                );
                tally.record(g.data()[i], fd);
            }
        }
    }
    Ok(tally.finish("route", draws))
}

/// Gradient of the detection loss w.r.t. a head tensor, against finite
/// differences of the scalar loss.
pub fn check_detection_loss(seed: u64, draws: usize) -> Result<CheckSummary> {
    use crate::layers::Head;
    use crate::netdef::YoloSpec;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new(1e-3);
    let lw = LossWeights::default();
    for _ in 0..draws {
        let classes = rng.gen_range(2..=4);
        let grid = rng.gen_range(3..=5);
        let spec = YoloSpec {
            classes,
            anchors: vec![(10.0, 10.0), (12.0, 12.0), (14.0, 14.0)],
            mask: vec![0, 1, 2],
        };
        let shape = Shape::new(1, (5 + classes) * 3, grid, grid);
        let tensor = rand_tensor(&mut rng, shape, -3.0, 3.0);
        let n_truths = rng.gen_range(1..=3);
        let truths: Vec<GroundTruth> = (0..n_truths)
            .map(|_| GroundTruth {
                class_id: rng.gen_range(0..classes),
                bbox: BBox {
                    cx: rng.gen_range(0.1..0.9),
                    cy: rng.gen_range(0.1..0.9),
                    w: rng.gen_range(0.1..0.5),
                    h: rng.gen_range(0.1..0.5),
                },
            })
            .collect();
        let input_size = 32;
        let head = Head { tensor: tensor.clone(), spec: spec.clone(), layer_index: 0 };
        let (_, grads) = yolo_loss(&[head], &truths, input_size, &lw)?;
        for i in 0..tensor.len() {
            let mut tp = tensor.clone();
            let fd = stable_fd(
                |v| {
                    tp.data_mut()[i] = v;
                    let h = Head { tensor: tp.clone(), spec: spec.clone(), layer_index: 0 };
                    yolo_loss(&[h], &truths, input_size, &lw).unwrap().0
                },
                tensor.data()[i],
                LAYER_H,
            );
            tally.record(grads[0].data()[i], fd);
        }
    }
    Ok(tally.finish("detection loss", draws))
}

/// End-to-end check on the bundled micro graph: full forward, detection
/// loss, and full backward, against finite differences over the trainable
/// parameters. Each draw probes a rotating 1-in-`draws` subset so the
/// union covers every parameter.
pub fn check_end_to_end(seed: u64, draws: usize) -> Result<CheckSummary> {
    let cfg = micro_ripeness()?;
    let table = ripeness_classes();
    let samples = synthesize_dataset(draws, seed ^ 0x5eed, &table, cfg.input_w);
    let lw = LossWeights::default();
    // The full-model loss sums ~200 terms, so finite differences carry more
    // roundoff than single-layer probes; a larger step and floor keep the
    // comparison inside the region where FD itself is trustworthy.
    let h = 1e-4;
    let mut tally = Tally::new(1e-2);

    let base = crate::trainer::init_weights(&cfg, seed).convert::<f64>();
    for (draw, sample) in samples.iter().enumerate() {
        let image = sample.image.convert::<f64>();
        // Perturb the starting point so different draws see different
        // weight configurations, not just different images.
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(draw as u64));
        let mut weights = base.clone();
        weights.for_each_trainable_mut(|s| {
            for v in s.iter_mut() {
                *v += rng.gen_range(-0.05..0.05);
            }
        });

        let (heads, trace) = forward_traced(&cfg, &weights, &image)?;
        let (_, head_grads) = yolo_loss(&heads, &sample.truths, cfg.input_w, &lw)?;
        let paired: Vec<_> = heads.iter().map(|h| h.layer_index).zip(head_grads).collect();
        let analytic = backward_pass(&cfg, &weights, &trace, &paired)?;

        let flat_analytic: Vec<f64> = {
            let mut v = Vec::new();
            analytic.for_each_trainable(|s| v.extend_from_slice(s));
            v
        };
        let n_params = flat_analytic.len();

        let eval = |weights: &crate::netdef::ModelWeights<f64>| -> f64 {
            let heads = forward_pass(&cfg, weights, &image).unwrap();
            yolo_loss(&heads, &sample.truths, cfg.input_w, &lw).unwrap().0
        };

        for k in (draw % draws..n_params).step_by(draws) {
            let v0 = flat_analytic_param(&weights, k);
            let mut wp = weights.clone();
            let fd = stable_fd(
                |v| {
                    set_param(&mut wp, k, v);
                    eval(&wp)
                },
                v0,
                h,
            );
            tally.record(flat_analytic[k], fd);
        }
    }
    Ok(tally.finish("end to end", draws))
}

/// Read trainable parameter `k` in canonical flat order.
fn flat_analytic_param(w: &crate::netdef::ModelWeights<f64>, k: usize) -> f64 {
    let mut i = 0;
    let mut out = None;
    w.for_each_trainable(|s| {
        if out.is_none() && k < i + s.len() {
            out = Some(s[k - i]);
        }
        i += s.len();
    });
    out.expect("parameter index out of range")
}

/// Write trainable parameter `k` in canonical flat order.
fn set_param(w: &mut crate::netdef::ModelWeights<f64>, k: usize, v: f64) {
    let mut i = 0;
    let mut done = false;
    w.for_each_trainable_mut(|s| {
        if !done && k < i + s.len() {
            s[k - i] = v;
            done = true;
        }
        i += s.len();
    });
    assert!(done, "parameter index out of range");
}

/// Run the whole suite with `draws` random draws per check.
pub fn run_all(seed: u64, draws: usize) -> Result<Vec<CheckSummary>> {
    Ok(vec![
        check_convolutional(seed, draws)?,
        check_maxpool(seed.wrapping_add(1), draws)?,
        check_upsample(seed.wrapping_add(2), draws)?,
        check_route(seed.wrapping_add(3), draws)?,
        check_detection_loss(seed.wrapping_add(4), draws)?,
        check_end_to_end(seed.wrapping_add(5), draws)?,
    ])
}
