//! Whole-network execution: run the layer graph forward to its detection
//! heads, optionally keeping the caches needed to run it backward.

use num_traits::Float;

use super::ops;
use crate::error::{Error, Result};
use crate::netdef::{Layer, ModelWeights, NetConfig, YoloSpec};
use crate::tensor::{Shape, Tensor};

/// One detection head: the raw tensor feeding a yolo layer, the spec that
/// decodes it, and the yolo layer's graph index.
#[derive(Clone, Debug)]
pub struct Head<F> {
    pub tensor: Tensor<F>,
    pub spec: YoloSpec,
    pub layer_index: usize,
}

/// Everything the backward pass needs from a forward run.
pub struct ForwardTrace<F> {
    pub input: Tensor<F>,
    /// Output of every layer, in graph order.
    pub outputs: Vec<Tensor<F>>,
    /// Raw (pre-batch-norm) convolution output for BN layers.
    pub pre_bn: Vec<Option<Tensor<F>>>,
    /// Max-pool argmax caches.
    pub argmax: Vec<Option<Vec<usize>>>,
}

fn missing_weights(i: usize) -> Error {
    Error::Weights(format!("layer {i}: convolutional layer has no weights entry"))
}

fn at_layer(i: usize, e: Error) -> Error {
    match e {
        Error::Shape(msg) => Error::Shape(format!("layer {i}: {msg}")),
        other => other,
    }
}

fn check_input<F: Float>(cfg: &NetConfig, batch: &Tensor<F>) -> Result<()> {
    let s = batch.shape();
    if s.c != cfg.input_c || s.h != cfg.input_h || s.w != cfg.input_w {
        return Err(Error::Shape(format!(
            "network input must be nx{}x{}x{}, got {}",
            cfg.input_c, cfg.input_h, cfg.input_w, s
        )));
    }
    Ok(())
}

fn run<F: Float + Send + Sync>(
    cfg: &NetConfig,
    weights: &ModelWeights<F>,
    batch: &Tensor<F>,
    keep_caches: bool,
) -> Result<(Vec<Head<F>>, ForwardTrace<F>)> {
    check_input(cfg, batch)?;
    if weights.layers.len() != cfg.layers.len() {
        return Err(Error::Weights(format!(
            "weights cover {} layers, graph has {}",
            weights.layers.len(),
            cfg.layers.len()
        )));
    }

    let n_layers = cfg.layers.len();
    let mut outputs: Vec<Tensor<F>> = Vec::with_capacity(n_layers);
    let mut pre_bn: Vec<Option<Tensor<F>>> = Vec::with_capacity(n_layers);
    let mut argmax: Vec<Option<Vec<usize>>> = Vec::with_capacity(n_layers);
    let mut heads: Vec<Head<F>> = Vec::new();

    for (i, layer) in cfg.layers.iter().enumerate() {
        let input = if i == 0 { batch } else { &outputs[i - 1] };
        let (out, cache_pre, cache_arg) = match layer {
            Layer::Convolutional(spec) => {
                let w = weights.layers[i].as_ref().ok_or_else(|| missing_weights(i))?;
                let (y, pre) = ops::conv_forward_full(input, w, spec).map_err(|e| at_layer(i, e))?;
                (y, if keep_caches { pre } else { None }, None)
            }
            Layer::Maxpool(spec) => {
                let (y, arg) = ops::maxpool_forward(input, spec).map_err(|e| at_layer(i, e))?;
                (y, None, keep_caches.then_some(arg))
            }
            Layer::Upsample { factor } => (ops::upsample_forward(input, *factor), None, None),
            Layer::Route { sources } => {
                let inputs: Vec<&Tensor<F>> = sources.iter().map(|&s| &outputs[s]).collect();
                (ops::route_forward(&inputs).map_err(|e| at_layer(i, e))?, None, None)
            }
            Layer::Yolo(spec) => {
                // The head tensor is the yolo layer's input, passed through.
                heads.push(Head {
                    tensor: input.clone(),
                    spec: spec.clone(),
                    layer_index: i,
                });
                (input.clone(), None, None)
            }
        };
        debug_assert_eq!(
            (out.shape().c, out.shape().h, out.shape().w),
            (cfg.shapes[i].c, cfg.shapes[i].h, cfg.shapes[i].w),
            "layer {i} output disagrees with shape inference"
        );
        outputs.push(out);
        pre_bn.push(cache_pre);
        argmax.push(cache_arg);
    }

    // Coarse scale (smaller grid) first, stable for equal sizes.
    heads.sort_by_key(|h| h.tensor.shape().h);
    let trace = ForwardTrace {
        input: batch.clone(),
        outputs,
        pre_bn,
        argmax,
    };
    Ok((heads, trace))
}

/// Execute the graph and return its detection heads, coarse scale first.
pub fn forward_pass<F: Float + Send + Sync>(
    cfg: &NetConfig,
    weights: &ModelWeights<F>,
    batch: &Tensor<F>,
) -> Result<Vec<Head<F>>> {
    Ok(run(cfg, weights, batch, false)?.0)
}

/// [`forward_pass`] keeping every per-layer cache for [`backward_pass`].
pub fn forward_traced<F: Float + Send + Sync>(
    cfg: &NetConfig,
    weights: &ModelWeights<F>,
    batch: &Tensor<F>,
) -> Result<(Vec<Head<F>>, ForwardTrace<F>)> {
    run(cfg, weights, batch, true)
}

/// Backpropagate head gradients through the whole graph.
///
/// `head_grads` pairs each yolo layer index with the gradient of the loss
/// w.r.t. that head tensor. Returns parameter gradients in a structure
/// mirroring [`ModelWeights`]; batch-norm rolling statistics are constants
/// and keep zero gradients. Gradient accumulation follows fixed
/// reverse-graph order, so results are bit-reproducible.
pub fn backward_pass<F: Float + Send + Sync>(
    cfg: &NetConfig,
    weights: &ModelWeights<F>,
    trace: &ForwardTrace<F>,
    head_grads: &[(usize, Tensor<F>)],
) -> Result<ModelWeights<F>> {
    let n_layers = cfg.layers.len();
    let mut grads = ModelWeights::zeroed(cfg);
    grads.images_seen = 0;
    // Gradient w.r.t. each layer's output, accumulated as consumers report.
    let mut out_grads: Vec<Option<Tensor<F>>> = vec![None; n_layers];

    for &(layer_index, ref g) in head_grads {
        if !matches!(cfg.layers.get(layer_index), Some(Layer::Yolo(_))) {
            return Err(Error::Data(format!(
                "head gradient targets layer {layer_index}, which is not a yolo layer"
            )));
        }
        let expected = trace.outputs[layer_index].shape();
        if g.shape() != expected {
            return Err(Error::Shape(format!(
                "head gradient {} does not match head tensor {}",
                g.shape(),
                expected
            )));
        }
        accumulate(&mut out_grads[layer_index], g);
    }

    for i in (0..n_layers).rev() {
        let Some(g_out) = out_grads[i].take() else {
            continue; // nothing downstream consumed this layer
        };
        match &cfg.layers[i] {
            Layer::Convolutional(spec) => {
                let w = weights.layers[i].as_ref().ok_or_else(|| missing_weights(i))?;
                let x = layer_input(trace, i);
                let (gx, gw) = ops::conv_backward(
                    x,
                    w,
                    spec,
                    &trace.outputs[i],
                    trace.pre_bn[i].as_ref(),
                    &g_out,
                )
                .map_err(|e| at_layer(i, e))?;
                add_conv_grads(grads.layers[i].as_mut().unwrap(), &gw);
                push_back(&mut out_grads, i, gx);
            }
            Layer::Maxpool(_) => {
                let arg = trace.argmax[i].as_ref().ok_or_else(|| {
                    Error::Data(format!("layer {i}: max-pool backward needs a traced forward"))
                })?;
                let gx = ops::maxpool_backward(&g_out, arg, layer_input(trace, i).shape())?;
                push_back(&mut out_grads, i, gx);
            }
            Layer::Upsample { factor } => {
                let gx = ops::upsample_backward(&g_out, *factor, layer_input(trace, i).shape());
                push_back(&mut out_grads, i, gx);
            }
            Layer::Route { sources } => {
                let shapes: Vec<Shape> = sources.iter().map(|&s| trace.outputs[s].shape()).collect();
                let parts = ops::route_backward(&g_out, &shapes).map_err(|e| at_layer(i, e))?;
                for (&s, part) in sources.iter().zip(parts) {
                    accumulate(&mut out_grads[s], &part);
                }
            }
            Layer::Yolo(_) => {
                // Identity pass-through.
                push_back(&mut out_grads, i, g_out);
            }
        }
    }
    Ok(grads)
}

/// The tensor layer `i` consumed during the traced forward.
fn layer_input<F>(trace: &ForwardTrace<F>, i: usize) -> &Tensor<F> {
    if i == 0 {
        &trace.input
    } else {
        &trace.outputs[i - 1]
    }
}

/// Hand a gradient to layer `i`'s predecessor (dropped at the input).
fn push_back<F: Float>(out_grads: &mut [Option<Tensor<F>>], i: usize, g: Tensor<F>) {
    if i > 0 {
        accumulate(&mut out_grads[i - 1], &g);
    }
}

fn accumulate<F: Float>(slot: &mut Option<Tensor<F>>, g: &Tensor<F>) {
    match slot {
        None => *slot = Some(g.clone()),
        Some(acc) => {
            for (a, &v) in acc.data_mut().iter_mut().zip(g.data()) {
                *a = *a + v;
            }
        }
    }
}

fn add_conv_grads<F: Float>(acc: &mut crate::netdef::ConvWeights<F>, g: &crate::netdef::ConvWeights<F>) {
    for (a, &v) in acc.biases.iter_mut().zip(&g.biases) {
        *a = *a + v;
    }
    if let (Some(abn), Some(gbn)) = (acc.bn.as_mut(), g.bn.as_ref()) {
        for (a, &v) in abn.gamma.iter_mut().zip(&gbn.gamma) {
            *a = *a + v;
        }
    }
    for (a, &v) in acc.kernel.iter_mut().zip(&g.kernel) {
        *a = *a + v;
    }
}
