//! Binary weights codec.
//!
//! Layout (little-endian): a 20-byte header — major `i32` (must be 0),
//! minor `i32` (must be 2), revision `i32`, images_seen `i64` — followed by
//! raw 32-bit floats. For each convolutional layer, in graph order:
//! biases/β (`out_c`), then when batch-normalized γ, rolling mean, rolling
//! variance (`out_c` each), then kernel weights in `out_c → in_c → kh → kw`
//! order. Nothing else is stored; the graph text supplies all geometry.

use num_traits::Float;

use super::{Layer, NetConfig};
use crate::error::{Error, Result};

/// Batch-norm statistics and scale for one convolutional layer. The shift
/// term β lives in [`ConvWeights::biases`], as the reference format does.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormWeights<F> {
    pub gamma: Vec<F>,
    pub rolling_mean: Vec<F>,
    pub rolling_var: Vec<F>,
}

/// All parameters of one convolutional layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvWeights<F> {
    pub out_c: usize,
    pub in_c: usize,
    pub size: usize,
    /// Plain bias without batch norm; the β shift with it.
    pub biases: Vec<F>,
    pub bn: Option<BatchNormWeights<F>>,
    /// Flat kernel, `out_c · in_c · size²` values in out_c→in_c→kh→kw order.
    pub kernel: Vec<F>,
}

impl<F: Float> ConvWeights<F> {
    pub fn zeroed(out_c: usize, in_c: usize, size: usize, batch_normalize: bool) -> Self {
        ConvWeights {
            out_c,
            in_c,
            size,
            biases: vec![F::zero(); out_c],
            bn: batch_normalize.then(|| BatchNormWeights {
                gamma: vec![F::zero(); out_c],
                rolling_mean: vec![F::zero(); out_c],
                rolling_var: vec![F::zero(); out_c],
            }),
            kernel: vec![F::zero(); out_c * in_c * size * size],
        }
    }

    /// Serialized float count: 4·out_c + kernel with batch norm,
    /// out_c + kernel without.
    pub fn param_count(&self) -> usize {
        let per_channel = if self.bn.is_some() { 4 } else { 1 };
        per_channel * self.out_c + self.out_c * self.in_c * self.size * self.size
    }

    /// Flat kernel index of (out channel, in channel, ky, kx).
    #[inline]
    pub fn kernel_index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_c + i) * self.size + ky) * self.size + kx
    }

    pub fn convert<G: Float>(&self) -> ConvWeights<G> {
        let conv = |v: &[F]| -> Vec<G> {
            v.iter().map(|&x| G::from(x).expect("float conversion")).collect()
        };
        ConvWeights {
            out_c: self.out_c,
            in_c: self.in_c,
            size: self.size,
            biases: conv(&self.biases),
            bn: self.bn.as_ref().map(|bn| BatchNormWeights {
                gamma: conv(&bn.gamma),
                rolling_mean: conv(&bn.rolling_mean),
                rolling_var: conv(&bn.rolling_var),
            }),
            kernel: conv(&self.kernel),
        }
    }
}

/// Every parameter of a model, aligned with its graph: entry `i` is `Some`
/// exactly when layer `i` is convolutional.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights<F = f32> {
    pub images_seen: i64,
    pub layers: Vec<Option<ConvWeights<F>>>,
}

impl<F: Float> ModelWeights<F> {
    /// All-zero parameters shaped for `cfg`.
    pub fn zeroed(cfg: &NetConfig) -> Self {
        let layers = cfg
            .layers
            .iter()
            .enumerate()
            .map(|(i, layer)| match layer {
                Layer::Convolutional(spec) => {
                    let in_c = cfg.layer_input_shape(i).c;
                    Some(ConvWeights::zeroed(
                        spec.filters,
                        in_c,
                        spec.size,
                        spec.batch_normalize,
                    ))
                }
                _ => None,
            })
            .collect();
        ModelWeights { images_seen: 0, layers }
    }

    pub fn float_count(&self) -> usize {
        self.layers
            .iter()
            .flatten()
            .map(ConvWeights::param_count)
            .sum()
    }

    pub fn convert<G: Float>(&self) -> ModelWeights<G> {
        ModelWeights {
            images_seen: self.images_seen,
            layers: self
                .layers
                .iter()
                .map(|l| l.as_ref().map(ConvWeights::convert))
                .collect(),
        }
    }

    /// Visit every *trainable* parameter slice in a fixed order (per conv
    /// layer: biases/β, then γ, then kernel). Rolling mean/variance are
    /// statistics, not parameters, and are skipped.
    pub fn for_each_trainable(&self, mut f: impl FnMut(&[F])) {
        for layer in self.layers.iter().flatten() {
            f(&layer.biases);
            if let Some(bn) = &layer.bn {
                f(&bn.gamma);
            }
            f(&layer.kernel);
        }
    }

    /// Mutable variant of [`ModelWeights::for_each_trainable`], same order.
    pub fn for_each_trainable_mut(&mut self, mut f: impl FnMut(&mut [F])) {
        for layer in self.layers.iter_mut().flatten() {
            f(&mut layer.biases);
            if let Some(bn) = &mut layer.bn {
                f(&mut bn.gamma);
            }
            f(&mut layer.kernel);
        }
    }

    /// The trainable slices collected in the canonical order, so callers
    /// can walk parameters and a like-shaped gradient model in lockstep.
    pub fn trainable_slices(&self) -> Vec<&[F]> {
        let mut out = Vec::new();
        for layer in self.layers.iter().flatten() {
            out.push(layer.biases.as_slice());
            if let Some(bn) = &layer.bn {
                out.push(bn.gamma.as_slice());
            }
            out.push(layer.kernel.as_slice());
        }
        out
    }

    /// Mutable variant of [`ModelWeights::trainable_slices`], same order.
    pub fn trainable_slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut out = Vec::new();
        for layer in self.layers.iter_mut().flatten() {
            let ConvWeights { biases, bn, kernel, .. } = layer;
            out.push(biases.as_mut_slice());
            if let Some(bn) = bn {
                out.push(bn.gamma.as_mut_slice());
            }
            out.push(kernel.as_mut_slice());
        }
        out
    }
}

/// Expected serialized float count for a graph.
pub fn expected_float_count(cfg: &NetConfig) -> usize {
    ModelWeights::<f32>::zeroed(cfg).float_count()
}

const HEADER_BYTES: usize = 20;

/// Decode a weights blob against its graph.
pub fn load_weights(bytes: &[u8], cfg: &NetConfig) -> Result<ModelWeights<f32>> {
    if bytes.len() < HEADER_BYTES {
        return Err(Error::Weights(format!(
            "file is {} bytes, smaller than the 20-byte header",
            bytes.len()
        )));
    }
    let i32_at = |o: usize| i32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let major = i32_at(0);
    let minor = i32_at(4);
    let _revision = i32_at(8);
    let images_seen = i64::from_le_bytes(bytes[12..20].try_into().unwrap());
    if major != 0 || minor != 2 {
        return Err(Error::Weights(format!(
            "unsupported weights version {major}.{minor}; only 0.2 (20-byte header) is readable"
        )));
    }

    let body = &bytes[HEADER_BYTES..];
    let expected = expected_float_count(cfg);
    if body.len() % 4 != 0 || body.len() / 4 != expected {
        return Err(Error::Weights(format!(
            "weights body holds {} bytes ({} whole floats); the graph expects exactly {} floats",
            body.len(),
            body.len() / 4,
            expected
        )));
    }

    let mut cursor = 0usize;
    let mut take = |n: usize| -> Vec<f32> {
        let out = body[cursor * 4..(cursor + n) * 4]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        cursor += n;
        out
    };

    let mut layers = Vec::with_capacity(cfg.layers.len());
    for (i, layer) in cfg.layers.iter().enumerate() {
        let Layer::Convolutional(spec) = layer else {
            layers.push(None);
            continue;
        };
        let out_c = spec.filters;
        let in_c = cfg.layer_input_shape(i).c;
        let biases = take(out_c);
        let bn = spec.batch_normalize.then(|| BatchNormWeights {
            gamma: take(out_c),
            rolling_mean: take(out_c),
            rolling_var: take(out_c),
        });
        let kernel = take(out_c * in_c * spec.size * spec.size);
        layers.push(Some(ConvWeights {
            out_c,
            in_c,
            size: spec.size,
            biases,
            bn,
            kernel,
        }));
    }
    debug_assert_eq!(cursor, expected);
    Ok(ModelWeights { images_seen, layers })
}

/// Encode a model to the byte format [`load_weights`] reads.
pub fn save_weights(weights: &ModelWeights<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_BYTES + 4 * weights.float_count());
    out.extend_from_slice(&0i32.to_le_bytes());
    out.extend_from_slice(&2i32.to_le_bytes());
    out.extend_from_slice(&0i32.to_le_bytes());
    out.extend_from_slice(&weights.images_seen.to_le_bytes());
    let mut push = |v: &[f32]| {
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    };
    for layer in weights.layers.iter().flatten() {
        push(&layer.biases);
        if let Some(bn) = &layer.bn {
            push(&bn.gamma);
            push(&bn.rolling_mean);
            push(&bn.rolling_var);
        }
        push(&layer.kernel);
    }
    out
}
