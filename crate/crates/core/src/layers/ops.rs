//! Forward and backward math for each layer kind.
//!
//! Forward maps are written exactly once; every backward here is the exact
//! gradient of the corresponding forward as implemented (verified against
//! central finite differences in the test suite). Batch norm uses rolling
//! statistics in both directions — mean and variance are constants, never
//! recomputed from the batch — so gradients are exact for the inference
//! forward map. All reductions run in fixed index order.

use num_traits::Float;

use crate::error::{Error, Result};
use crate::netdef::{Activation, ConvSpec, ConvWeights, MaxpoolSpec};
use crate::tensor::{col2im, conv_out_dim, gemm, im2col, Matrix, Shape, Tensor};

/// Batch-norm variance floor.
pub fn bn_epsilon<F: Float>() -> F {
    F::from(1e-6).unwrap()
}

/// Negative-side slope of the leaky activation.
pub fn leaky_slope<F: Float>() -> F {
    F::from(0.1).unwrap()
}

fn apply_activation<F: Float>(v: F, act: Activation) -> F {
    match act {
        Activation::Linear => v,
        Activation::Leaky => {
            if v > F::zero() {
                v
            } else {
                leaky_slope::<F>() * v
            }
        }
    }
}

/// Derivative of the activation, recovered from the *output* value: leaky
/// preserves sign, so y > 0 exactly when the pre-activation was > 0.
fn activation_slope_from_output<F: Float>(y: F, act: Activation) -> F {
    match act {
        Activation::Linear => F::one(),
        Activation::Leaky => {
            if y > F::zero() {
                F::one()
            } else {
                leaky_slope::<F>()
            }
        }
    }
}

fn check_conv_input<F: Float>(x: &Tensor<F>, w: &ConvWeights<F>) -> Result<()> {
    if x.shape().c != w.in_c {
        return Err(Error::Shape(format!(
            "conv expects {} input channels, got tensor {}",
            w.in_c,
            x.shape()
        )));
    }
    Ok(())
}

/// Convolution forward: `act(BN(conv(x)))` with batch norm, or
/// `act(conv(x) + bias)` without. Returns the activated output and, when
/// batch-normalized, the raw convolution output the backward pass needs.
pub fn conv_forward_full<F: Float + Send + Sync>(
    x: &Tensor<F>,
    w: &ConvWeights<F>,
    spec: &ConvSpec,
) -> Result<(Tensor<F>, Option<Tensor<F>>)> {
    check_conv_input(x, w)?;
    let s = x.shape();
    let h_out = conv_out_dim(s.h, spec.size, spec.stride, 2 * spec.padding)?;
    let w_out = conv_out_dim(s.w, spec.size, spec.stride, 2 * spec.padding)?;
    let out_shape = Shape::new(s.n, w.out_c, h_out, w_out);
    let mut y = Tensor::zeros(out_shape);
    let mut pre_bn = spec.batch_normalize.then(|| Tensor::zeros(out_shape));

    // Kernel as an out_c × (in_c·k²) matrix; its column order matches the
    // im2col row order by construction.
    let k_mat = Matrix::from_vec(w.out_c, w.in_c * w.size * w.size, w.kernel.clone())?;
    let eps = bn_epsilon::<F>();
    let plane = h_out * w_out;

    for n in 0..s.n {
        let col = im2col(&x.batch_item(n), spec.size, spec.stride, spec.padding)?;
        // z is out_c × plane — already the NCHW layout of one batch item.
        let z = gemm(&k_mat, &col)?;
        let item = &mut y.data_mut()[n * w.out_c * plane..(n + 1) * w.out_c * plane];
        for c in 0..w.out_c {
            let z_row = z.row(c);
            let out_row = &mut item[c * plane..(c + 1) * plane];
            if let Some(bn) = &w.bn {
                let denom = (bn.rolling_var[c] + eps).sqrt();
                let scale = bn.gamma[c] / denom;
                let shift = w.biases[c] - bn.rolling_mean[c] * scale;
                for (o, &v) in out_row.iter_mut().zip(z_row) {
                    *o = apply_activation(v * scale + shift, spec.activation);
                }
            } else {
                let b = w.biases[c];
                for (o, &v) in out_row.iter_mut().zip(z_row) {
                    *o = apply_activation(v + b, spec.activation);
                }
            }
        }
        if let Some(pre) = &mut pre_bn {
            let dst = &mut pre.data_mut()[n * w.out_c * plane..(n + 1) * w.out_c * plane];
            dst.copy_from_slice(z.data());
        }
    }
    Ok((y, pre_bn))
}

/// [`conv_forward_full`] without the backward cache.
pub fn conv_forward<F: Float + Send + Sync>(
    x: &Tensor<F>,
    w: &ConvWeights<F>,
    spec: &ConvSpec,
) -> Result<Tensor<F>> {
    Ok(conv_forward_full(x, w, spec)?.0)
}

/// Convolution backward. `y` is the forward output (for the activation
/// slope), `pre_bn` the cached raw convolution when batch-normalized.
/// Returns the input gradient and the parameter gradients.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward<F: Float + Send + Sync>(
    x: &Tensor<F>,
    w: &ConvWeights<F>,
    spec: &ConvSpec,
    y: &Tensor<F>,
    pre_bn: Option<&Tensor<F>>,
    grad_out: &Tensor<F>,
) -> Result<(Tensor<F>, ConvWeights<F>)> {
    check_conv_input(x, w)?;
    if grad_out.shape() != y.shape() {
        return Err(Error::Shape(format!(
            "conv backward: gradient {} does not match output {}",
            grad_out.shape(),
            y.shape()
        )));
    }
    if spec.batch_normalize && pre_bn.is_none() {
        return Err(Error::Data(
            "conv backward: batch-normalized layer is missing its forward cache".into(),
        ));
    }

    let s = x.shape();
    let os = y.shape();
    let plane = os.h * os.w;
    let eps = bn_epsilon::<F>();
    let mut grads = ConvWeights::zeroed(w.out_c, w.in_c, w.size, spec.batch_normalize);
    let mut grad_in = Tensor::zeros(s);

    let k_mat = Matrix::from_vec(w.out_c, w.in_c * w.size * w.size, w.kernel.clone())?;
    let k_t = k_mat.transpose();
    let item_shape = Shape::new(1, s.c, s.h, s.w);

    for n in 0..s.n {
        // dz: gradient at the raw convolution output, one row per channel.
        let mut dz = Matrix::zeros(w.out_c, plane);
        let y_item = &y.data()[n * w.out_c * plane..(n + 1) * w.out_c * plane];
        let g_item = &grad_out.data()[n * w.out_c * plane..(n + 1) * w.out_c * plane];
        for c in 0..w.out_c {
            let y_row = &y_item[c * plane..(c + 1) * plane];
            let g_row = &g_item[c * plane..(c + 1) * plane];
            let dz_row = &mut dz.data_mut()[c * plane..(c + 1) * plane];
            // Through the activation first.
            for ((d, &g), &yv) in dz_row.iter_mut().zip(g_row).zip(y_row) {
                *d = g * activation_slope_from_output(yv, spec.activation);
            }
            if let Some(bn) = &w.bn {
                let bn_grads = grads.bn.as_mut().unwrap();
                let denom = (bn.rolling_var[c] + eps).sqrt();
                let scale = bn.gamma[c] / denom;
                let mean = bn.rolling_mean[c];
                let pre = pre_bn.unwrap();
                let z_row = &pre.data()[n * w.out_c * plane + c * plane..][..plane];
                let mut d_beta = F::zero();
                let mut d_gamma = F::zero();
                for (d, &zv) in dz_row.iter_mut().zip(z_row) {
                    d_beta = d_beta + *d;
                    d_gamma = d_gamma + *d * (zv - mean) / denom;
                    *d = *d * scale; // now the gradient at the raw conv
                }
                grads.biases[c] = grads.biases[c] + d_beta;
                bn_grads.gamma[c] = bn_grads.gamma[c] + d_gamma;
            } else {
                let mut d_bias = F::zero();
                for d in dz_row.iter() {
                    d_bias = d_bias + *d;
                }
                grads.biases[c] = grads.biases[c] + d_bias;
            }
        }

        // Kernel gradient: dK += dz · colᵀ; input gradient: col2im(Kᵀ · dz).
        let col = im2col(&x.batch_item(n), spec.size, spec.stride, spec.padding)?;
        let dk = gemm(&dz, &col.transpose())?;
        for (g, &d) in grads.kernel.iter_mut().zip(dk.data()) {
            *g = *g + d;
        }
        let dcol = gemm(&k_t, &dz)?;
        let dx_item = col2im(&dcol, item_shape, spec.size, spec.stride, spec.padding)?;
        let dst = &mut grad_in.data_mut()[n * s.c * s.h * s.w..(n + 1) * s.c * s.h * s.w];
        for (d, &v) in dst.iter_mut().zip(dx_item.data()) {
            *d = *d + v;
        }
    }
    Ok((grad_in, grads))
}

/// Max pooling. Window origins shift left/up by `padding/2`; out-of-bounds
/// positions read as −∞. Returns the output and the flat input index of
/// each window's max (`usize::MAX` when a window sees no real input), ties
/// broken toward the smallest flat index.
pub fn maxpool_forward<F: Float>(
    x: &Tensor<F>,
    spec: &MaxpoolSpec,
) -> Result<(Tensor<F>, Vec<usize>)> {
    let s = x.shape();
    let h_out = conv_out_dim(s.h, spec.size, spec.stride, spec.padding)?;
    let w_out = conv_out_dim(s.w, spec.size, spec.stride, spec.padding)?;
    let offset = (spec.padding / 2) as isize;
    let out_shape = Shape::new(s.n, s.c, h_out, w_out);
    let mut y = Tensor::zeros(out_shape);
    let mut argmax = vec![usize::MAX; out_shape.len()];

    for n in 0..s.n {
        for c in 0..s.c {
            for oy in 0..h_out {
                for ox in 0..w_out {
                    let mut best = F::neg_infinity();
                    let mut best_idx = usize::MAX;
                    for ky in 0..spec.size {
                        let iy = (oy * spec.stride + ky) as isize - offset;
                        if iy < 0 || iy >= s.h as isize {
                            continue;
                        }
                        for kx in 0..spec.size {
                            let ix = (ox * spec.stride + kx) as isize - offset;
                            if ix < 0 || ix >= s.w as isize {
                                continue;
                            }
                            let idx = s.index(n, c, iy as usize, ix as usize);
                            let v = x.data()[idx];
                            if best_idx == usize::MAX || v > best {
                                best = v;
                                best_idx = idx;
                            }
                        }
                    }
                    let out_idx = out_shape.index(n, c, oy, ox);
                    y.data_mut()[out_idx] = best;
                    argmax[out_idx] = best_idx;
                }
            }
        }
    }
    Ok((y, argmax))
}

/// Max-pool backward: route each output gradient to its cached argmax.
pub fn maxpool_backward<F: Float>(
    grad_out: &Tensor<F>,
    argmax: &[usize],
    input_shape: Shape,
) -> Result<Tensor<F>> {
    if grad_out.len() != argmax.len() {
        return Err(Error::Data(
            "maxpool backward: argmax cache does not match gradient size".into(),
        ));
    }
    let mut grad_in = Tensor::zeros(input_shape);
    for (&g, &idx) in grad_out.data().iter().zip(argmax) {
        if idx != usize::MAX {
            grad_in.data_mut()[idx] = grad_in.data_mut()[idx] + g;
        }
    }
    Ok(grad_in)
}

/// Nearest-neighbor upsample: `y[n,c,i,j] = x[n,c,i/factor,j/factor]`.
pub fn upsample_forward<F: Float>(x: &Tensor<F>, factor: usize) -> Tensor<F> {
    let s = x.shape();
    let out_shape = Shape::new(s.n, s.c, s.h * factor, s.w * factor);
    let mut y = Tensor::zeros(out_shape);
    for n in 0..s.n {
        for c in 0..s.c {
            for i in 0..out_shape.h {
                for j in 0..out_shape.w {
                    *y.at_mut(n, c, i, j) = x.at(n, c, i / factor, j / factor);
                }
            }
        }
    }
    y
}

/// Upsample backward: each input cell collects its factor×factor block.
pub fn upsample_backward<F: Float>(
    grad_out: &Tensor<F>,
    factor: usize,
    input_shape: Shape,
) -> Tensor<F> {
    let os = grad_out.shape();
    let mut grad_in = Tensor::zeros(input_shape);
    for n in 0..os.n {
        for c in 0..os.c {
            for i in 0..os.h {
                for j in 0..os.w {
                    let dst = grad_in.at_mut(n, c, i / factor, j / factor);
                    *dst = *dst + grad_out.at(n, c, i, j);
                }
            }
        }
    }
    grad_in
}

/// Channel-wise concatenation of same-geometry tensors, in listed order.
pub fn route_forward<F: Float>(inputs: &[&Tensor<F>]) -> Result<Tensor<F>> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::Shape("route needs at least one input".into()))?
        .shape();
    let mut total_c = 0;
    for t in inputs {
        let s = t.shape();
        if s.n != first.n || s.h != first.h || s.w != first.w {
            return Err(Error::Shape(format!(
                "route inputs disagree: {} vs {}",
                first,
                s
            )));
        }
        total_c += s.c;
    }
    let out_shape = Shape::new(first.n, total_c, first.h, first.w);
    let mut y = Tensor::zeros(out_shape);
    let plane = first.h * first.w;
    for n in 0..first.n {
        let mut c_off = 0;
        for t in inputs {
            let s = t.shape();
            let src = &t.data()[n * s.c * plane..(n + 1) * s.c * plane];
            let dst = &mut y.data_mut()
                [(n * total_c + c_off) * plane..(n * total_c + c_off + s.c) * plane];
            dst.copy_from_slice(src);
            c_off += s.c;
        }
    }
    Ok(y)
}

/// Route backward: slice the gradient back into per-source pieces.
pub fn route_backward<F: Float>(
    grad_out: &Tensor<F>,
    source_shapes: &[Shape],
) -> Result<Vec<Tensor<F>>> {
    let os = grad_out.shape();
    let total_c: usize = source_shapes.iter().map(|s| s.c).sum();
    if total_c != os.c {
        return Err(Error::Shape(format!(
            "route backward: sources sum to {} channels, gradient has {}",
            total_c, os.c
        )));
    }
    let plane = os.h * os.w;
    let mut out = Vec::with_capacity(source_shapes.len());
    let mut c_off = 0;
    for &src_shape in source_shapes {
        let mut g = Tensor::zeros(Shape::new(os.n, src_shape.c, os.h, os.w));
        for n in 0..os.n {
            let src = &grad_out.data()
                [(n * total_c + c_off) * plane..(n * total_c + c_off + src_shape.c) * plane];
            let dst = &mut g.data_mut()[n * src_shape.c * plane..(n + 1) * src_shape.c * plane];
            dst.copy_from_slice(src);
        }
        c_off += src_shape.c;
        out.push(g);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netdef::BatchNormWeights;

    fn identity_conv_spec() -> ConvSpec {
        ConvSpec {
            filters: 3,
            size: 1,
            stride: 1,
            padding: 0,
            batch_normalize: false,
            activation: Activation::Linear,
        }
    }

    /// 1×1 identity kernel across channels, no BN, linear activation.
    fn identity_conv_weights() -> ConvWeights<f64> {
        let mut w = ConvWeights::zeroed(3, 3, 1, false);
        for c in 0..3 {
            let idx = w.kernel_index(c, c, 0, 0);
            w.kernel[idx] = 1.0;
        }
        w
    }

    #[test]
    fn identity_conv_passes_input_through() {
        let x = Tensor::from_vec(
            Shape::new(2, 3, 2, 2),
            (0..24).map(|v| v as f64 * 0.25 - 3.0).collect(),
        )
        .unwrap();
        let y = conv_forward(&x, &identity_conv_weights(), &identity_conv_spec()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn identity_conv_backward_passes_gradient_through() {
        let x = Tensor::from_vec(Shape::new(1, 3, 2, 2), (0..12).map(|v| v as f64).collect()).unwrap();
        let w = identity_conv_weights();
        let spec = identity_conv_spec();
        let (y, pre) = conv_forward_full(&x, &w, &spec).unwrap();
        let g = Tensor::from_vec(y.shape(), (0..12).map(|v| v as f64 * 0.5).collect()).unwrap();
        let (gx, _) = conv_backward(&x, &w, &spec, &y, pre.as_ref(), &g).unwrap();
        assert_eq!(gx, g);
    }

    #[test]
    fn leaky_on_all_negative_is_tenth() {
        let mut w = ConvWeights::<f64>::zeroed(2, 2, 1, false);
        for c in 0..2 {
            let idx = w.kernel_index(c, c, 0, 0);
            w.kernel[idx] = 1.0;
        }
        let spec = ConvSpec {
            filters: 2,
            size: 1,
            stride: 1,
            padding: 0,
            batch_normalize: false,
            activation: Activation::Leaky,
        };
        let x = Tensor::from_vec(Shape::new(1, 2, 1, 2), vec![-1.0, -2.0, -0.5, -4.0]).unwrap();
        let y = conv_forward(&x, &w, &spec).unwrap();
        let expect: Vec<f64> = x.data().iter().map(|v| v * 0.1).collect();
        assert_eq!(y.data(), expect.as_slice());
    }

    #[test]
    fn conv_channel_mismatch() {
        let w = ConvWeights::<f64>::zeroed(2, 3, 1, false);
        let x = Tensor::<f64>::zeros(Shape::new(1, 4, 2, 2));
        assert!(conv_forward(&x, &w, &identity_conv_spec()).is_err());
    }

    #[test]
    fn bn_matches_hand_formula() {
        // Single 1×1 conv with kernel 2, BN γ=3, β=0.5, mean=1, var=4:
        // z = 2x; y = 3·(2x−1)/√(4+1e-6) + 0.5
        let mut w = ConvWeights::<f64>::zeroed(1, 1, 1, true);
        w.kernel[0] = 2.0;
        w.biases[0] = 0.5;
        w.bn = Some(BatchNormWeights {
            gamma: vec![3.0],
            rolling_mean: vec![1.0],
            rolling_var: vec![4.0],
        });
        let spec = ConvSpec {
            filters: 1,
            size: 1,
            stride: 1,
            padding: 0,
            batch_normalize: true,
            activation: Activation::Linear,
        };
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![0.0, 1.0, 2.5]).unwrap();
        let y = conv_forward(&x, &w, &spec).unwrap();
        for (i, &xv) in x.data().iter().enumerate() {
            let expect = 3.0 * (2.0 * xv - 1.0) / (4.0f64 + 1e-6).sqrt() + 0.5;
            assert!((y.data()[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn maxpool_two_by_two() {
        let x = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let spec = MaxpoolSpec { size: 2, stride: 2, padding: 0 };
        let (y, argmax) = maxpool_forward(&x, &spec).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(argmax, vec![3]);
    }

    #[test]
    fn maxpool_constant_input_stays_constant() {
        let x = Tensor::<f64>::filled(Shape::new(1, 2, 4, 4), 7.5);
        let spec = MaxpoolSpec { size: 2, stride: 2, padding: 1 };
        let (y, _) = maxpool_forward(&x, &spec).unwrap();
        assert!(y.data().iter().all(|&v| v == 7.5));
    }

    #[test]
    fn maxpool_backward_routes_to_argmax() {
        // Strictly increasing input: every window's max is its last element.
        let x = Tensor::from_vec(Shape::new(1, 1, 2, 4), (0..8).map(|v| v as f64).collect()).unwrap();
        let spec = MaxpoolSpec { size: 2, stride: 2, padding: 0 };
        let (_, argmax) = maxpool_forward(&x, &spec).unwrap();
        assert_eq!(argmax, vec![5, 7]);
        let g = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![10.0, 20.0]).unwrap();
        let gx = maxpool_backward(&g, &argmax, x.shape()).unwrap();
        assert_eq!(gx.data(), &[0.0, 0.0, 0.0, 0.0, 0.0, 10.0, 0.0, 20.0]);
    }

    #[test]
    fn maxpool_tie_breaks_to_smallest_index() {
        let x = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![5.0, 5.0, 5.0, 5.0]).unwrap();
        let spec = MaxpoolSpec { size: 2, stride: 2, padding: 0 };
        let (_, argmax) = maxpool_forward(&x, &spec).unwrap();
        assert_eq!(argmax, vec![0]);
    }

    #[test]
    fn upsample_factor_one_is_identity() {
        let x = Tensor::from_vec(Shape::new(1, 2, 2, 2), (0..8).map(|v| v as f64).collect()).unwrap();
        assert_eq!(upsample_forward(&x, 1), x);
    }

    #[test]
    fn upsample_replicates_single_value() {
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 1), vec![2.5]).unwrap();
        let y = upsample_forward(&x, 2);
        assert_eq!(y.shape(), Shape::new(1, 1, 2, 2));
        assert!(y.data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn upsample_backward_sums_blocks() {
        let g = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let gx = upsample_backward(&g, 2, Shape::new(1, 1, 1, 1));
        assert_eq!(gx.data(), &[10.0]);
    }

    #[test]
    fn route_single_input_is_identity() {
        let x = Tensor::from_vec(Shape::new(2, 3, 2, 2), (0..24).map(|v| v as f64).collect()).unwrap();
        assert_eq!(route_forward(&[&x]).unwrap(), x);
    }

    #[test]
    fn route_concatenates_in_order() {
        let a = Tensor::<f64>::filled(Shape::new(1, 2, 1, 2), 1.0);
        let b = Tensor::<f64>::filled(Shape::new(1, 3, 1, 2), 2.0);
        let y = route_forward(&[&a, &b]).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 5, 1, 2));
        assert_eq!(y.data(), &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn route_backward_slices_back() {
        let shapes = [Shape::new(1, 2, 1, 2), Shape::new(1, 1, 1, 2)];
        let g = Tensor::from_vec(Shape::new(1, 3, 1, 2), (0..6).map(|v| v as f64).collect()).unwrap();
        let parts = route_backward(&g, &shapes).unwrap();
        assert_eq!(parts[0].data(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(parts[1].data(), &[4.0, 5.0]);
    }

    #[test]
    fn route_rejects_spatial_mismatch() {
        let a = Tensor::<f64>::zeros(Shape::new(1, 2, 2, 2));
        let b = Tensor::<f64>::zeros(Shape::new(1, 2, 3, 2));
        assert!(route_forward(&[&a, &b]).is_err());
    }
}
