//! Dense NCHW tensors plus the two kernels all convolution math reduces to:
//! matrix multiply and im2col patch extraction.
//!
//! Layout contract: `data` is row-major in n → c → h → w order, so the flat
//! index of `(n, c, h, w)` is `((n·C + c)·H + h)·W + w`. The weights codec
//! and im2col column layout both assume this ordering.
//!
//! Both kernels accumulate each output element in a fixed, ascending-index
//! order and never reassociate sums, so results are bit-reproducible across
//! runs and thread counts.

use num_traits::Float;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// 4-D tensor shape (batch, channels, height, width).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of an in-range coordinate.
    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    /// Inverse of [`Shape::index`].
    pub fn coords(&self, flat: usize) -> (usize, usize, usize, usize) {
        let w = flat % self.w;
        let rest = flat / self.w;
        let h = rest % self.h;
        let rest = rest / self.h;
        let c = rest % self.c;
        (rest / self.c, c, h, w)
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Dense 4-D array of floats. `f32` is the production element type; the
/// `f64` instantiation backs gradient checking and mirror-precision runs.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    shape: Shape,
    data: Vec<F>,
}

impl<F: Float> Tensor<F> {
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![F::zero(); shape.len()],
        }
    }

    pub fn filled(shape: Shape, value: F) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<F>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::Shape(format!(
                "tensor data length {} does not match shape {} ({} elements)",
                data.len(),
                shape,
                shape.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> F {
        self.data[self.shape.index(n, c, h, w)]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, h: usize, w: usize) -> &mut F {
        let i = self.shape.index(n, c, h, w);
        &mut self.data[i]
    }

    /// Elementwise map; works on zero-size tensors as well.
    pub fn map(&self, f: impl Fn(F) -> F) -> Tensor<F> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Convert between element precisions (f32 ↔ f64).
    pub fn convert<G: Float>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|&v| G::from(v).expect("float conversion"))
                .collect(),
        }
    }

    /// View of one batch item as a 1×c×h×w tensor (copies the slice).
    pub fn batch_item(&self, n: usize) -> Tensor<F> {
        let per = self.shape.c * self.shape.h * self.shape.w;
        Tensor {
            shape: Shape::new(1, self.shape.c, self.shape.h, self.shape.w),
            data: self.data[n * per..(n + 1) * per].to_vec(),
        }
    }
}

/// Row-major 2-D matrix used by the gemm/im2col pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<F> {
    pub rows: usize,
    pub cols: usize,
    data: Vec<F>,
}

impl<F: Float> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            *m.at_mut(i, i) = F::one();
        }
        m
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut F {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix<F> {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                *t.at_mut(c, r) = self.at(r, c);
            }
        }
        t
    }
}

/// Rows of C processed together per pass over B; bounds cache traffic
/// without touching per-element summation order.
const GEMM_ROW_BLOCK: usize = 8;

/// Columns of C accumulated per tile. Keeps the row-block's working set
/// (`GEMM_ROW_BLOCK · GEMM_COL_TILE` accumulators) cache-resident for
/// wide outputs; each element still sums over the inner dimension in
/// ascending order, so tiling never changes a single bit.
const GEMM_COL_TILE: usize = 1024;

/// Work size below which the row-parallel split is not worth spawning.
const GEMM_PAR_THRESHOLD: usize = 1 << 18;

/// Matrix product `a · b`.
///
/// Each output element is accumulated over the inner dimension in ascending
/// order, so the result is bit-identical regardless of blocking or thread
/// count. No fused multiply-add, no reassociation.
pub fn gemm<F: Float + Send + Sync>(a: &Matrix<F>, b: &Matrix<F>) -> Result<Matrix<F>> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "gemm: inner dimensions disagree, {}x{} vs {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut c = Matrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return Ok(c);
    }

    let kernel = |block_idx: usize, c_block: &mut [F]| {
        let row0 = block_idx * GEMM_ROW_BLOCK;
        for p in 0..k {
            let b_row = &b.data[p * n..p * n + n];
            for (r, c_row) in c_block.chunks_mut(n).enumerate() {
                let a_v = a.data[(row0 + r) * k + p];
                for (cv, bv) in c_row.iter_mut().zip(b_row) {
                    *cv = *cv + a_v * *bv;
                }
            }
        }
    };

    if m * n * k >= GEMM_PAR_THRESHOLD {
        c.data
            .par_chunks_mut(GEMM_ROW_BLOCK * n)
            .enumerate()
            .for_each(|(i, block)| kernel(i, block));
    } else {
        for (i, block) in c.data.chunks_mut(GEMM_ROW_BLOCK * n).enumerate() {
            kernel(i, block);
        }
    }
    Ok(c)
}

/// Output spatial size of a convolution-style window sweep, or an error
/// when the geometry leaves no output positions.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad_total: usize) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::Shape(format!(
            "kernel ({kernel}) and stride ({stride}) must be >= 1"
        )));
    }
    let padded = input + pad_total;
    if padded < kernel {
        return Err(Error::Shape(format!(
            "window {kernel} does not fit input {input} with padding {pad_total}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Unroll the receptive fields of a single-image tensor into a
/// `(c·kernel²) × (h_out·w_out)` matrix. Column `j` holds the receptive
/// field of output position `j`; padding positions contribute zeros.
///
/// Row order is channel-major then kernel-row then kernel-column, matching
/// the `out_c → in_c → kh → kw` kernel layout of the weights codec, so
/// `gemm(weights_matrix, im2col(x))` is the convolution.
pub fn im2col<F: Float>(x: &Tensor<F>, kernel: usize, stride: usize, pad: usize) -> Result<Matrix<F>> {
    let s = x.shape();
    if s.n != 1 {
        return Err(Error::Shape(format!(
            "im2col expects a single-image tensor, got {s}"
        )));
    }
    let h_out = conv_out_dim(s.h, kernel, stride, 2 * pad)?;
    let w_out = conv_out_dim(s.w, kernel, stride, 2 * pad)?;
    let rows = s.c * kernel * kernel;
    let cols = h_out * w_out;
    let mut col = Matrix::zeros(rows, cols);

    for c in 0..s.c {
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = (c * kernel + ky) * kernel + kx;
                let out_row = &mut col.data[row * cols..(row + 1) * cols];
                for oy in 0..h_out {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= s.h as isize {
                        continue; // whole row stays zero
                    }
                    for ox in 0..w_out {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= s.w as isize {
                            continue;
                        }
                        out_row[oy * w_out + ox] = x.at(0, c, iy as usize, ix as usize);
                    }
                }
            }
        }
    }
    Ok(col)
}

/// Inverse of [`im2col`] for backpropagation: scatter-add the column matrix
/// back onto a 1×c×h×w tensor. Overlapping receptive fields accumulate in
/// fixed row-major order.
pub(crate) fn col2im<F: Float>(
    col: &Matrix<F>,
    shape: Shape,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Result<Tensor<F>> {
    let h_out = conv_out_dim(shape.h, kernel, stride, 2 * pad)?;
    let w_out = conv_out_dim(shape.w, kernel, stride, 2 * pad)?;
    if col.rows != shape.c * kernel * kernel || col.cols != h_out * w_out {
        return Err(Error::Shape(format!(
            "col2im: {}x{} matrix does not match target {} with kernel {}",
            col.rows, col.cols, shape, kernel
        )));
    }
    let mut x = Tensor::zeros(shape);
    for c in 0..shape.c {
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = (c * kernel + ky) * kernel + kx;
                let col_row = col.row(row);
                for oy in 0..h_out {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= shape.h as isize {
                        continue;
                    }
                    for ox in 0..w_out {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= shape.w as isize {
                            continue;
                        }
                        let v = col_row[oy * w_out + ox];
                        let dst = x.at_mut(0, c, iy as usize, ix as usize);
                        *dst = *dst + v;
                    }
                }
            }
        }
    }
    Ok(x)
}
