//! Forward and backward functions for the primitives.
//!
//! Tensors are batch-first: dense activations are `(batch, features)`, sequence
//! activations are `(batch, channels, length)`.

use ndarray::{concatenate, s, Array, Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis, Dimension, Zip};

use super::Real;
use crate::{Error, Result};

/// Gradients of an affine map.
#[derive(Debug, Clone)]
pub struct DenseGrads<F> {
    pub dx: Array2<F>,
    pub dw: Array2<F>,
    pub db: Array1<F>,
}

/// `x W^T + b` with `W` stored `(out, in)`.
pub fn dense<F: Real>(x: ArrayView2<F>, w: ArrayView2<F>, b: ArrayView1<F>) -> Result<Array2<F>> {
    if x.ncols() != w.ncols() || w.nrows() != b.len() {
        return Err(Error::shape(format!(
            "dense: x {:?}, W {:?}, b {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let mut y = x.dot(&w.t());
    y += &b;
    Ok(y)
}

pub fn dense_backward<F: Real>(x: ArrayView2<F>, w: ArrayView2<F>, dy: ArrayView2<F>) -> DenseGrads<F> {
    DenseGrads {
        dx: dy.dot(&w),
        dw: dy.t().dot(&x),
        db: dy.sum_axis(Axis(0)),
    }
}

pub fn relu<F: Real, D: Dimension>(x: &Array<F, D>) -> Array<F, D> {
    x.mapv(|v| if v > F::zero() { v } else { F::zero() })
}

/// Gradient through ReLU given the pre-activation; the subgradient at 0 is 0.
pub fn relu_backward<F: Real, D: Dimension>(pre: &Array<F, D>, dy: &Array<F, D>) -> Array<F, D> {
    let mut dx = dy.clone();
    Zip::from(&mut dx).and(pre).for_each(|d, &p| {
        if p <= F::zero() {
            *d = F::zero();
        }
    });
    dx
}

pub fn sigmoid<F: Real, D: Dimension>(x: &Array<F, D>) -> Array<F, D> {
    x.mapv(|v| {
        if v >= F::zero() {
            F::one() / (F::one() + (-v).exp())
        } else {
            let e = v.exp();
            e / (F::one() + e)
        }
    })
}

/// Gradient through the logistic function given its output `y`.
pub fn sigmoid_backward<F: Real, D: Dimension>(y: &Array<F, D>, dy: &Array<F, D>) -> Array<F, D> {
    let mut dx = dy.clone();
    Zip::from(&mut dx).and(y).for_each(|d, &s| *d *= s * (F::one() - s));
    dx
}

/// Concatenation along the feature axis.
pub fn concat<F: Real>(xs: &[ArrayView2<F>]) -> Result<Array2<F>> {
    concatenate(Axis(1), xs).map_err(|e| Error::shape(format!("concat: {e}")))
}

/// Splits an upstream gradient back into the pieces of a [`concat`].
pub fn concat_backward<F: Real>(dy: ArrayView2<F>, widths: &[usize]) -> Vec<Array2<F>> {
    let mut out = Vec::with_capacity(widths.len());
    let mut off = 0;
    for &w in widths {
        out.push(dy.slice(s![.., off..off + w]).to_owned());
        off += w;
    }
    out
}

/// Multiplies row `i` of `x` by `c[i]`.
pub fn scale_rows<F: Real>(x: ArrayView2<F>, c: ArrayView1<F>) -> Result<Array2<F>> {
    if x.nrows() != c.len() {
        return Err(Error::shape("scale_rows: one factor per row required"));
    }
    let mut y = x.to_owned();
    for (mut row, &f) in y.rows_mut().into_iter().zip(c) {
        row *= f;
    }
    Ok(y)
}

pub fn scale_rows_backward<F: Real>(dy: ArrayView2<F>, c: ArrayView1<F>) -> Array2<F> {
    scale_rows(dy, c).expect("shapes checked in forward")
}

/// Values saved by [`conv1d`] for its backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache<F> {
    cols: Array2<F>,
    in_shape: (usize, usize, usize),
    kernel: usize,
    padding: usize,
}

/// Gradients of a 1-D convolution.
#[derive(Debug, Clone)]
pub struct ConvGrads<F> {
    pub dx: Array3<F>,
    pub dw: Array3<F>,
    pub db: Array1<F>,
}

/// Multi-channel 1-D cross-correlation, `out[b,o,i] = bias[o] + Σ_c Σ_t w[o,c,t]·x[b,c,i+t-p]`
/// with zero padding `p` on both ends.
///
/// Implemented as an im2col matrix product. `x` is `(batch, in_ch, len)`, `w` is
/// `(out_ch, in_ch, kernel)`.
pub fn conv1d<F: Real>(
    x: ArrayView3<F>,
    w: ArrayView3<F>,
    bias: ArrayView1<F>,
    padding: usize,
) -> Result<(Array3<F>, ConvCache<F>)> {
    let (b, c, l) = x.dim();
    let (o, wc, k) = w.dim();
    if wc != c || bias.len() != o {
        return Err(Error::shape(format!(
            "conv1d: x {:?}, w {:?}, bias {:?}",
            x.shape(),
            w.shape(),
            bias.shape()
        )));
    }
    if k == 0 || l + 2 * padding < k {
        return Err(Error::shape(format!(
            "conv1d: kernel {k} does not fit padded length {}",
            l + 2 * padding
        )));
    }
    let lout = l + 2 * padding - k + 1;
    let ck = c * k;
    let mut cols = Array2::<F>::zeros((b * lout, ck));
    {
        let xs = x.as_standard_layout();
        let xs = xs.as_slice().expect("standard layout");
        let cs = cols.as_slice_mut().expect("fresh array");
        for bi in 0..b {
            for i in 0..lout {
                let row = &mut cs[(bi * lout + i) * ck..(bi * lout + i + 1) * ck];
                for ci in 0..c {
                    let xrow = &xs[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                    for t in 0..k {
                        let pos = i + t;
                        if pos >= padding && pos - padding < l {
                            row[ci * k + t] = xrow[pos - padding];
                        }
                    }
                }
            }
        }
    }
    let w2 = w.as_standard_layout();
    let w2 = w2.view().into_shape_with_order((o, ck)).expect("contiguous");
    let mut flat = cols.dot(&w2.t()); // (b*lout, o)
    flat += &bias;
    let out = flat
        .into_shape_with_order((b, lout, o))
        .expect("contiguous")
        .permuted_axes([0, 2, 1])
        .as_standard_layout()
        .into_owned();
    Ok((
        out,
        ConvCache {
            cols,
            in_shape: (b, c, l),
            kernel: k,
            padding,
        },
    ))
}

pub fn conv1d_backward<F: Real>(cache: &ConvCache<F>, w: ArrayView3<F>, dy: ArrayView3<F>) -> ConvGrads<F> {
    let (b, c, l) = cache.in_shape;
    let (k, p) = (cache.kernel, cache.padding);
    let (_, o, lout) = dy.dim();
    let ck = c * k;
    let dy_flat = dy
        .permuted_axes([0, 2, 1])
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((b * lout, o))
        .expect("contiguous");
    let w2 = w.as_standard_layout();
    let w2 = w2.view().into_shape_with_order((o, ck)).expect("contiguous");
    let dw = dy_flat
        .t()
        .dot(&cache.cols)
        .into_shape_with_order((o, c, k))
        .expect("contiguous");
    let db = dy_flat.sum_axis(Axis(0));
    let dcols = dy_flat.dot(&w2); // (b*lout, ck)
    let mut dx = Array3::<F>::zeros((b, c, l));
    {
        let ds = dcols.as_slice().expect("fresh array");
        let dxs = dx.as_slice_mut().expect("fresh array");
        for bi in 0..b {
            for i in 0..lout {
                let row = &ds[(bi * lout + i) * ck..(bi * lout + i + 1) * ck];
                for ci in 0..c {
                    let xrow = &mut dxs[(bi * c + ci) * l..(bi * c + ci + 1) * l];
                    for t in 0..k {
                        let pos = i + t;
                        if pos >= p && pos - p < l {
                            xrow[pos - p] += row[ci * k + t];
                        }
                    }
                }
            }
        }
    }
    ConvGrads { dx, dw, db }
}

/// Routing information saved by [`maxpool1d`].
#[derive(Debug, Clone)]
pub struct PoolCache {
    // flat input index of each output's winner
    argmax: Vec<usize>,
    in_shape: (usize, usize, usize),
}

/// Windowed max over the last axis; output length `(len - width) / stride + 1`.
/// Ties go to the first index in the window.
pub fn maxpool1d<F: Real>(x: ArrayView3<F>, width: usize, stride: usize) -> Result<(Array3<F>, PoolCache)> {
    let (b, c, l) = x.dim();
    if width == 0 || stride == 0 || l < width {
        return Err(Error::shape(format!(
            "maxpool1d: width {width}, stride {stride}, length {l}"
        )));
    }
    let lout = (l - width) / stride + 1;
    let xs = x.as_standard_layout();
    let xs = xs.as_slice().expect("standard layout");
    let mut out = Array3::<F>::zeros((b, c, lout));
    let mut argmax = Vec::with_capacity(b * c * lout);
    for (row, orow) in xs
        .chunks_exact(l)
        .enumerate()
        .zip(out.as_slice_mut().expect("fresh array").chunks_exact_mut(lout))
    {
        let (ri, xrow) = row;
        for (j, o) in orow.iter_mut().enumerate() {
            let start = j * stride;
            let mut best = start;
            for t in start + 1..start + width {
                if xrow[t] > xrow[best] {
                    best = t;
                }
            }
            *o = xrow[best];
            argmax.push(ri * l + best);
        }
    }
    Ok((
        out,
        PoolCache {
            argmax,
            in_shape: (b, c, l),
        },
    ))
}

pub fn maxpool1d_backward<F: Real>(cache: &PoolCache, dy: ArrayView3<F>) -> Array3<F> {
    let mut dx = Array3::<F>::zeros(cache.in_shape);
    let dxs = dx.as_slice_mut().expect("fresh array");
    for (&idx, &g) in cache.argmax.iter().zip(dy.iter()) {
        dxs[idx] += g;
    }
    dx
}
