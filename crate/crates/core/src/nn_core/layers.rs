use ndarray::{Array1, Array2, Array3, ArrayView2, ArrayView3, Ix1, Ix2, Ix3};
use rand::Rng;

use super::ops::{self, ConvCache};
use super::{DiffArray, ParamMut, ParamRef, Real};
use crate::Result;

fn kaiming_uniform<F: Real, R: Rng + ?Sized>(n: usize, fan_in: usize, rng: &mut R) -> Vec<F> {
    let bound = (6.0 / fan_in as f64).sqrt();
    (0..n).map(|_| F::of(rng.random_range(-bound..bound))).collect()
}

/// Fully connected layer, weight stored `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F: Real> {
    pub weight: DiffArray<F, Ix2>,
    pub bias: DiffArray<F, Ix1>,
}

impl<F: Real> Dense<F> {
    /// Kaiming-uniform weights (fan-in), zero bias.
    pub fn new<R: Rng + ?Sized>(name: &str, n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let w = Array2::from_shape_vec((n_out, n_in), kaiming_uniform(n_in * n_out, n_in, rng))
            .expect("sized above");
        Self {
            weight: DiffArray::new(format!("{name}.weight"), w),
            bias: DiffArray::new(format!("{name}.bias"), Array1::zeros(n_out)),
        }
    }

    pub fn n_in(&self) -> usize {
        self.weight.value.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.weight.value.nrows()
    }

    pub fn forward(&self, x: ArrayView2<F>) -> Result<Array2<F>> {
        ops::dense(x, self.weight.value.view(), self.bias.value.view())
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: ArrayView2<F>, dy: ArrayView2<F>) -> Array2<F> {
        let g = ops::dense_backward(x, self.weight.value.view(), dy);
        self.weight.accumulate(&g.dw.view());
        self.bias.accumulate(&g.db.view());
        g.dx
    }

    pub fn params(&self) -> [ParamRef<'_, F>; 2] {
        [self.weight.param(), self.bias.param()]
    }

    pub fn params_mut(&mut self) -> [ParamMut<'_, F>; 2] {
        [self.weight.param_mut(), self.bias.param_mut()]
    }

    pub fn cast<G: Real>(&self) -> Dense<G> {
        Dense {
            weight: DiffArray::new(self.weight.name(), self.weight.value.mapv(|v| G::of(v.as_f64()))),
            bias: DiffArray::new(self.bias.name(), self.bias.value.mapv(|v| G::of(v.as_f64()))),
        }
    }
}

/// 1-D convolution layer, kernel stored `(out_ch, in_ch, width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<F: Real> {
    pub weight: DiffArray<F, Ix3>,
    pub bias: DiffArray<F, Ix1>,
    pub padding: usize,
}

impl<F: Real> Conv1d<F> {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_ch * kernel;
        let w = Array3::from_shape_vec(
            (out_ch, in_ch, kernel),
            kaiming_uniform(out_ch * fan_in, fan_in, rng),
        )
        .expect("sized above");
        Self {
            weight: DiffArray::new(format!("{name}.weight"), w),
            bias: DiffArray::new(format!("{name}.bias"), Array1::zeros(out_ch)),
            padding,
        }
    }

    pub fn forward(&self, x: ArrayView3<F>) -> Result<(Array3<F>, ConvCache<F>)> {
        ops::conv1d(x, self.weight.value.view(), self.bias.value.view(), self.padding)
    }

    pub fn backward(&mut self, cache: &ConvCache<F>, dy: ArrayView3<F>) -> Array3<F> {
        let g = ops::conv1d_backward(cache, self.weight.value.view(), dy);
        self.weight.accumulate(&g.dw.view());
        self.bias.accumulate(&g.db.view());
        g.dx
    }

    pub fn params(&self) -> [ParamRef<'_, F>; 2] {
        [self.weight.param(), self.bias.param()]
    }

    pub fn params_mut(&mut self) -> [ParamMut<'_, F>; 2] {
        [self.weight.param_mut(), self.bias.param_mut()]
    }

    pub fn cast<G: Real>(&self) -> Conv1d<G> {
        Conv1d {
            weight: DiffArray::new(self.weight.name(), self.weight.value.mapv(|v| G::of(v.as_f64()))),
            bias: DiffArray::new(self.bias.name(), self.bias.value.mapv(|v| G::of(v.as_f64()))),
            padding: self.padding,
        }
    }
}
