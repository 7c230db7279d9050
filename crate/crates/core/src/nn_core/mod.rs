//! A small fixed-graph neural network engine.
//!
//! Every primitive has an explicit forward function and a matching backward function;
//! models chain them by hand and keep whatever intermediate values the backward pass
//! needs. Parameters live in [`DiffArray`]s, which pair a value with a same-shaped
//! gradient accumulator. Everything is generic over [`Real`] so the same model code runs
//! in `f32` for training and `f64` for finite-difference checking.

mod adam;
mod checkpoint;
mod gradcheck;
mod layers;
pub mod ops;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{Array, ArrayView, Dimension, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, NamedTensor};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport, GradCheckable};
pub use layers::{Conv1d, Dense};

/// Floating-point element type of the engine.
pub trait Real:
    LinalgScalar
    + Float
    + FromPrimitive
    + ToPrimitive
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Send
    + Sync
    + Debug
    + Display
    + Default
{
    /// Converts an `f64` constant.
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("representable")
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// A named parameter tensor with a gradient accumulator of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffArray<F, D: Dimension> {
    name: String,
    dims: Vec<usize>,
    pub value: Array<F, D>,
    pub grad: Array<F, D>,
}

impl<F: Real, D: Dimension> DiffArray<F, D> {
    pub fn new(name: impl Into<String>, value: Array<F, D>) -> Self {
        // standard layout so the flat views below line up with the logical order
        let value = value.as_standard_layout().into_owned();
        let grad = Array::zeros(value.raw_dim());
        Self {
            name: name.into(),
            dims: value.shape().to_vec(),
            value,
            grad,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }

    /// Adds `g` into the gradient accumulator (fan-out contributions sum).
    pub fn accumulate(&mut self, g: &ArrayView<F, D>) {
        self.grad += g;
    }

    pub fn param_mut(&mut self) -> ParamMut<'_, F> {
        ParamMut {
            name: &self.name,
            shape: &self.dims,
            value: self.value.as_slice_mut().expect("standard layout"),
            grad: self.grad.as_slice_mut().expect("standard layout"),
        }
    }

    pub fn param(&self) -> ParamRef<'_, F> {
        ParamRef {
            name: &self.name,
            shape: self.value.shape(),
            value: self.value.as_slice().expect("standard layout"),
            grad: self.grad.as_slice().expect("standard layout"),
        }
    }
}

/// Flat mutable view of a parameter, used by the optimizer and serializers.
#[derive(Debug)]
pub struct ParamMut<'a, F> {
    pub name: &'a str,
    pub shape: &'a [usize],
    pub value: &'a mut [F],
    pub grad: &'a mut [F],
}

#[derive(Debug, Clone, Copy)]
pub struct ParamRef<'a, F> {
    pub name: &'a str,
    pub shape: &'a [usize],
    pub value: &'a [F],
    pub grad: &'a [F],
}

/// Anything that owns an ordered list of parameters.
pub trait Parameterized<F: Real> {
    fn params(&self) -> Vec<ParamRef<'_, F>>;
    fn params_mut(&mut self) -> Vec<ParamMut<'_, F>>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(F::zero());
        }
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// Adds another instance's gradients into this one, parameter by parameter.
    fn add_grads_from(&mut self, other: &Self) {
        let src = other.params();
        for (dst, src) in self.params_mut().into_iter().zip(src) {
            for (d, s) in dst.grad.iter_mut().zip(src.grad) {
                *d += *s;
            }
        }
    }

    fn flat_values(&self) -> Vec<F> {
        self.params().iter().flat_map(|p| p.value.iter().copied()).collect()
    }

    fn flat_grads(&self) -> Vec<F> {
        self.params().iter().flat_map(|p| p.grad.iter().copied()).collect()
    }

    fn set_flat_values(&mut self, flat: &[F]) {
        let mut off = 0;
        for p in self.params_mut() {
            let n = p.value.len();
            p.value.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len(), "flat parameter length mismatch");
    }
}
