use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::linalg::{gemm_nn_acc, gemm_nt, gemm_tn_acc, sigmoid};
use crate::{Error, Real, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Relu,
    Linear,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sigmoid" => Some(Activation::Sigmoid),
            "relu" => Some(Activation::Relu),
            "linear" => Some(Activation::Linear),
            _ => None,
        }
    }

    #[inline]
    pub(crate) fn apply<T: Real>(self, v: T) -> T {
        match self {
            // Kept strictly inside (0, 1) where the precision would round to 0 or 1.
            Activation::Sigmoid => sigmoid(v)
                .max(T::min_positive_value())
                .min(T::one() - T::epsilon() / T::of(2.0)),
            Activation::Relu => v.max(T::zero()),
            Activation::Linear => v,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    pub(crate) fn grad_from_output<T: Real>(self, y: T) -> T {
        match self {
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Linear => T::one(),
        }
    }
}

/// Frame-wise affine layer, weights `[U, D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<T> {
    pub input: usize,
    pub units: usize,
    pub w: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Real> DenseParams<T> {
    pub fn zeros(input: usize, units: usize) -> Self {
        Self {
            input,
            units,
            w: vec![T::zero(); units * input],
            b: vec![T::zero(); units],
        }
    }
}

/// `[N, D]` -> `[N, U]`, the same weights for every row.
pub(crate) fn forward_rows<T: Real>(
    x: &[T],
    rows: usize,
    p: &DenseParams<T>,
    act: Activation,
) -> Vec<T> {
    let mut y = vec![T::zero(); rows * p.units];
    gemm_nt(x, &p.w, rows, p.input, p.units, &mut y);
    for r in 0..rows {
        for (v, &b) in y[r * p.units..(r + 1) * p.units].iter_mut().zip(&p.b) {
            *v = act.apply(*v + b);
        }
    }
    y
}

/// Gradients given the activation output `y`; returns `(dx, dw, db)`.
pub(crate) fn backward_rows<T: Real>(
    x: &[T],
    y: &[T],
    dy: &[T],
    rows: usize,
    p: &DenseParams<T>,
    act: Activation,
    need_dx: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let da: Vec<T> = dy
        .iter()
        .zip(y)
        .map(|(&g, &yv)| g * act.grad_from_output(yv))
        .collect();
    let mut dw = vec![T::zero(); p.w.len()];
    let mut db = vec![T::zero(); p.units];
    gemm_tn_acc(&da, x, rows, p.units, p.input, &mut dw);
    for r in 0..rows {
        for (d, &a) in db.iter_mut().zip(&da[r * p.units..(r + 1) * p.units]) {
            *d += a;
        }
    }
    let dx = need_dx.then(|| {
        let mut dx = vec![T::zero(); rows * p.input];
        gemm_nn_acc(&da, &p.w, rows, p.units, p.input, &mut dx);
        dx
    });
    (dx, dw, db)
}

/// Applies the layer to each frame of a `D x T` input, giving `U x T`.
pub fn dense_forward<T: Real>(
    input: &Tensor<T>,
    params: &DenseParams<T>,
    activation: Activation,
) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.len() != 2 || s[0] != params.input {
        return Err(Error::Shape(format!(
            "dense layer expects [{}, T], got {s:?}",
            params.input
        )));
    }
    let (d, frames) = (s[0], s[1]);
    let mut rows = vec![T::zero(); d * frames];
    for i in 0..d {
        for t in 0..frames {
            rows[t * d + i] = input.data()[i * frames + t];
        }
    }
    let y = forward_rows(&rows, frames, params, activation);
    let u = params.units;
    let mut out = vec![T::zero(); u * frames];
    for t in 0..frames {
        for j in 0..u {
            out[j * frames + t] = y[t * u + j];
        }
    }
    Tensor::from_vec(&[u, frames], out)
}
