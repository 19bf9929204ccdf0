//! Frequency max pooling, temporal max pooling and map stacking.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Real, Result, Tensor};

/// Non-overlapping max over groups of `p` bands of `[B, M, F, T]`.
/// Returns `[B, M, F/p, T]` and, per output, the winning offset in its group.
pub(crate) fn freq_pool_batch<T: Real>(
    x: &[T],
    planes: usize,
    bands: usize,
    frames: usize,
    p: usize,
) -> (Vec<T>, Vec<u8>) {
    let out_bands = bands / p;
    let mut y = vec![T::zero(); planes * out_bands * frames];
    let mut arg = vec![0u8; y.len()];
    for pl in 0..planes {
        for g in 0..out_bands {
            let dst = (pl * out_bands + g) * frames;
            let first = (pl * bands + g * p) * frames;
            y[dst..dst + frames].copy_from_slice(&x[first..first + frames]);
            for j in 1..p {
                let src = (pl * bands + g * p + j) * frames;
                for t in 0..frames {
                    let v = x[src + t];
                    if v > y[dst + t] {
                        y[dst + t] = v;
                        arg[dst + t] = j as u8;
                    }
                }
            }
        }
    }
    (y, arg)
}

pub(crate) fn freq_pool_backward<T: Real>(
    dy: &[T],
    arg: &[u8],
    planes: usize,
    bands: usize,
    frames: usize,
    p: usize,
) -> Vec<T> {
    let out_bands = bands / p;
    let mut dx = vec![T::zero(); planes * bands * frames];
    for pl in 0..planes {
        for g in 0..out_bands {
            let src = (pl * out_bands + g) * frames;
            for t in 0..frames {
                let f = g * p + arg[src + t] as usize;
                dx[(pl * bands + f) * frames + t] += dy[src + t];
            }
        }
    }
    dx
}

/// Max over time of `[B, T, D]`, giving `[B, 1, D]` and the winning frames.
pub(crate) fn time_pool_batch<T: Real>(
    x: &[T],
    batch: usize,
    frames: usize,
    dim: usize,
) -> (Vec<T>, Vec<u32>) {
    let mut y = vec![T::zero(); batch * dim];
    let mut arg = vec![0u32; batch * dim];
    for b in 0..batch {
        let yb = &mut y[b * dim..(b + 1) * dim];
        yb.copy_from_slice(&x[b * frames * dim..b * frames * dim + dim]);
        for t in 1..frames {
            let row = &x[(b * frames + t) * dim..(b * frames + t + 1) * dim];
            for d in 0..dim {
                if row[d] > yb[d] {
                    yb[d] = row[d];
                    arg[b * dim + d] = t as u32;
                }
            }
        }
    }
    (y, arg)
}

pub(crate) fn time_pool_backward<T: Real>(
    dy: &[T],
    arg: &[u32],
    batch: usize,
    frames: usize,
    dim: usize,
) -> Vec<T> {
    let mut dx = vec![T::zero(); batch * frames * dim];
    for b in 0..batch {
        for d in 0..dim {
            let t = arg[b * dim + d] as usize;
            dx[(b * frames + t) * dim + d] += dy[b * dim + d];
        }
    }
    dx
}

/// `[B, M, F, T]` -> `[B, T, M*F]`, feature index `m * F + f`.
pub(crate) fn stack_batch<T: Real>(
    x: &[T],
    batch: usize,
    maps: usize,
    bands: usize,
    frames: usize,
) -> Vec<T> {
    let d = maps * bands;
    let mut y = vec![T::zero(); x.len()];
    for b in 0..batch {
        for row in 0..d {
            let src = &x[(b * d + row) * frames..(b * d + row + 1) * frames];
            for (t, &v) in src.iter().enumerate() {
                y[(b * frames + t) * d + row] = v;
            }
        }
    }
    y
}

/// Inverse of [`stack_batch`].
pub(crate) fn unstack_batch<T: Real>(
    y: &[T],
    batch: usize,
    maps: usize,
    bands: usize,
    frames: usize,
) -> Vec<T> {
    let d = maps * bands;
    let mut x = vec![T::zero(); y.len()];
    for b in 0..batch {
        for t in 0..frames {
            let src = &y[(b * frames + t) * d..(b * frames + t + 1) * d];
            for (row, &v) in src.iter().enumerate() {
                x[(b * d + row) * frames + t] = v;
            }
        }
    }
    x
}

/// Max pooling over `p` consecutive frequency bins of an `M x F x T` tensor.
pub fn freq_max_pool<T: Real>(input: &Tensor<T>, p: usize) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.len() != 3 {
        return Err(Error::Shape(format!("expected [M, F, T], got {s:?}")));
    }
    if p == 0 || s[1] % p != 0 || p > u8::MAX as usize {
        return Err(Error::Shape(format!(
            "pool size {p} does not divide {} bands",
            s[1]
        )));
    }
    let (y, _) = freq_pool_batch(input.data(), s[0], s[1], s[2], p);
    Tensor::from_vec(&[s[0], s[1] / p, s[2]], y)
}

/// Max over time of an `N x T` tensor, giving `N x 1`.
pub fn temporal_max_pool<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.len() != 2 || s[1] == 0 {
        return Err(Error::Shape(format!("expected [N, T>=1], got {s:?}")));
    }
    let y = (0..s[0])
        .map(|n| {
            input.data()[n * s[1]..(n + 1) * s[1]]
                .iter()
                .copied()
                .fold(T::neg_infinity(), T::max)
        })
        .collect();
    Tensor::from_vec(&[s[0], 1], y)
}

/// Stacks feature maps along frequency: `M x F' x T` -> `(M*F') x T`, map-major.
pub fn stack_maps<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.len() != 3 {
        return Err(Error::Shape(format!("expected [M, F, T], got {s:?}")));
    }
    input.clone().reshape(&[s[0] * s[1], s[2]])
}

/// Inverse of [`stack_maps`] for a known map count.
pub fn unstack_maps<T: Real>(input: &Tensor<T>, maps: usize) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.len() != 2 || maps == 0 || s[0] % maps != 0 {
        return Err(Error::Shape(format!("cannot split {s:?} into {maps} maps")));
    }
    input.clone().reshape(&[maps, s[0] / maps, s[1]])
}
