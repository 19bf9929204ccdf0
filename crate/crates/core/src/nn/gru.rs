//! Gated recurrent unit with backpropagation through time.
//!
//! Gate rows are stacked as update `z`, reset `r`, candidate `n`:
//!
//! ```text
//! z = sigmoid(Wz x + Uz (m*h) + bz)
//! r = sigmoid(Wr x + Ur (m*h) + br)
//! n = tanh(Wn x + Un (r * (m*h)) + bn)
//! h' = z * h + (1 - z) * n
//! ```
//!
//! `m` is the recurrent dropout mask, fixed for a whole sequence.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::linalg::{dot, gemm_nn_acc, gemm_nt, gemm_tn_acc, sigmoid};
use crate::{Error, Real, Result, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams<T> {
    pub input: usize,
    pub units: usize,
    /// `[3H, D]`
    pub w: Vec<T>,
    /// `[3H, H]`
    pub u: Vec<T>,
    /// `[3H]`
    pub b: Vec<T>,
}

impl<T: Real> GruParams<T> {
    pub fn zeros(input: usize, units: usize) -> Self {
        Self {
            input,
            units,
            w: vec![T::zero(); 3 * units * input],
            u: vec![T::zero(); 3 * units * units],
            b: vec![T::zero(); 3 * units],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct GruCache<T> {
    /// `[B, T, H]` each.
    pub h: Vec<T>,
    pub z: Vec<T>,
    pub r: Vec<T>,
    pub n: Vec<T>,
    /// `[B, H]`, or empty when no recurrent dropout is applied.
    pub mask: Vec<T>,
}

/// Runs the recursion on `[B, T, D]` from `h0` (`[B, H]`), returning `[B, T, H]`.
pub(crate) fn forward_batch<T: Real>(
    x: &[T],
    batch: usize,
    frames: usize,
    p: &GruParams<T>,
    h0: Option<&[T]>,
    mask: &[T],
) -> GruCache<T> {
    let (d, h) = (p.input, p.units);
    let g = 3 * h;
    let mut cache = GruCache {
        h: vec![T::zero(); batch * frames * h],
        z: vec![T::zero(); batch * frames * h],
        r: vec![T::zero(); batch * frames * h],
        n: vec![T::zero(); batch * frames * h],
        mask: mask.to_vec(),
    };
    let mut xp = vec![T::zero(); frames * g];
    let mut hm = vec![T::zero(); h];
    let mut rh = vec![T::zero(); h];
    for bi in 0..batch {
        gemm_nt(
            &x[bi * frames * d..(bi + 1) * frames * d],
            &p.w,
            frames,
            d,
            g,
            &mut xp,
        );
        let mut prev: Vec<T> = match h0 {
            Some(s) => s[bi * h..(bi + 1) * h].to_vec(),
            None => vec![T::zero(); h],
        };
        for t in 0..frames {
            for j in 0..h {
                hm[j] = if mask.is_empty() {
                    prev[j]
                } else {
                    prev[j] * mask[bi * h + j]
                };
            }
            let o = (bi * frames + t) * h;
            let xt = &xp[t * g..(t + 1) * g];
            for j in 0..h {
                let az = xt[j] + p.b[j] + dot(&p.u[j * h..(j + 1) * h], &hm);
                let ar = xt[h + j] + p.b[h + j] + dot(&p.u[(h + j) * h..(h + j + 1) * h], &hm);
                cache.z[o + j] = sigmoid(az);
                cache.r[o + j] = sigmoid(ar);
            }
            for j in 0..h {
                rh[j] = cache.r[o + j] * hm[j];
            }
            for j in 0..h {
                let an = xt[2 * h + j]
                    + p.b[2 * h + j]
                    + dot(&p.u[(2 * h + j) * h..(2 * h + j + 1) * h], &rh);
                let n = an.tanh();
                let z = cache.z[o + j];
                cache.n[o + j] = n;
                cache.h[o + j] = z * prev[j] + (T::one() - z) * n;
            }
            prev.copy_from_slice(&cache.h[o..o + h]);
        }
    }
    cache
}

/// Returns `(dx, dw, du, db)` for upstream gradient `dy` on the hidden sequence.
pub(crate) fn backward_batch<T: Real>(
    x: &[T],
    dy: &[T],
    batch: usize,
    frames: usize,
    p: &GruParams<T>,
    cache: &GruCache<T>,
    need_dx: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>, Vec<T>) {
    let (d, h) = (p.input, p.units);
    let g = 3 * h;
    let mut dw = vec![T::zero(); p.w.len()];
    let mut du = vec![T::zero(); p.u.len()];
    let mut db = vec![T::zero(); p.b.len()];
    let mut dx = if need_dx {
        Some(vec![T::zero(); x.len()])
    } else {
        None
    };
    let mut da = vec![T::zero(); frames * g];
    let mut carry = vec![T::zero(); h];
    let mut hm = vec![T::zero(); h];
    let mut rh = vec![T::zero(); h];
    let mut gn = vec![T::zero(); h];
    let mut dhm = vec![T::zero(); h];
    let zeros = vec![T::zero(); h];
    for bi in 0..batch {
        carry.iter_mut().for_each(|c| *c = T::zero());
        for t in (0..frames).rev() {
            let o = (bi * frames + t) * h;
            let prev = if t == 0 {
                &zeros[..]
            } else {
                &cache.h[o - h..o]
            };
            for j in 0..h {
                hm[j] = if cache.mask.is_empty() {
                    prev[j]
                } else {
                    prev[j] * cache.mask[bi * h + j]
                };
                rh[j] = cache.r[o + j] * hm[j];
            }
            let dat = &mut da[t * g..(t + 1) * g];
            for j in 0..h {
                let dh = dy[o + j] + carry[j];
                let (z, n) = (cache.z[o + j], cache.n[o + j]);
                let dz = dh * (prev[j] - n);
                let dn = dh * (T::one() - z);
                carry[j] = dh * z;
                dat[j] = dz * z * (T::one() - z);
                dat[2 * h + j] = dn * (T::one() - n * n);
            }
            // gn = Un^T da_n, the gradient w.r.t. r * hm.
            gn.iter_mut().for_each(|v| *v = T::zero());
            for j in 0..h {
                let a = dat[2 * h + j];
                if a != T::zero() {
                    let row = &p.u[(2 * h + j) * h..(2 * h + j + 1) * h];
                    for (gk, &uk) in gn.iter_mut().zip(row) {
                        *gk += a * uk;
                    }
                }
            }
            for j in 0..h {
                let r = cache.r[o + j];
                dat[h + j] = gn[j] * hm[j] * r * (T::one() - r);
                dhm[j] = gn[j] * r;
            }
            for j in 0..2 * h {
                let a = dat[j];
                if a != T::zero() {
                    let row = &p.u[j * h..(j + 1) * h];
                    for (dk, &uk) in dhm.iter_mut().zip(row) {
                        *dk += a * uk;
                    }
                    for (duk, &hk) in du[j * h..(j + 1) * h].iter_mut().zip(hm.iter()) {
                        *duk += a * hk;
                    }
                }
            }
            for j in 0..h {
                let a = dat[2 * h + j];
                if a != T::zero() {
                    for (duk, &rk) in du[(2 * h + j) * h..(2 * h + j + 1) * h]
                        .iter_mut()
                        .zip(rh.iter())
                    {
                        *duk += a * rk;
                    }
                }
            }
            for j in 0..h {
                let m = if cache.mask.is_empty() {
                    T::one()
                } else {
                    cache.mask[bi * h + j]
                };
                carry[j] += dhm[j] * m;
            }
            for j in 0..g {
                db[j] += dat[j];
            }
        }
        let xb = &x[bi * frames * d..(bi + 1) * frames * d];
        gemm_tn_acc(&da, xb, frames, g, d, &mut dw);
        if let Some(dx) = dx.as_mut() {
            gemm_nn_acc(
                &da,
                &p.w,
                frames,
                g,
                d,
                &mut dx[bi * frames * d..(bi + 1) * frames * d],
            );
        }
    }
    (dx, dw, du, db)
}

/// Runs a GRU over a `D x T` sequence, returning the `H x T` hidden states.
///
/// `recurrent_mask`, when given, has one entry per unit and is applied to
/// the previous state at every step.
pub fn gru_forward<T: Real>(
    sequence: &Tensor<T>,
    params: &GruParams<T>,
    initial_state: &[T],
    recurrent_mask: Option<&[T]>,
) -> Result<Tensor<T>> {
    let s = sequence.shape();
    if s.len() != 2 || s[0] != params.input {
        return Err(Error::Shape(format!(
            "GRU expects [{}, T], got {s:?}",
            params.input
        )));
    }
    if initial_state.len() != params.units
        || recurrent_mask.is_some_and(|m| m.len() != params.units)
    {
        return Err(Error::Shape(format!(
            "initial state and mask must have {} entries",
            params.units
        )));
    }
    let (d, frames) = (s[0], s[1]);
    let mut x = vec![T::zero(); d * frames];
    for i in 0..d {
        for t in 0..frames {
            x[t * d + i] = sequence.data()[i * frames + t];
        }
    }
    let cache = forward_batch(
        &x,
        1,
        frames,
        params,
        Some(initial_state),
        recurrent_mask.unwrap_or(&[]),
    );
    let h = params.units;
    let mut out = vec![T::zero(); h * frames];
    for t in 0..frames {
        for j in 0..h {
            out[j * frames + t] = cache.h[t * h + j];
        }
    }
    Tensor::from_vec(&[h, frames], out)
}
