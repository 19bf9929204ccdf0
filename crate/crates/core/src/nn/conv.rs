//! Same-padded 2-D convolution over (frequency, time).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::linalg::{axpy, dot};
use crate::{Error, Real, Result, Tensor};

/// Convolution weights `[out, in, kf, kt]` and per-map bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub out_maps: usize,
    pub in_maps: usize,
    pub kernel: (usize, usize),
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvParams<T> {
    pub fn zeros(out_maps: usize, in_maps: usize, kernel: (usize, usize)) -> Self {
        Self {
            out_maps,
            in_maps,
            kernel,
            weight: vec![T::zero(); out_maps * in_maps * kernel.0 * kernel.1],
            bias: vec![T::zero(); out_maps],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.in_maps * self.kernel.0 * self.kernel.1
    }

    #[inline]
    fn w(&self, o: usize, i: usize, df: usize, dt: usize) -> T {
        let (kf, kt) = self.kernel;
        self.weight[((o * self.in_maps + i) * kf + df) * kt + dt]
    }
}

/// Valid output range `[lo, hi)` for a shift `s` so that `t + s` stays in `0..n`.
#[inline]
fn span(shift: isize, n: usize) -> (usize, usize) {
    let lo = ((-shift).max(0) as usize).min(n);
    let hi = (n as isize - shift).clamp(0, n as isize) as usize;
    (lo, hi.max(lo))
}

/// Batched forward on `[B, in, F, T]`, returning `[B, out, F, T]` (pre-activation).
pub(crate) fn forward_batch<T: Real>(
    x: &[T],
    batch: usize,
    bands: usize,
    frames: usize,
    p: &ConvParams<T>,
) -> Vec<T> {
    let (kf, kt) = p.kernel;
    let (pf, pt) = ((kf - 1) / 2, (kt - 1) / 2);
    let plane = bands * frames;
    let mut out = vec![T::zero(); batch * p.out_maps * plane];
    for b in 0..batch {
        for o in 0..p.out_maps {
            let ob = &mut out[(b * p.out_maps + o) * plane..(b * p.out_maps + o + 1) * plane];
            for v in ob.iter_mut() {
                *v = p.bias[o];
            }
            for i in 0..p.in_maps {
                let xb = &x[(b * p.in_maps + i) * plane..(b * p.in_maps + i + 1) * plane];
                for df in 0..kf {
                    let sf = df as isize - pf as isize;
                    let (flo, fhi) = span(sf, bands);
                    for dt in 0..kt {
                        let w = p.w(o, i, df, dt);
                        if w == T::zero() {
                            continue;
                        }
                        let st = dt as isize - pt as isize;
                        let (tlo, thi) = span(st, frames);
                        if tlo == thi {
                            continue;
                        }
                        for f in flo..fhi {
                            let fi = (f as isize + sf) as usize;
                            let src = &xb[fi * frames + (tlo as isize + st) as usize
                                ..fi * frames + (thi as isize + st) as usize];
                            axpy(w, src, &mut ob[f * frames + tlo..f * frames + thi]);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of the batched convolution. `dx` is skipped when not requested.
pub(crate) fn backward_batch<T: Real>(
    x: &[T],
    dy: &[T],
    batch: usize,
    bands: usize,
    frames: usize,
    p: &ConvParams<T>,
    need_dx: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let (kf, kt) = p.kernel;
    let (pf, pt) = ((kf - 1) / 2, (kt - 1) / 2);
    let plane = bands * frames;
    let mut dw = vec![T::zero(); p.weight.len()];
    let mut db = vec![T::zero(); p.out_maps];
    let mut dx = if need_dx {
        Some(vec![T::zero(); x.len()])
    } else {
        None
    };
    for b in 0..batch {
        for o in 0..p.out_maps {
            let gy = &dy[(b * p.out_maps + o) * plane..(b * p.out_maps + o + 1) * plane];
            db[o] += gy.iter().copied().sum::<T>();
            for i in 0..p.in_maps {
                let xoff = (b * p.in_maps + i) * plane;
                let xb = &x[xoff..xoff + plane];
                for df in 0..kf {
                    let sf = df as isize - pf as isize;
                    let (flo, fhi) = span(sf, bands);
                    for dt in 0..kt {
                        let st = dt as isize - pt as isize;
                        let (tlo, thi) = span(st, frames);
                        if tlo == thi {
                            continue;
                        }
                        let widx = ((o * p.in_maps + i) * kf + df) * kt + dt;
                        let mut acc = T::zero();
                        for f in flo..fhi {
                            let fi = (f as isize + sf) as usize;
                            let src = fi * frames + (tlo as isize + st) as usize;
                            let len = thi - tlo;
                            acc +=
                                dot(&gy[f * frames + tlo..f * frames + thi], &xb[src..src + len]);
                        }
                        dw[widx] += acc;
                        if let Some(dx) = dx.as_mut() {
                            let w = p.weight[widx];
                            let gx = &mut dx[xoff..xoff + plane];
                            for f in flo..fhi {
                                let fi = (f as isize + sf) as usize;
                                let dst = fi * frames + (tlo as isize + st) as usize;
                                let len = thi - tlo;
                                axpy(
                                    w,
                                    &gy[f * frames + tlo..f * frames + thi],
                                    &mut gx[dst..dst + len],
                                );
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

/// Same convolution of one `M_in x F x T` tensor; output is `M_out x F x T`
/// before batch norm and activation.
pub fn conv2d_same_forward<T: Real>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.len() != 3 || s[0] != params.in_maps {
        return Err(Error::Shape(format!(
            "convolution expects [{}, F, T], got {:?}",
            params.in_maps, s
        )));
    }
    if params.weight.len() != params.out_maps * params.fan_in()
        || params.bias.len() != params.out_maps
    {
        return Err(Error::Shape(
            "convolution parameters do not match their declared shape".into(),
        ));
    }
    let out = forward_batch(input.data(), 1, s[1], s[2], params);
    Tensor::from_vec(&[params.out_maps, s[1], s[2]], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(f: usize, t: usize, bands: usize, frames: usize) -> Tensor<f64> {
        let mut x = Tensor::zeros(&[1, bands, frames]);
        *x.at_mut(&[0, f, t]) = 1.0;
        x
    }

    #[test]
    fn unit_kernel_is_identity() {
        let mut p = ConvParams::<f64>::zeros(1, 1, (1, 1));
        p.weight[0] = 1.0;
        let x =
            Tensor::from_vec(&[1, 3, 4], (0..12).map(|v| v as f64 * 0.5 - 2.0).collect()).unwrap();
        assert_eq!(conv2d_same_forward(&x, &p).unwrap(), x);
    }

    #[test]
    fn ones_kernel_on_one_hot_is_neighbourhood_indicator() {
        let mut p = ConvParams::<f64>::zeros(1, 1, (3, 3));
        p.weight.iter_mut().for_each(|w| *w = 1.0);
        for &(f0, t0) in &[(2usize, 3usize), (0, 0), (4, 6)] {
            let y = conv2d_same_forward(&one_hot(f0, t0, 5, 7), &p).unwrap();
            for f in 0..5 {
                for t in 0..7 {
                    let inside = (f as isize - f0 as isize).abs() <= 1
                        && (t as isize - t0 as isize).abs() <= 1;
                    assert_eq!(
                        *y.at(&[0, f, t]),
                        if inside { 1.0 } else { 0.0 },
                        "({f},{t})"
                    );
                }
            }
        }
    }

    #[test]
    fn output_keeps_input_extent() {
        for kernel in [(5, 5), (3, 1), (1, 4), (2, 2)] {
            let p = ConvParams::<f32>::zeros(3, 1, kernel);
            let y = conv2d_same_forward(&Tensor::zeros(&[1, 40, 128]), &p).unwrap();
            assert_eq!(y.shape(), &[3, 40, 128]);
        }
    }

    #[test]
    fn matches_direct_correlation() {
        let mut p = ConvParams::<f64>::zeros(2, 2, (3, 2));
        for (i, w) in p.weight.iter_mut().enumerate() {
            *w = (i as f64 * 0.7).sin();
        }
        p.bias = vec![0.1, -0.2];
        let (bands, frames) = (4, 5);
        let x = Tensor::from_vec(
            &[2, bands, frames],
            (0..40).map(|v| (v as f64 * 0.3).cos()).collect(),
        )
        .unwrap();
        let y = conv2d_same_forward(&x, &p).unwrap();
        for o in 0..2 {
            for f in 0..bands {
                for t in 0..frames {
                    let mut e = p.bias[o];
                    for i in 0..2 {
                        for df in 0..3 {
                            for dt in 0..2 {
                                let (fi, ti) =
                                    (f as isize + df as isize - 1, t as isize + dt as isize);
                                if fi >= 0
                                    && (fi as usize) < bands
                                    && ti >= 0
                                    && (ti as usize) < frames
                                {
                                    e += p.w(o, i, df, dt) * x.at(&[i, fi as usize, ti as usize]);
                                }
                            }
                        }
                    }
                    assert!((y.at(&[o, f, t]) - e).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn wrong_input_maps_rejected() {
        let p = ConvParams::<f32>::zeros(1, 2, (3, 3));
        assert!(matches!(
            conv2d_same_forward(&Tensor::zeros(&[1, 4, 4]), &p),
            Err(Error::Shape(_))
        ));
    }
}
