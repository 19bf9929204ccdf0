//! Batch normalization with per-channel statistics.
//!
//! Data is viewed as `[outer, channels, inner]`; statistics for a channel
//! are taken over `outer x inner`. Convolution outputs use
//! `[B, M, F*T]`, frame features use `[B*T, D, 1]`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Real, Result, Tensor};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

impl<T: Real> BatchNormParams<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Inference,
}

/// Values needed by the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BnCache<T> {
    pub x_hat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mode: BnMode,
}

/// Batch statistics of one training forward pass.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BnBatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

pub(crate) fn forward_raw<T: Real>(
    x: &[T],
    outer: usize,
    channels: usize,
    inner: usize,
    p: &BatchNormParams<T>,
    mode: BnMode,
) -> Result<(Vec<T>, BnCache<T>, Option<BnBatchStats<T>>)> {
    debug_assert_eq!(x.len(), outer * channels * inner);
    let n = outer * inner;
    let eps = T::of(BN_EPSILON);
    let (mean, var) = match mode {
        BnMode::Train => {
            if n < 2 {
                return Err(Error::Shape(format!(
                    "batch norm in training needs at least 2 values per channel, got {n}"
                )));
            }
            let mut mean = vec![T::zero(); channels];
            let mut var = vec![T::zero(); channels];
            let nt = T::of(n as f64);
            for c in 0..channels {
                let mut s = T::zero();
                for o in 0..outer {
                    let base = (o * channels + c) * inner;
                    s += x[base..base + inner].iter().copied().sum::<T>();
                }
                let m = s / nt;
                let mut v = T::zero();
                for o in 0..outer {
                    let base = (o * channels + c) * inner;
                    v += x[base..base + inner]
                        .iter()
                        .map(|&xi| (xi - m) * (xi - m))
                        .sum::<T>();
                }
                mean[c] = m;
                var[c] = v / nt;
            }
            (mean, var)
        }
        BnMode::Inference => (p.running_mean.clone(), p.running_var.clone()),
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut y = vec![T::zero(); x.len()];
    let mut x_hat = vec![T::zero(); x.len()];
    for o in 0..outer {
        for c in 0..channels {
            let base = (o * channels + c) * inner;
            let (m, s, g, b) = (mean[c], inv_std[c], p.gamma[c], p.beta[c]);
            for j in base..base + inner {
                let h = (x[j] - m) * s;
                x_hat[j] = h;
                y[j] = g * h + b;
            }
        }
    }
    let stats = (mode == BnMode::Train).then_some(BnBatchStats { mean, var });
    Ok((
        y,
        BnCache {
            x_hat,
            inv_std,
            mode,
        },
        stats,
    ))
}

/// `running = momentum * running + (1 - momentum) * batch`.
pub(crate) fn update_running<T: Real>(p: &mut BatchNormParams<T>, stats: &BnBatchStats<T>) {
    let m = T::of(BN_MOMENTUM);
    let one_m = T::one() - m;
    for c in 0..p.channels() {
        p.running_mean[c] = m * p.running_mean[c] + one_m * stats.mean[c];
        p.running_var[c] = m * p.running_var[c] + one_m * stats.var[c];
    }
}

/// Returns `(dx, dgamma, dbeta)`.
pub(crate) fn backward_raw<T: Real>(
    dy: &[T],
    outer: usize,
    channels: usize,
    inner: usize,
    p: &BatchNormParams<T>,
    cache: &BnCache<T>,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = T::of((outer * inner) as f64);
    let mut dgamma = vec![T::zero(); channels];
    let mut dbeta = vec![T::zero(); channels];
    for o in 0..outer {
        for c in 0..channels {
            let base = (o * channels + c) * inner;
            for j in base..base + inner {
                dgamma[c] += dy[j] * cache.x_hat[j];
                dbeta[c] += dy[j];
            }
        }
    }
    let mut dx = vec![T::zero(); dy.len()];
    for o in 0..outer {
        for c in 0..channels {
            let base = (o * channels + c) * inner;
            let scale = p.gamma[c] * cache.inv_std[c];
            match cache.mode {
                BnMode::Train => {
                    let k = scale / n;
                    for j in base..base + inner {
                        dx[j] = k * (n * dy[j] - dbeta[c] - cache.x_hat[j] * dgamma[c]);
                    }
                }
                BnMode::Inference => {
                    for j in base..base + inner {
                        dx[j] = scale * dy[j];
                    }
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Normalizes `input` whose axis `channel_axis` holds the channels. In
/// training mode the running statistics of `params` are updated.
pub fn batch_norm_forward<T: Real>(
    input: &Tensor<T>,
    channel_axis: usize,
    params: &mut BatchNormParams<T>,
    mode: BnMode,
) -> Result<Tensor<T>> {
    let s = input.shape();
    if channel_axis >= s.len() || s[channel_axis] != params.channels() {
        return Err(Error::Shape(format!(
            "batch norm over {} channels cannot use axis {channel_axis} of {:?}",
            params.channels(),
            s
        )));
    }
    let outer = s[..channel_axis].iter().product();
    let inner = s[channel_axis + 1..].iter().product();
    let (y, _, stats) = forward_raw(input.data(), outer, params.channels(), inner, params, mode)?;
    if let Some(stats) = stats {
        update_running(params, &stats);
    }
    Tensor::from_vec(s, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tensor<f64> {
        // [batch 3, channels 2, inner 4]
        Tensor::from_vec(
            &[3, 2, 4],
            (0..24).map(|i| ((i * 7 % 11) as f64) * 0.3 - 1.0).collect(),
        )
        .unwrap()
    }

    #[test]
    fn training_output_is_standardized() {
        let x = sample();
        let mut p = BatchNormParams::new(2);
        let y = batch_norm_forward(&x, 1, &mut p, BnMode::Train).unwrap();
        for c in 0..2 {
            let vals: Vec<f64> = (0..3)
                .flat_map(|b| (0..4).map(move |j| (b, j)))
                .map(|(b, j)| *y.at(&[b, c, j]))
                .collect();
            let m = vals.iter().sum::<f64>() / 12.0;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 12.0;
            assert!(m.abs() < 1e-9);
            assert!((v - 1.0).abs() < 1e-3, "var {v}");
        }
    }

    #[test]
    fn matches_two_pass_oracle() {
        let x = sample();
        let mut p = BatchNormParams::new(2);
        p.gamma = vec![1.5, -0.5];
        p.beta = vec![0.25, 2.0];
        let y = batch_norm_forward(&x, 1, &mut p.clone(), BnMode::Train).unwrap();
        for c in 0..2 {
            let vals: Vec<f64> = (0..3)
                .flat_map(|b| (0..4).map(move |j| (b, j)))
                .map(|(b, j)| *x.at(&[b, c, j]))
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
            for b in 0..3 {
                for j in 0..4 {
                    let e = p.gamma[c] * (x.at(&[b, c, j]) - mean) / (var + BN_EPSILON).sqrt()
                        + p.beta[c];
                    assert!((y.at(&[b, c, j]) - e).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn inference_on_running_mean_gives_beta() {
        let mut p = BatchNormParams::<f64>::new(1);
        p.running_mean = vec![3.0];
        p.running_var = vec![4.0];
        p.beta = vec![0.7];
        p.gamma = vec![2.0];
        let x = Tensor::full(&[2, 1, 3], 3.0);
        let y = batch_norm_forward(&x, 1, &mut p, BnMode::Inference).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn running_stats_follow_momentum() {
        let x = sample();
        let mut p = BatchNormParams::new(2);
        batch_norm_forward(&x, 1, &mut p, BnMode::Train).unwrap();
        let (_, _, stats) =
            forward_raw(x.data(), 3, 2, 4, &BatchNormParams::new(2), BnMode::Train).unwrap();
        let stats = stats.unwrap();
        for c in 0..2 {
            assert!((p.running_mean[c] - 0.01 * stats.mean[c]).abs() < 1e-12);
            assert!((p.running_var[c] - (0.99 + 0.01 * stats.var[c])).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_channel_is_finite() {
        let x = Tensor::full(&[4, 1, 2], 5.0f32);
        let mut p = BatchNormParams::new(1);
        let y = batch_norm_forward(&x, 1, &mut p, BnMode::Train).unwrap();
        assert!(y.data().iter().all(|v| v.is_finite() && *v == 0.0));
    }

    #[test]
    fn single_value_training_is_rejected() {
        let x = Tensor::full(&[1, 1, 1], 5.0f32);
        assert!(batch_norm_forward(&x, 1, &mut BatchNormParams::new(1), BnMode::Train).is_err());
    }
}
