//! Input patterns that maximize a convolutional unit, by gradient ascent.

use alloc::vec::Vec;

use super::Network;
use crate::rng::{self, gaussian};
use crate::{Error, Real, Result, Tensor};

pub const ASCENT_STEPS: usize = 100;
pub const ASCENT_STEP_SIZE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct AscentResult<T> {
    /// `[F, T]` input pattern.
    pub pattern: Tensor<T>,
    pub initial_activation: T,
    pub final_activation: T,
    /// Steps that raised the activation.
    pub accepted: usize,
}

/// Starts from N(0, 1) noise and takes `steps` normalized gradient steps on
/// the centre activation of `map` in conv layer `layer`. A step that would
/// lower the activation is rejected and the step size is halved.
pub fn input_gradient_ascent<T: Real>(
    net: &Network<T>,
    layer: usize,
    map: usize,
    frames: usize,
    steps: usize,
    step_size: f64,
    seed: u64,
) -> Result<AscentResult<T>> {
    if frames == 0 || !(step_size > 0.0) {
        return Err(Error::Config(
            "ascent needs frames >= 1 and a positive step size".into(),
        ));
    }
    let bands = net.spec().input_bands;
    let mut rng = rng::stream(seed, &[0xa5c, layer as u64, map as u64]);
    let init: Vec<T> = (0..bands * frames)
        .map(|_| T::of(gaussian(&mut rng)))
        .collect();
    let mut x = Tensor::from_vec(&[bands, frames], init)?;
    let (initial, mut grad) = net.conv_unit_gradient(&x, layer, map)?;
    let mut current = initial;
    let mut step = step_size;
    let mut accepted = 0;
    for _ in 0..steps {
        let norm = libm::sqrt(grad.iter().map(|g| g.f64() * g.f64()).sum::<f64>());
        if !(norm > 0.0) || !norm.is_finite() {
            break;
        }
        let scale = T::of(step / norm);
        let mut cand = x.clone();
        for (v, &g) in cand.data_mut().iter_mut().zip(&grad) {
            *v += scale * g;
        }
        let (value, cand_grad) = net.conv_unit_gradient(&cand, layer, map)?;
        if value > current {
            x = cand;
            current = value;
            grad = cand_grad;
            accepted += 1;
        } else {
            step *= 0.5;
        }
    }
    Ok(AscentResult {
        pattern: x,
        initial_activation: initial,
        final_activation: current,
        accepted,
    })
}
