use alloc::vec::Vec;

use rand::Rng as _;

use crate::rng::Rng;
use crate::{Real, Tensor};

/// Inverted-dropout keep mask: entries are `0` or `1 / (1 - rate)`.
pub(crate) fn bernoulli_mask<T: Real>(len: usize, rate: f64, rng: &mut Rng) -> Vec<T> {
    if rate <= 0.0 {
        return alloc::vec![T::one(); len];
    }
    let keep = T::of(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| {
            if rng.gen::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect()
}

/// Dropout mask for a tensor whose last axis is time.
///
/// With `sequence_constant` a mask is drawn for the leading axes only and
/// repeated across every frame.
pub fn dropout_mask<T: Real>(
    shape: &[usize],
    rate: f64,
    rng: &mut Rng,
    sequence_constant: bool,
) -> Tensor<T> {
    assert!(
        (0.0..1.0).contains(&rate),
        "dropout rate {rate} outside [0, 1)"
    );
    let total: usize = shape.iter().product();
    if !sequence_constant || shape.is_empty() {
        return Tensor::from_vec(shape, bernoulli_mask(total, rate, rng))
            .expect("length matches shape");
    }
    let frames = *shape.last().unwrap();
    let units = if frames == 0 { 0 } else { total / frames };
    let per_unit: Vec<T> = bernoulli_mask(units, rate, rng);
    let data = per_unit
        .iter()
        .flat_map(|&m| core::iter::repeat_n(m, frames))
        .collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_rate_keeps_everything() {
        let m: Tensor<f32> = dropout_mask(&[4, 5], 0.0, &mut rng::stream(1, &[]), false);
        assert!(m.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn keep_fraction_matches_rate() {
        let m: Tensor<f64> = dropout_mask(&[100_000], 0.25, &mut rng::stream(2, &[]), false);
        let kept = m.data().iter().filter(|&&v| v != 0.0).count() as f64 / 1e5;
        assert!((kept - 0.75).abs() < 0.01, "kept {kept}");
        assert!(m
            .data()
            .iter()
            .all(|&v| v == 0.0 || (v - 4.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn sequence_constant_mask_repeats_over_time() {
        let m: Tensor<f32> = dropout_mask(&[64, 10], 0.5, &mut rng::stream(3, &[]), true);
        for u in 0..64 {
            assert_eq!(m.at(&[u, 0]), m.at(&[u, 9]));
            let row = &m.data()[u * 10..(u + 1) * 10];
            assert!(row.iter().all(|v| v == &row[0]));
        }
    }

    #[test]
    fn expectation_matches_inference() {
        // Mean of mask * activation over many draws equals the activation.
        let act = 0.7f64;
        let m: Tensor<f64> = dropout_mask(&[200_000], 0.25, &mut rng::stream(4, &[]), false);
        let mean = m.data().iter().map(|&k| k * act).sum::<f64>() / 200_000.0;
        assert!((mean - act).abs() / act < 0.01);
    }
}
