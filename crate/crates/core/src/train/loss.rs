use alloc::vec;
use alloc::vec::Vec;

use crate::Real;

pub const PROB_CLAMP: f64 = 1e-7;

/// Masked binary cross-entropy, averaged over unmasked entries, and its
/// gradient with respect to the probabilities. Probabilities are clamped to
/// `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub fn bce_loss<T: Real>(probs: &[T], targets: &[T], mask: &[u8]) -> (T, Vec<T>) {
    assert_eq!(probs.len(), targets.len());
    assert_eq!(probs.len(), mask.len());
    let count = mask.iter().filter(|&&m| m != 0).count();
    let mut grad = vec![T::zero(); probs.len()];
    if count == 0 {
        return (T::zero(), grad);
    }
    let (lo, hi) = (T::of(PROB_CLAMP), T::of(1.0 - PROB_CLAMP));
    let n = T::of(count as f64);
    let mut loss = T::zero();
    for i in 0..probs.len() {
        if mask[i] == 0 {
            continue;
        }
        let p = probs[i].max(lo).min(hi);
        let y = targets[i];
        loss -= y * p.ln() + (T::one() - y) * (T::one() - p).ln();
        grad[i] = (-(y / p) + (T::one() - y) / (T::one() - p)) / n;
    }
    (loss / n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_probability_gives_ln2() {
        let (l, _) = bce_loss(
            &[0.5f64; 12],
            &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            &[1; 12],
        );
        assert!((l - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn perfect_fit_near_zero() {
        let (l, _) = bce_loss(&[1.0f64, 0.0], &[1.0, 0.0], &[1, 1]);
        assert!(l < 1e-6);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut state = 7u64;
        let mut rnd = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..20 {
            let p: Vec<f64> = (0..12).map(|_| 0.05 + 0.9 * rnd()).collect();
            let y: Vec<f64> = (0..12).map(|_| (rnd() < 0.5) as u8 as f64).collect();
            let m: Vec<u8> = (0..12).map(|_| (rnd() < 0.8) as u8).collect();
            let (_, g) = bce_loss(&p, &y, &m);
            let h = 1e-6;
            for i in 0..12 {
                let mut a = p.clone();
                let mut b = p.clone();
                a[i] += h;
                b[i] -= h;
                let fd = (bce_loss(&a, &y, &m).0 - bce_loss(&b, &y, &m).0) / (2.0 * h);
                assert!(
                    (fd - g[i]).abs() <= 1e-6 * (1.0 + g[i].abs()),
                    "{fd} vs {}",
                    g[i]
                );
            }
        }
    }

    #[test]
    fn masked_entries_have_no_gradient() {
        let (_, g) = bce_loss(&[0.3f64, 0.6], &[1.0, 0.0], &[1, 0]);
        assert_eq!(g[1], 0.0);
    }
}
