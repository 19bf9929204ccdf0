use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::FeatureMatrix;
use crate::{Error, Result};

/// Lower bound applied to every per-band standard deviation.
pub const STD_FLOOR: f64 = 1e-5;

/// Per-band mean and standard deviation measured on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Mergeable per-band moments (count, mean, sum of squared deviations).
#[derive(Debug, Clone, PartialEq)]
pub struct NormAccumulator {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl NormAccumulator {
    pub fn new(bands: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; bands],
            m2: vec![0.0; bands],
        }
    }

    pub fn bands(&self) -> usize {
        self.mean.len()
    }

    pub fn add(&mut self, features: &FeatureMatrix) -> Result<()> {
        let mut other = NormAccumulator::new(features.bands);
        other.count = features.frames as u64;
        for b in 0..features.bands {
            let band = features.band(b);
            let mean = band.iter().map(|&v| v as f64).sum::<f64>() / band.len() as f64;
            other.mean[b] = mean;
            other.m2[b] = band
                .iter()
                .map(|&v| (v as f64 - mean) * (v as f64 - mean))
                .sum();
        }
        self.merge(&other)
    }

    /// Pairwise combination of two partial results.
    pub fn merge(&mut self, other: &NormAccumulator) -> Result<()> {
        if other.bands() != self.bands() {
            return Err(Error::Shape(format!(
                "accumulator has {} bands, got {}",
                self.bands(),
                other.bands()
            )));
        }
        if other.count == 0 {
            return Ok(());
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for b in 0..self.bands() {
            let delta = other.mean[b] - self.mean[b];
            self.mean[b] += delta * nb / n;
            self.m2[b] += other.m2[b] + delta * delta * na * nb / n;
        }
        self.count += other.count;
        Ok(())
    }

    pub fn finish(&self) -> Result<NormStats> {
        if self.count == 0 {
            return Err(Error::EmptyInput("no frames to measure".into()));
        }
        let std = self
            .m2
            .iter()
            .map(|&m2| libm::sqrt(m2 / self.count as f64).max(STD_FLOOR))
            .collect();
        Ok(NormStats {
            mean: self.mean.clone(),
            std,
        })
    }
}

/// Per-band statistics over every frame of every training matrix.
pub fn compute_norm_stats(training: &[FeatureMatrix]) -> Result<NormStats> {
    let first = training
        .first()
        .ok_or_else(|| Error::EmptyInput("no training features".into()))?;
    let mut acc = NormAccumulator::new(first.bands);
    for fm in training {
        acc.add(fm)?;
    }
    acc.finish()
}

impl NormStats {
    pub fn identity(bands: usize) -> Self {
        Self {
            mean: vec![0.0; bands],
            std: vec![1.0; bands],
        }
    }

    pub fn bands(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, features: &FeatureMatrix) -> Result<()> {
        if features.bands != self.bands() {
            return Err(Error::Shape(format!(
                "features have {} bands, stats have {}",
                features.bands,
                self.bands()
            )));
        }
        Ok(())
    }

    /// `(x - mean) / std` per band.
    pub fn normalize(&self, features: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.check(features)?;
        let mut out = features.clone();
        for b in 0..features.bands {
            let (m, s) = (self.mean[b], self.std[b]);
            for v in &mut out.values[b * features.frames..(b + 1) * features.frames] {
                *v = ((*v as f64 - m) / s) as f32;
            }
        }
        out.normalized = true;
        Ok(out)
    }

    pub fn denormalize(&self, features: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.check(features)?;
        let mut out = features.clone();
        for b in 0..features.bands {
            let (m, s) = (self.mean[b], self.std[b]);
            for v in &mut out.values[b * features.frames..(b + 1) * features.frames] {
                *v = (*v as f64 * s + m) as f32;
            }
        }
        out.normalized = false;
        Ok(out)
    }
}
