use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EerReport {
    /// `None` for classes without both positive and negative chunks.
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
    pub excluded: Vec<usize>,
}

/// Equal error rate of one class. Points of the ROC are the achievable
/// `(FPR, FNR)` pairs with equal scores grouped into one threshold; the EER
/// is where the piecewise-linear curve crosses `FPR = FNR`.
pub fn class_eer(labels: &[u8], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::Shape(format!(
            "{} labels vs {} scores",
            labels.len(),
            scores.len()
        )));
    }
    let pos = labels.iter().filter(|&&l| l != 0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "EER needs positive and negative chunks".into(),
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (p, n) = (pos as f64, neg as f64);
    // Start with nothing accepted: FPR 0, FNR 1.
    let (mut fp, mut tp) = (0usize, 0usize);
    let mut prev = (0.0f64, 1.0f64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] != 0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let cur = (fp as f64 / n, (pos - tp) as f64 / p);
        let (da, db) = (prev.1 - prev.0, cur.1 - cur.0);
        if db <= 0.0 {
            let t = da / (da - db);
            return Ok(prev.0 + t * (cur.0 - prev.0));
        }
        prev = cur;
    }
    unreachable!("the final operating point accepts everything")
}

/// Per-class and mean EER over chunks. `labels[c][k]` and `scores[c][k]`
/// index chunk `c`, class `k`.
pub fn eer(labels: &[Vec<u8>], scores: &[Vec<f64>]) -> Result<EerReport> {
    if labels.len() != scores.len() || labels.is_empty() {
        return Err(Error::Shape(format!(
            "{} label rows vs {} score rows",
            labels.len(),
            scores.len()
        )));
    }
    let k = labels[0].len();
    if labels.iter().any(|r| r.len() != k) || scores.iter().any(|r| r.len() != k) {
        return Err(Error::Shape("ragged label or score rows".into()));
    }
    let mut per_class = Vec::with_capacity(k);
    let mut excluded = Vec::new();
    for c in 0..k {
        let l: Vec<u8> = labels.iter().map(|r| r[c]).collect();
        let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
        match class_eer(&l, &s) {
            Ok(e) => per_class.push(Some(e)),
            Err(Error::UndefinedMetric(_)) => {
                per_class.push(None);
                excluded.push(c);
            }
            Err(e) => return Err(e),
        }
    }
    let valid: Vec<f64> = per_class.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::UndefinedMetric(
            "no class has both positive and negative chunks".into(),
        ));
    }
    let mean = valid.iter().sum::<f64>() / valid.len() as f64;
    Ok(EerReport {
        per_class,
        mean,
        excluded,
    })
}
