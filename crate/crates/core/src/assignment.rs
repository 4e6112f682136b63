//! Pseudo-labelling of target-domain features against the auxiliary pairs.
//!
//! Foreground features are scored against every class `ℓ ∈ 1..=C+1` by their
//! distance to the midpoint of that class's auxiliary pair, normalized by the
//! pair's separation. Each feature takes the class with the smallest score,
//! and the assigned features then pull their class prototypes.

use crate::error::{Error, Result};
use crate::memory_bank::{momentum_blend, MemoryBank};
use crate::numerics::{euclidean_distance, mean_of, FeatureVector, NORM_EPS};

pub const DEFAULT_FG_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct TcmResult {
    /// `scores[ℓ - 1][n]` for labels `ℓ ∈ 1..=C+1`.
    pub scores: Vec<Vec<f64>>,
    /// Per-feature label in `1..=C+1`.
    pub assigned_labels: Vec<usize>,
}

/// Keeps features whose score is strictly above `threshold`, in order.
pub fn filter_foreground(
    features: &[FeatureVector],
    scores: &[f64],
    threshold: f64,
) -> Result<(Vec<FeatureVector>, Vec<usize>)> {
    if features.len() != scores.len() {
        return Err(Error::LengthMismatch {
            left: features.len(),
            right: scores.len(),
        });
    }
    let kept: Vec<usize> = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > threshold)
        .map(|(i, _)| i)
        .collect();
    Ok((kept.iter().map(|&i| features[i].clone()).collect(), kept))
}

/// `|v - (a⁺ + a⁻)/2| / max(|a⁺ - a⁻|, 1e-12)`.
pub fn auxiliary_score(v: &FeatureVector, aux_plus: &FeatureVector, aux_minus: &FeatureVector) -> Result<f64> {
    let midpoint = aux_plus.lincomb(0.5, aux_minus, 0.5)?;
    let spread = euclidean_distance(aux_plus, aux_minus)?.max(NORM_EPS);
    Ok(euclidean_distance(v, &midpoint)? / spread)
}

pub fn build_tcm(kept: &[FeatureVector], bank: &MemoryBank) -> Result<TcmResult> {
    if kept.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let classes = bank.num_base_classes() + 1;
    let scores = (1..=classes)
        .map(|label| {
            let (plus, minus) = bank.auxiliary(label)?;
            let midpoint = plus.lincomb(0.5, minus, 0.5)?;
            let spread = euclidean_distance(plus, minus)?.max(NORM_EPS);
            kept.iter()
                .map(|v| Ok(euclidean_distance(v, &midpoint)? / spread))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let assigned_labels = (0..kept.len())
        .map(|n| {
            let mut best = 0;
            for row in 1..classes {
                if scores[row][n] < scores[best][n] {
                    best = row;
                }
            }
            best + 1
        })
        .collect();
    Ok(TcmResult {
        scores,
        assigned_labels,
    })
}

/// Blends each class prototype toward the mean of the features assigned to
/// it. Classes with no assigned feature keep their prototype.
pub fn update_prototypes_from_target(
    bank: &MemoryBank,
    kept: &[FeatureVector],
    labels: &[usize],
) -> Result<MemoryBank> {
    if kept.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: kept.len(),
            right: labels.len(),
        });
    }
    let classes = bank.num_base_classes() + 1;
    if let Some(&bad) = labels.iter().find(|&&l| l == 0 || l > classes) {
        return Err(Error::ClassIndexOutOfRange {
            index: bad,
            min: 1,
            max: classes,
        });
    }
    let mut next = bank.clone();
    for label in 1..=classes {
        let members = kept
            .iter()
            .zip(labels)
            .filter(move |(_, &l)| l == label)
            .map(|(v, _)| v);
        if members.clone().next().is_none() {
            continue;
        }
        let target = mean_of(members)?;
        let blended = momentum_blend(bank.prototype(label)?, &target, bank.momentum())?;
        next = next.with_prototype(label, blended)?;
    }
    Ok(next)
}
