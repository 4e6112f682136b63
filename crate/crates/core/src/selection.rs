//! Picking novel-class candidates out of the unmatched source queries.
//!
//! Each base prototype is paired with the base prototype farthest from it.
//! A query is scored against every such pair with the dual-ball distance
//! [`protoball_distance`], keeps its smallest score, and the `K` queries with
//! the smallest scores are selected. The selection then refreshes the novel
//! entries of the memory bank.

use crate::error::{Error, Result};
use crate::memory_bank::{momentum_blend, MemoryBank};
use crate::numerics::{euclidean_distance, mean_vector, std_vector, FeatureVector, NORM_EPS};

pub const DEFAULT_GAMMA: f64 = 0.65;
pub const DEFAULT_TOP_K: usize = 5;

/// Scores of every unmatched query against every base-class pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ScmResult {
    /// `scores[c][n]`: query `n` against class `c` and its partner.
    pub scores: Vec<Vec<f64>>,
    /// Farthest partner (0-based) of each base class.
    pub partner_of: Vec<usize>,
    /// Column-wise minimum of `scores`.
    pub best_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NovelSelection {
    /// Ascending indices into the unmatched batch.
    pub indices: Vec<usize>,
    pub features: Vec<FeatureVector>,
}

impl NovelSelection {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// The `j != c` maximizing `||p_c - p_j||`, lowest index on ties.
pub fn farthest_partner(prototypes: &[FeatureVector], c: usize) -> Result<usize> {
    if c >= prototypes.len() {
        return Err(Error::ClassIndexOutOfRange {
            index: c,
            min: 0,
            max: prototypes.len().saturating_sub(1),
        });
    }
    if prototypes.len() < 2 {
        return Err(Error::InvalidConfig("need at least two prototypes".into()));
    }
    let mut best: Option<(usize, f64)> = None;
    for (j, p) in prototypes.iter().enumerate() {
        if j == c {
            continue;
        }
        let d = euclidean_distance(&prototypes[c], p)?;
        if best.is_none_or(|(_, bd)| d > bd) {
            best = Some((j, d));
        }
    }
    Ok(best.expect("at least one candidate").0)
}

/// `|(|v - a| - g d) / d| - |(|v - b| - g d) / d|` with `d = |a - b|`.
///
/// Antisymmetric in `(a, b)` and zero on their perpendicular bisector.
/// Negative values mean `v` sits nearer the ball of radius `g d` around `a`
/// than the one around `b`.
pub fn protoball_distance(
    v: &FeatureVector,
    m_a: &FeatureVector,
    m_b: &FeatureVector,
    gamma: f64,
) -> Result<f64> {
    let d = euclidean_distance(m_a, m_b)?;
    if d < NORM_EPS {
        return Err(Error::DegeneratePair);
    }
    let to_a = euclidean_distance(v, m_a)?;
    let to_b = euclidean_distance(v, m_b)?;
    let radius = gamma * d;
    Ok(((to_a - radius) / d).abs() - ((to_b - radius) / d).abs())
}

/// Scores every unmatched query against each base class and its farthest
/// partner.
pub fn build_scm(unmatched: &[FeatureVector], bank: &MemoryBank, gamma: f64) -> Result<ScmResult> {
    if unmatched.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let protos = bank.base_prototypes();
    let partner_of = (0..protos.len())
        .map(|c| farthest_partner(protos, c))
        .collect::<Result<Vec<_>>>()?;
    let scores = partner_of
        .iter()
        .enumerate()
        .map(|(c, &p)| {
            unmatched
                .iter()
                .map(|v| protoball_distance(v, &protos[c], &protos[p], gamma))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let best_scores = (0..unmatched.len())
        .map(|n| scores.iter().map(|row| row[n]).fold(f64::INFINITY, f64::min))
        .collect();
    Ok(ScmResult {
        scores,
        partner_of,
        best_scores,
    })
}

/// Indices of the `k` smallest values, ties to the lower index, returned
/// ascending.
pub fn smallest_k(values: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::InvalidConfig("K must be positive".into()));
    }
    if k > values.len() {
        return Err(Error::KTooLarge {
            k,
            available: values.len(),
        });
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.select_nth_unstable_by(k - 1, |&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    let mut picked = order[..k].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// The `k` queries with the smallest best scores.
pub fn select_topk(scm: &ScmResult, unmatched: &[FeatureVector], k: usize) -> Result<NovelSelection> {
    if scm.best_scores.len() != unmatched.len() {
        return Err(Error::LengthMismatch {
            left: scm.best_scores.len(),
            right: unmatched.len(),
        });
    }
    let indices = smallest_k(&scm.best_scores, k)?;
    let features = indices.iter().map(|&i| unmatched[i].clone()).collect();
    Ok(NovelSelection { indices, features })
}

/// Blends the novel prototype toward the selection mean and, with two or more
/// selected features, the novel disparity toward their population std.
pub fn update_novel_memory(bank: &MemoryBank, selected: &NovelSelection) -> Result<MemoryBank> {
    if selected.features.is_empty() {
        return Err(Error::EmptySelection);
    }
    let beta = bank.momentum();
    let prototype = momentum_blend(bank.novel_prototype(), &mean_vector(&selected.features)?, beta)?;
    let mut disparity = bank.novel_disparity().clone();
    if selected.features.len() >= 2 {
        let spread = std_vector(&selected.features)?;
        if spread.norm() >= NORM_EPS {
            disparity = momentum_blend(&disparity, &spread, beta)?;
        }
    }
    bank.with_novel(prototype, disparity)
}
