//! Open-set classification metrics.
//!
//! Predictions are labels in `1..=C+1`. Truth labels may be `0` (background),
//! `1..=C` (base) or any novel id `>= C+2`; novel ids collapse to the unified
//! label `C+1` before counting. Undefined ratios are `None`, never `0`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maps novel ids onto the unified novel label `C+1`. Idempotent.
pub fn collapse_label(truth: usize, num_base_classes: usize) -> usize {
    truth.min(num_base_classes + 1)
}

/// Count table: rows are collapsed truths `0..=C+1`, columns predictions
/// `1..=C+1` (column `j` holds prediction `j + 1`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub num_base_classes: usize,
    pub counts: Vec<Vec<u64>>,
}

fn check_lengths(preds: &[usize], truths: &[usize]) -> Result<()> {
    if preds.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: truths.len(),
        });
    }
    Ok(())
}

pub fn confusion(preds: &[usize], truths: &[usize], num_base_classes: usize) -> Result<Confusion> {
    check_lengths(preds, truths)?;
    let labels = num_base_classes + 1;
    let mut counts = vec![vec![0u64; labels]; labels + 1];
    for (&p, &t) in preds.iter().zip(truths) {
        if p == 0 || p > labels {
            return Err(Error::LabelOutOfRange { label: p, classes: labels });
        }
        counts[collapse_label(t, num_base_classes)][p - 1] += 1;
    }
    Ok(Confusion {
        num_base_classes,
        counts,
    })
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl Confusion {
    fn novel(&self) -> usize {
        self.num_base_classes + 1
    }

    fn base(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.num_base_classes
    }

    /// Base-class predictions and how many were correct, over truth rows `rows`.
    fn base_precision_counts(&self, rows: impl Iterator<Item = usize>) -> (u64, u64) {
        let mut correct = 0;
        let mut predicted = 0;
        for r in rows {
            for p in self.base() {
                let n = self.counts[r][p - 1];
                predicted += n;
                if r == p {
                    correct += n;
                }
            }
        }
        (correct, predicted)
    }

    /// `P_closed / P_open - 1`, with `P_closed` the base-class precision on
    /// base-truth rows and `P_open` the same over every row.
    pub fn wilderness_impact(&self) -> Result<f64> {
        let (cc, cp) = self.base_precision_counts(self.base());
        let (oc, op) = self.base_precision_counts(0..=self.novel());
        if cp == 0 || op == 0 || oc == 0 {
            return Err(Error::UndefinedMetric("wilderness impact"));
        }
        let closed = cc as f64 / cp as f64;
        let open = oc as f64 / op as f64;
        Ok(closed / open - 1.0)
    }

    /// Novel-truth samples predicted as some base class.
    pub fn aose(&self) -> u64 {
        self.base().map(|p| self.counts[self.novel()][p - 1]).sum()
    }

    pub fn novel_total(&self) -> u64 {
        self.counts[self.novel()].iter().sum()
    }

    /// Recall of the unified novel class.
    pub fn novel_recall(&self) -> Option<f64> {
        ratio(self.counts[self.novel()][self.novel() - 1], self.novel_total())
    }

    /// Fraction of base-truth samples predicted as their own class.
    pub fn base_accuracy(&self) -> Option<f64> {
        let correct: u64 = self.base().map(|c| self.counts[c][c - 1]).sum();
        let total: u64 = self.base().map(|c| self.counts[c].iter().sum::<u64>()).sum();
        ratio(correct, total)
    }

    pub fn per_class_precision(&self) -> BTreeMap<usize, f64> {
        (1..=self.novel())
            .filter_map(|l| {
                let col: u64 = self.counts.iter().map(|row| row[l - 1]).sum();
                ratio(self.counts[l][l - 1], col).map(|v| (l, v))
            })
            .collect()
    }

    pub fn per_class_recall(&self) -> BTreeMap<usize, f64> {
        (1..=self.novel())
            .filter_map(|l| {
                ratio(self.counts[l][l - 1], self.counts[l].iter().sum()).map(|v| (l, v))
            })
            .collect()
    }
}

/// Wilderness impact computed directly from prediction/truth pairs.
pub fn wilderness_impact(preds: &[usize], truths: &[usize], num_base_classes: usize) -> Result<f64> {
    confusion(preds, truths, num_base_classes)?.wilderness_impact()
}

/// Count of novel-truth samples predicted as a base class.
pub fn aose(preds: &[usize], truths: &[usize], num_base_classes: usize) -> Result<u64> {
    check_lengths(preds, truths)?;
    Ok(preds
        .iter()
        .zip(truths)
        .filter(|(&p, &t)| t > num_base_classes && (1..=num_base_classes).contains(&p))
        .count() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SelectionMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub true_positives: u64,
    pub selected: u64,
    /// Novel-origin entries available in the pool.
    pub pool_novel: u64,
    pub pool_size: u64,
}

impl SelectionMetrics {
    /// Sums the raw counts of two windows and recomputes the ratios.
    pub fn merge(&self, other: &Self) -> Self {
        Self::from_counts(
            self.true_positives + other.true_positives,
            self.selected + other.selected,
            self.pool_novel + other.pool_novel,
            self.pool_size + other.pool_size,
        )
    }

    fn from_counts(tp: u64, selected: u64, pool_novel: u64, pool_size: u64) -> Self {
        Self {
            precision: ratio(tp, selected),
            recall: ratio(tp, pool_novel),
            true_positives: tp,
            selected,
            pool_novel,
            pool_size,
        }
    }

    /// Share of novel-origin entries in the pool: the precision of picking at random.
    pub fn chance_rate(&self) -> Option<f64> {
        ratio(self.pool_novel, self.pool_size)
    }
}

/// Scores selected pool indices against the pool's generating labels; an
/// index is a hit when its origin is a novel id (`>= C+2`).
pub fn selection_metrics(
    selected: &[usize],
    pool_origins: &[usize],
    num_base_classes: usize,
) -> Result<SelectionMetrics> {
    let novel = |l: usize| l >= num_base_classes + 2;
    let mut tp = 0;
    for &i in selected {
        let origin = *pool_origins.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            len: pool_origins.len(),
        })?;
        if novel(origin) {
            tp += 1;
        }
    }
    let pool_novel = pool_origins.iter().filter(|&&l| novel(l)).count() as u64;
    Ok(SelectionMetrics::from_counts(
        tp,
        selected.len() as u64,
        pool_novel,
        pool_origins.len() as u64,
    ))
}

/// One evaluation row.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_class_precision: BTreeMap<usize, f64>,
    pub per_class_recall: BTreeMap<usize, f64>,
    pub base_accuracy: Option<f64>,
    pub novel_recall: Option<f64>,
    pub wilderness_impact: Option<f64>,
    pub aose: u64,
    pub selection_precision: Option<f64>,
    pub selection_recall: Option<f64>,
}
