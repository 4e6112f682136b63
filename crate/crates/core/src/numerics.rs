//! Vector arithmetic shared by every other module.
//!
//! All arithmetic is `f64`. Reductions over a set of vectors (mean, std) sort
//! each coordinate before a compensated sum, so their result does not depend
//! on the order the vectors are supplied in.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms below this are treated as zero.
pub const NORM_EPS: f64 = 1e-12;

/// A dense embedding vector with finite coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    /// Wraps `values`, rejecting empty or non-finite input.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec())
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dims(self, other)?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_dims(self, other)?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.iter().map(|a| a * s).collect())
    }

    /// `a * self + b * other`, coordinatewise.
    pub fn lincomb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        check_dims(self, other)?;
        Ok(Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        ))
    }
}

impl Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

pub(crate) fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Squared Euclidean distance without the dimension check.
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    check_dims(a, b)?;
    let na = a.norm();
    let nb = b.norm();
    if na < NORM_EPS || nb < NORM_EPS {
        return Err(Error::ZeroNorm);
    }
    // Product form keeps the result symmetric in (a, b).
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn euclidean_distance(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    check_dims(a, b)?;
    Ok(squared_distance(a, b).sqrt())
}

/// Neumaier-compensated sum of `values` after sorting them, which makes the
/// result independent of input order.
fn sorted_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values.iter() {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn common_dim<'a, I>(mut xs: I) -> Result<usize>
where
    I: Iterator<Item = &'a FeatureVector>,
{
    let first = xs.next().ok_or(Error::EmptyInput)?;
    let dim = first.dim();
    for x in xs {
        if x.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: x.dim(),
            });
        }
    }
    Ok(dim)
}

/// Coordinatewise arithmetic mean.
pub fn mean_vector(xs: &[FeatureVector]) -> Result<FeatureVector> {
    mean_of(xs.iter())
}

/// Mean over any collection of borrowed vectors.
pub fn mean_of<'a, I>(xs: I) -> Result<FeatureVector>
where
    I: Iterator<Item = &'a FeatureVector> + Clone,
{
    let dim = common_dim(xs.clone())?;
    let n = xs.clone().count() as f64;
    let mut column = Vec::new();
    let values = (0..dim)
        .map(|j| {
            column.clear();
            column.extend(xs.clone().map(|x| x[j]));
            sorted_sum(&mut column) / n
        })
        .collect();
    Ok(FeatureVector(values))
}

/// Coordinatewise population standard deviation (divides by `n`).
pub fn std_vector(xs: &[FeatureVector]) -> Result<FeatureVector> {
    if xs.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            actual: xs.len(),
        });
    }
    let mean = mean_vector(xs)?;
    let n = xs.len() as f64;
    let mut column = Vec::with_capacity(xs.len());
    let values = (0..mean.dim())
        .map(|j| {
            column.clear();
            column.extend(xs.iter().map(|x| {
                let d = x[j] - mean[j];
                d * d
            }));
            (sorted_sum(&mut column) / n).sqrt()
        })
        .collect();
    Ok(FeatureVector(values))
}
