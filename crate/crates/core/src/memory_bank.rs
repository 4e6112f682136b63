//! The clustering-based memory bank.
//!
//! For each of the `C` base classes the bank stores a prototype, a pair of
//! auxiliary features and an intra-class disparity vector; all novel classes
//! share one unified prototype / auxiliary pair / disparity. Every update is a
//! cosine-scaled momentum blend ([`momentum_blend`]) and returns a new bank.
//!
//! Invariant: `novel_aux_plus == novel_prototype + novel_disparity` and
//! `novel_aux_minus == novel_prototype - novel_disparity` after every update.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::numerics::{cosine_similarity, mean_vector, std_vector, FeatureVector, NORM_EPS};

pub const DEFAULT_MOMENTUM: f64 = 0.01;
pub const SNAPSHOT_VERSION: &str = "v1";

/// `old + w (new - old)` with `w = beta * cos(new, old)`.
///
/// This equals `w * new + (1 - w) * old`; the difference form makes
/// `new == old` an exact fixed point. Negative cosines are used as is.
pub fn momentum_blend(old: &FeatureVector, new: &FeatureVector, beta: f64) -> Result<FeatureVector> {
    let w = beta * cosine_similarity(new, old)?;
    let delta = new.sub(old)?;
    old.lincomb(1.0, &delta, w)
}

/// Plain constructor input for [`MemoryBank::from_parts`]. The novel
/// auxiliary pair is derived, never supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct BankParts {
    pub momentum: f64,
    pub base_prototypes: Vec<FeatureVector>,
    pub base_aux_plus: Vec<FeatureVector>,
    pub base_aux_minus: Vec<FeatureVector>,
    pub base_disparity: Vec<FeatureVector>,
    pub novel_prototype: FeatureVector,
    pub novel_disparity: FeatureVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    num_base_classes: usize,
    dim: usize,
    momentum: f64,
    base_prototypes: Vec<FeatureVector>,
    base_aux_plus: Vec<FeatureVector>,
    base_aux_minus: Vec<FeatureVector>,
    base_disparity: Vec<FeatureVector>,
    novel_prototype: FeatureVector,
    novel_aux_plus: FeatureVector,
    novel_aux_minus: FeatureVector,
    novel_disparity: FeatureVector,
}

fn validate_momentum(momentum: f64) -> Result<()> {
    if !(momentum > 0.0 && momentum <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "momentum must lie in (0, 1], got {momentum}"
        )));
    }
    Ok(())
}

impl MemoryBank {
    /// Draws every stored vector from a seeded standard normal.
    pub fn init(num_base_classes: usize, dim: usize, seed: u64, momentum: f64) -> Result<Self> {
        if num_base_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 base classes, got {num_base_classes}"
            )));
        }
        if dim < 2 {
            return Err(Error::InvalidConfig(format!("dim must be >= 2, got {dim}")));
        }
        validate_momentum(momentum)?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut block = |n: usize| -> Vec<FeatureVector> {
            (0..n)
                .map(|_| {
                    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                    FeatureVector::new(v).expect("normal draws are finite")
                })
                .collect()
        };
        let base_prototypes = block(num_base_classes);
        let base_aux_plus = block(num_base_classes);
        let base_aux_minus = block(num_base_classes);
        let base_disparity = block(num_base_classes);
        let novel_prototype = block(1).remove(0);
        let novel_disparity = block(1).remove(0);
        Self::from_parts(BankParts {
            momentum,
            base_prototypes,
            base_aux_plus,
            base_aux_minus,
            base_disparity,
            novel_prototype,
            novel_disparity,
        })
    }

    pub fn from_parts(parts: BankParts) -> Result<Self> {
        validate_momentum(parts.momentum)?;
        let c = parts.base_prototypes.len();
        if c < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 base classes, got {c}"
            )));
        }
        for (name, v) in [
            ("base_aux_plus", &parts.base_aux_plus),
            ("base_aux_minus", &parts.base_aux_minus),
            ("base_disparity", &parts.base_disparity),
        ] {
            if v.len() != c {
                return Err(Error::InvalidConfig(format!(
                    "{name} holds {} vectors, expected {c}",
                    v.len()
                )));
            }
        }
        let dim = parts.novel_prototype.dim();
        let all = parts
            .base_prototypes
            .iter()
            .chain(&parts.base_aux_plus)
            .chain(&parts.base_aux_minus)
            .chain(&parts.base_disparity)
            .chain([&parts.novel_disparity]);
        for v in all {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.dim(),
                });
            }
        }
        let mut bank = Self {
            num_base_classes: c,
            dim,
            momentum: parts.momentum,
            base_prototypes: parts.base_prototypes,
            base_aux_plus: parts.base_aux_plus,
            base_aux_minus: parts.base_aux_minus,
            base_disparity: parts.base_disparity,
            novel_aux_plus: parts.novel_prototype.clone(),
            novel_aux_minus: parts.novel_prototype.clone(),
            novel_prototype: parts.novel_prototype,
            novel_disparity: parts.novel_disparity,
        };
        bank.recompute_novel_aux()?;
        Ok(bank)
    }

    pub fn num_base_classes(&self) -> usize {
        self.num_base_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn base_prototypes(&self) -> &[FeatureVector] {
        &self.base_prototypes
    }

    pub fn base_aux_plus(&self) -> &[FeatureVector] {
        &self.base_aux_plus
    }

    pub fn base_aux_minus(&self) -> &[FeatureVector] {
        &self.base_aux_minus
    }

    pub fn base_disparity(&self) -> &[FeatureVector] {
        &self.base_disparity
    }

    pub fn novel_prototype(&self) -> &FeatureVector {
        &self.novel_prototype
    }

    pub fn novel_aux_plus(&self) -> &FeatureVector {
        &self.novel_aux_plus
    }

    pub fn novel_aux_minus(&self) -> &FeatureVector {
        &self.novel_aux_minus
    }

    pub fn novel_disparity(&self) -> &FeatureVector {
        &self.novel_disparity
    }

    /// Prototype for a label in `1..=C+1`; `C+1` is the unified novel class.
    pub fn prototype(&self, label: usize) -> Result<&FeatureVector> {
        if label == self.num_base_classes + 1 {
            return Ok(&self.novel_prototype);
        }
        Ok(&self.base_prototypes[self.base_slot(label)?])
    }

    /// Auxiliary pair `(plus, minus)` for a label in `1..=C+1`.
    pub fn auxiliary(&self, label: usize) -> Result<(&FeatureVector, &FeatureVector)> {
        if label == self.num_base_classes + 1 {
            return Ok((&self.novel_aux_plus, &self.novel_aux_minus));
        }
        let s = self.base_slot(label)?;
        Ok((&self.base_aux_plus[s], &self.base_aux_minus[s]))
    }

    fn base_slot(&self, class: usize) -> Result<usize> {
        if class == 0 || class > self.num_base_classes {
            return Err(Error::ClassIndexOutOfRange {
                index: class,
                min: 1,
                max: self.num_base_classes,
            });
        }
        Ok(class - 1)
    }

    fn check_dim(&self, v: &FeatureVector) -> Result<()> {
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.dim(),
            });
        }
        Ok(())
    }

    fn recompute_novel_aux(&mut self) -> Result<()> {
        self.novel_aux_plus = self.novel_prototype.add(&self.novel_disparity)?;
        self.novel_aux_minus = self.novel_prototype.sub(&self.novel_disparity)?;
        Ok(())
    }

    /// Folds one batch of matched features for base class `class` (1-based)
    /// into the bank.
    ///
    /// With two or more features, the features plus the current prototype are
    /// split into three k-means clusters. The prototype is blended toward the
    /// mean of the cluster that holds it; the other two cluster means become
    /// the auxiliary pair, `+` being the one closer in cosine to the updated
    /// prototype. The disparity is blended toward the batch's population std;
    /// a batch with zero spread leaves it untouched. A single feature only
    /// moves the prototype, and an empty batch changes nothing.
    pub fn update_base_class(&self, class: usize, matched: &[FeatureVector], seed: u64) -> Result<Self> {
        let slot = self.base_slot(class)?;
        for v in matched {
            self.check_dim(v)?;
        }
        let beta = self.momentum;
        let mut next = self.clone();
        let proto = &self.base_prototypes[slot];
        match matched.len() {
            0 => {}
            1 => {
                next.base_prototypes[slot] = momentum_blend(proto, &matched[0], beta)?;
            }
            n => {
                let mut points = matched.to_vec();
                points.push(proto.clone());
                let clustering = kmeans(&points, 3, seed, DEFAULT_MAX_ITERS, DEFAULT_TOL)?;
                let home = clustering.cluster_of_point(n)?;
                let updated = momentum_blend(proto, &clustering.centroids[home], beta)?;

                let others: Vec<&FeatureVector> = (0..3)
                    .filter(|&c| c != home)
                    .map(|c| &clustering.centroids[c])
                    .collect();
                let cos0 = cosine_similarity(others[0], &updated)?;
                let cos1 = cosine_similarity(others[1], &updated)?;
                let (plus, minus) = if cos1 > cos0 {
                    (others[1], others[0])
                } else {
                    (others[0], others[1])
                };
                next.base_aux_plus[slot] = plus.clone();
                next.base_aux_minus[slot] = minus.clone();
                next.base_prototypes[slot] = updated;

                let spread = std_vector(matched)?;
                if spread.norm() >= NORM_EPS {
                    next.base_disparity[slot] =
                        momentum_blend(&self.base_disparity[slot], &spread, beta)?;
                }
            }
        }
        Ok(next)
    }

    /// Pulls the novel prototype toward the mean base prototype and the novel
    /// disparity toward the mean base disparity, then re-derives the novel
    /// auxiliary pair.
    pub fn refresh_novel_from_base(&self) -> Result<Self> {
        let mean_proto = mean_vector(&self.base_prototypes)?;
        let mean_disp = mean_vector(&self.base_disparity)?;
        self.with_novel(
            momentum_blend(&self.novel_prototype, &mean_proto, self.momentum)?,
            momentum_blend(&self.novel_disparity, &mean_disp, self.momentum)?,
        )
    }

    /// Replaces the novel prototype and disparity, re-deriving the auxiliary pair.
    pub(crate) fn with_novel(&self, prototype: FeatureVector, disparity: FeatureVector) -> Result<Self> {
        self.check_dim(&prototype)?;
        self.check_dim(&disparity)?;
        let mut next = self.clone();
        next.novel_prototype = prototype;
        next.novel_disparity = disparity;
        next.recompute_novel_aux()?;
        Ok(next)
    }

    /// Replaces the prototype of `label` in `1..=C+1`.
    pub(crate) fn with_prototype(&self, label: usize, prototype: FeatureVector) -> Result<Self> {
        self.check_dim(&prototype)?;
        if label == self.num_base_classes + 1 {
            return self.with_novel(prototype, self.novel_disparity.clone());
        }
        let slot = self.base_slot(label)?;
        let mut next = self.clone();
        next.base_prototypes[slot] = prototype;
        Ok(next)
    }

    /// Serializes the bank as a versioned JSON document.
    pub fn snapshot(&self) -> Vec<u8> {
        let doc = SnapshotDoc {
            version: SNAPSHOT_VERSION.to_string(),
            num_base_classes: self.num_base_classes,
            dim: self.dim,
            momentum: self.momentum,
            base_prototypes: to_rows(&self.base_prototypes),
            base_aux_plus: to_rows(&self.base_aux_plus),
            base_aux_minus: to_rows(&self.base_aux_minus),
            base_disparity: to_rows(&self.base_disparity),
            novel_prototype: self.novel_prototype.to_vec(),
            novel_aux_plus: self.novel_aux_plus.to_vec(),
            novel_aux_minus: self.novel_aux_minus.to_vec(),
            novel_disparity: self.novel_disparity.to_vec(),
        };
        serde_json::to_vec_pretty(&doc).expect("snapshot document serializes")
    }

    pub fn load_snapshot(bytes: &[u8]) -> Result<Self> {
        let malformed = |e: serde_json::Error| Error::MalformedSnapshot(e.to_string());
        let value: serde_json::Value = serde_json::from_slice(bytes).map_err(malformed)?;
        let version = value
            .get("version")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::MalformedSnapshot("missing string field `version`".into()))?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::VersionMismatch {
                expected: SNAPSHOT_VERSION.into(),
                found: version.into(),
            });
        }
        let doc: SnapshotDoc = serde_json::from_value(value).map_err(malformed)?;
        doc.into_bank()
    }
}

fn to_rows(vs: &[FeatureVector]) -> Vec<Vec<f64>> {
    vs.iter().map(|v| v.to_vec()).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotDoc {
    version: String,
    #[serde(rename = "C")]
    num_base_classes: usize,
    dim: usize,
    momentum: f64,
    base_prototypes: Vec<Vec<f64>>,
    base_aux_plus: Vec<Vec<f64>>,
    base_aux_minus: Vec<Vec<f64>>,
    base_disparity: Vec<Vec<f64>>,
    novel_prototype: Vec<f64>,
    novel_aux_plus: Vec<f64>,
    novel_aux_minus: Vec<f64>,
    novel_disparity: Vec<f64>,
}

impl SnapshotDoc {
    fn into_bank(self) -> Result<MemoryBank> {
        let bad = |e: Error| Error::MalformedSnapshot(e.to_string());
        let rows = |rows: Vec<Vec<f64>>| -> Result<Vec<FeatureVector>> {
            rows.into_iter().map(FeatureVector::new).collect()
        };
        let bank = MemoryBank::from_parts(BankParts {
            momentum: self.momentum,
            base_prototypes: rows(self.base_prototypes).map_err(bad)?,
            base_aux_plus: rows(self.base_aux_plus).map_err(bad)?,
            base_aux_minus: rows(self.base_aux_minus).map_err(bad)?,
            base_disparity: rows(self.base_disparity).map_err(bad)?,
            novel_prototype: FeatureVector::new(self.novel_prototype).map_err(bad)?,
            novel_disparity: FeatureVector::new(self.novel_disparity).map_err(bad)?,
        })
        .map_err(bad)?;
        if bank.num_base_classes != self.num_base_classes || bank.dim != self.dim {
            return Err(Error::MalformedSnapshot(format!(
                "header says C={} dim={}, vectors give C={} dim={}",
                self.num_base_classes, self.dim, bank.num_base_classes, bank.dim
            )));
        }
        let check = |stored: &[f64], derived: &FeatureVector| {
            stored.len() == derived.dim()
                && stored.iter().zip(derived.iter()).all(|(a, b)| (a - b).abs() <= 1e-12)
        };
        if !check(&self.novel_aux_plus, &bank.novel_aux_plus)
            || !check(&self.novel_aux_minus, &bank.novel_aux_minus)
        {
            return Err(Error::MalformedSnapshot(
                "novel auxiliary features disagree with prototype +/- disparity".into(),
            ));
        }
        Ok(bank)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::from_slice(v).unwrap()
    }

    fn two_class_bank(momentum: f64) -> MemoryBank {
        MemoryBank::from_parts(BankParts {
            momentum,
            base_prototypes: vec![fv(&[1.0, 0.0]), fv(&[0.0, 1.0])],
            base_aux_plus: vec![fv(&[1.0, 1.0]), fv(&[2.0, 1.0])],
            base_aux_minus: vec![fv(&[-1.0, 1.0]), fv(&[0.0, 3.0])],
            base_disparity: vec![fv(&[0.5, 0.5]), fv(&[0.25, 1.0])],
            novel_prototype: fv(&[1.0, 0.0]),
            novel_disparity: fv(&[1e-3, 1e-3]),
        })
        .unwrap()
    }

    fn assert_novel_aux_consistent(bank: &MemoryBank) {
        for i in 0..bank.dim() {
            let m = bank.novel_prototype()[i];
            let d = bank.novel_disparity()[i];
            assert!((bank.novel_aux_plus()[i] - (m + d)).abs() <= 1e-12);
            assert!((bank.novel_aux_minus()[i] - (m - d)).abs() <= 1e-12);
        }
    }

    #[test]
    fn init_is_deterministic_and_consistent() {
        let a = MemoryBank::init(5, 32, 42, 0.01).unwrap();
        let b = MemoryBank::init(5, 32, 42, 0.01).unwrap();
        assert_eq!(a, b);
        assert_novel_aux_consistent(&a);
        assert_eq!(
            a.novel_aux_plus(),
            &a.novel_prototype().add(a.novel_disparity()).unwrap()
        );
        assert_ne!(a, MemoryBank::init(5, 32, 43, 0.01).unwrap());
    }

    #[test]
    fn init_rejects_bad_config() {
        for (c, dim, m) in [(1, 32, 0.01), (5, 1, 0.01), (5, 32, 0.0), (5, 32, 1.5)] {
            assert!(matches!(
                MemoryBank::init(c, dim, 0, m),
                Err(Error::InvalidConfig(_))
            ));
        }
        assert!(MemoryBank::init(2, 2, 0, 1.0).is_ok());
    }

    #[test]
    fn blend_examples() {
        let e1 = fv(&[1.0, 0.0]);
        assert_eq!(momentum_blend(&e1, &e1, 0.01).unwrap(), e1);
        assert_eq!(momentum_blend(&e1, &fv(&[0.0, 1.0]), 0.01).unwrap(), e1);
        let out = momentum_blend(&e1, &fv(&[0.6, 0.8]), 0.5).unwrap();
        assert!((out[0] - 0.88).abs() < 1e-15);
        assert!((out[1] - 0.24).abs() < 1e-15);
        assert_eq!(
            momentum_blend(&e1, &fv(&[0.0, 0.0]), 0.5),
            Err(Error::ZeroNorm)
        );
    }

    #[test]
    fn negative_cosine_is_not_clamped() {
        let out = momentum_blend(&fv(&[1.0, 0.0]), &fv(&[-1.0, 0.0]), 0.5).unwrap();
        // w = -0.5: old + w (new - old) = 1 + (-0.5)(-2) = 2
        assert_eq!(out, fv(&[2.0, 0.0]));
    }

    #[test]
    fn empty_and_singleton_batches() {
        let bank = two_class_bank(0.01);
        assert_eq!(bank.update_base_class(1, &[], 0).unwrap(), bank);
        let copy = bank.base_prototypes()[0].clone();
        assert_eq!(bank.update_base_class(1, &[copy], 0).unwrap(), bank);

        let moved = bank.update_base_class(2, &[fv(&[1.0, 1.0])], 0).unwrap();
        assert_ne!(moved.base_prototypes()[1], bank.base_prototypes()[1]);
        assert_eq!(moved.base_aux_plus(), bank.base_aux_plus());
        assert_eq!(moved.base_disparity(), bank.base_disparity());
    }

    #[test]
    fn base_update_errors() {
        let bank = two_class_bank(0.01);
        assert!(matches!(
            bank.update_base_class(0, &[], 0),
            Err(Error::ClassIndexOutOfRange { .. })
        ));
        assert!(matches!(
            bank.update_base_class(3, &[], 0),
            Err(Error::ClassIndexOutOfRange { .. })
        ));
        assert!(matches!(
            bank.update_base_class(1, &[fv(&[1.0, 2.0, 3.0])], 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn refresh_novel_examples() {
        // Mean of base prototypes already equals the novel prototype.
        let bank = MemoryBank::from_parts(BankParts {
            momentum: 0.01,
            base_prototypes: vec![fv(&[2.0, 0.0]), fv(&[0.0, 2.0])],
            base_aux_plus: vec![fv(&[1.0, 0.0]); 2],
            base_aux_minus: vec![fv(&[0.0, 1.0]); 2],
            base_disparity: vec![fv(&[0.5, 0.25]), fv(&[0.5, 0.75])],
            novel_prototype: fv(&[1.0, 1.0]),
            novel_disparity: fv(&[0.5, 0.5]),
        })
        .unwrap();
        let next = bank.refresh_novel_from_base().unwrap();
        assert_eq!(next.novel_prototype(), bank.novel_prototype());
        assert_eq!(next.novel_disparity(), bank.novel_disparity());
        assert_novel_aux_consistent(&next);

        // beta = 0.5: cos((0.5, 0.5), (1, 0)) = 1/sqrt2, weight 0.353553...
        let next = two_class_bank(0.5).refresh_novel_from_base().unwrap();
        assert!((next.novel_prototype()[0] - 0.823_223_304_703_363).abs() < 1e-12);
        assert!((next.novel_prototype()[1] - 0.176_776_695_296_637).abs() < 1e-12);
        assert_novel_aux_consistent(&next);
    }

    #[test]
    fn snapshot_round_trip_and_errors() {
        let bank = MemoryBank::init(4, 8, 7, 0.01).unwrap();
        let bytes = bank.snapshot();
        assert_eq!(MemoryBank::load_snapshot(&bytes).unwrap(), bank);

        let truncated = &bytes[..bytes.len() / 2];
        assert!(matches!(
            MemoryBank::load_snapshot(truncated),
            Err(Error::MalformedSnapshot(_))
        ));

        let mut doc: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        doc["version"] = "v0".into();
        assert_eq!(
            MemoryBank::load_snapshot(&serde_json::to_vec(&doc).unwrap()),
            Err(Error::VersionMismatch {
                expected: "v1".into(),
                found: "v0".into()
            })
        );

        let mut doc: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        doc["extra"] = 1.into();
        assert!(matches!(
            MemoryBank::load_snapshot(&serde_json::to_vec(&doc).unwrap()),
            Err(Error::MalformedSnapshot(_))
        ));

        let mut doc: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        doc["novel_aux_plus"][0] = 1e6.into();
        assert!(matches!(
            MemoryBank::load_snapshot(&serde_json::to_vec(&doc).unwrap()),
            Err(Error::MalformedSnapshot(_))
        ));
    }

    #[test]
    fn snapshot_header_fields() {
        let bank = MemoryBank::init(3, 4, 1, 0.25).unwrap();
        let doc: serde_json::Value = serde_json::from_slice(&bank.snapshot()).unwrap();
        assert_eq!(doc["version"], "v1");
        assert_eq!(doc["C"], 3);
        assert_eq!(doc["dim"], 4);
        assert_eq!(doc["momentum"], 0.25);
        assert_eq!(doc["base_prototypes"].as_array().unwrap().len(), 3);
    }
}
