//! Synthetic two-domain feature generator.
//!
//! Every class is an isotropic Gaussian around a mean on a sphere. The target
//! domain moves every mean by a shared offset plus a small per-class jitter,
//! and adds novel classes that never carry labels in the source domain.
//! Background clutter is a wide zero-centred Gaussian. By default each
//! novel class sits near one base class, the regime in which novel objects
//! resemble known categories more than clutter does.
//!
//! Labels: `0` background/unmatched, `1..=C` base classes, `C+2..=C+1+C'`
//! individual novel classes. Novel objects that show up in a source batch are
//! unlabelled (`0`), but their generating class is kept in
//! [`LabeledBatch::origins`] for scoring.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{euclidean_distance, FeatureVector};

/// Attempts at drawing well-separated means before giving up.
const MAX_SPEC_ATTEMPTS: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreParams {
    pub foreground_low: f64,
    pub foreground_high: f64,
    pub background_low: f64,
    pub background_high: f64,
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self {
            foreground_low: 0.6,
            foreground_high: 1.0,
            background_low: 0.0,
            background_high: 0.4,
        }
    }
}

/// Inputs to [`make_spec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecParams {
    pub num_base_classes: usize,
    pub num_novel_classes: usize,
    pub dim: usize,
    pub mean_radius: f64,
    /// Per-coordinate std of every class cloud.
    pub class_spread: f64,
    /// Typical norm of a background feature.
    pub background_spread: f64,
    pub shift_magnitude: f64,
    /// Typical norm of each class's extra target-mean perturbation.
    pub jitter_spread: f64,
    /// Share of unmatched source slots filled by unlabelled novel objects.
    pub source_novel_fraction: f64,
    /// When set, every novel mean sits on the sphere at this chord distance
    /// from a randomly chosen base mean. Otherwise novel means are drawn
    /// independently like base means.
    pub novel_parent_distance: Option<f64>,
    pub score_params: ScoreParams,
}

impl Default for SpecParams {
    fn default() -> Self {
        Self {
            num_base_classes: 5,
            num_novel_classes: 3,
            dim: 32,
            mean_radius: 10.0,
            class_spread: 1.0,
            background_spread: 15.0,
            shift_magnitude: 2.0,
            jitter_spread: 0.2,
            source_novel_fraction: 0.25,
            novel_parent_distance: Some(8.0),
            score_params: ScoreParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub dim: usize,
    pub num_base_classes: usize,
    pub num_novel_classes: usize,
    /// Source-domain means, base classes first, then novel.
    pub class_means: Vec<FeatureVector>,
    pub class_spread: f64,
    pub background_spread: f64,
    pub shift_offset: FeatureVector,
    pub jitter_spread: f64,
    /// Per-class target perturbation on top of `shift_offset`.
    pub target_jitter: Vec<FeatureVector>,
    pub source_novel_fraction: f64,
    pub score_params: ScoreParams,
    /// Seed actually used after separation retries.
    pub seed: u64,
}

impl DomainSpec {
    pub fn num_classes(&self) -> usize {
        self.num_base_classes + self.num_novel_classes
    }

    /// Mean of generating class `k` (0-based over base then novel) in `domain`.
    pub fn mean(&self, k: usize, domain: Domain) -> FeatureVector {
        match domain {
            Domain::Source => self.class_means[k].clone(),
            Domain::Target => self.class_means[k]
                .add(&self.shift_offset)
                .and_then(|m| m.add(&self.target_jitter[k]))
                .expect("spec vectors share one dimension"),
        }
    }

    /// Truth label of generating class `k`.
    pub fn label_of(&self, k: usize) -> usize {
        if k < self.num_base_classes {
            k + 1
        } else {
            k + 2
        }
    }

    /// True if `label` names one of the novel classes.
    pub fn is_novel_label(&self, label: usize) -> bool {
        label >= self.num_base_classes + 2
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut *rng);
            scale * z
        })
        .collect::<Vec<f64>>()
}

fn random_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v = normal_vec(rng, dim, 1.0);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Unit vector at chord distance `chord` (on the unit sphere) from the
/// direction of `anchor`.
fn near_direction(rng: &mut ChaCha8Rng, anchor: &FeatureVector, chord: f64) -> Vec<f64> {
    let a: Vec<f64> = anchor.iter().map(|x| x / anchor.norm()).collect();
    let u = loop {
        let v = random_direction(rng, a.len());
        let along: f64 = v.iter().zip(&a).map(|(x, y)| x * y).sum();
        let w: Vec<f64> = v.iter().zip(&a).map(|(x, y)| x - along * y).collect();
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            break w.into_iter().map(|x| x / n).collect::<Vec<f64>>();
        }
    };
    let theta = 2.0 * (chord / 2.0).min(1.0).asin();
    a.iter().zip(&u).map(|(x, y)| theta.cos() * x + theta.sin() * y).collect()
}

fn validate(p: &SpecParams) -> Result<()> {
    let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
    if p.num_base_classes < 2 {
        return fail("need at least 2 base classes");
    }
    if p.num_novel_classes < 1 {
        return fail("need at least 1 novel class");
    }
    if p.dim < 2 {
        return fail("dim must be >= 2");
    }
    if !(p.mean_radius > 0.0 && p.class_spread > 0.0 && p.background_spread > 0.0) {
        return fail("mean_radius and spreads must be positive");
    }
    if !(p.shift_magnitude >= 0.0 && p.jitter_spread >= 0.0) {
        return fail("shift_magnitude and jitter_spread must be non-negative");
    }
    if !(0.0..=1.0).contains(&p.source_novel_fraction) {
        return fail("source_novel_fraction must lie in [0, 1]");
    }
    if let Some(d) = p.novel_parent_distance {
        if !(d > 0.0 && d <= 2.0 * p.mean_radius) {
            return fail("novel_parent_distance must lie in (0, 2 * mean_radius]");
        }
    }
    let s = &p.score_params;
    let ordered = |lo: f64, hi: f64| 0.0 <= lo && lo <= hi && hi <= 1.0;
    if !ordered(s.foreground_low, s.foreground_high) || !ordered(s.background_low, s.background_high) {
        return fail("score ranges must satisfy 0 <= low <= high <= 1");
    }
    Ok(())
}

/// Draws class means, the domain shift and the target jitter.
///
/// If two means land closer than `4 * class_spread` the draw is repeated with
/// `seed + 1`, `seed + 2`, ...
pub fn make_spec(params: &SpecParams, seed: u64) -> Result<DomainSpec> {
    validate(params)?;
    let classes = params.num_base_classes + params.num_novel_classes;
    for attempt in 0..MAX_SPEC_ATTEMPTS {
        let used = seed.wrapping_add(attempt);
        let mut rng = ChaCha8Rng::seed_from_u64(used);
        let mut class_means = Vec::with_capacity(classes);
        for k in 0..classes {
            let dir = match params.novel_parent_distance {
                Some(dist) if k >= params.num_base_classes => {
                    let parent = rng.random_range(0..params.num_base_classes);
                    near_direction(&mut rng, &class_means[parent], dist / params.mean_radius)
                }
                _ => random_direction(&mut rng, params.dim),
            };
            class_means.push(FeatureVector::new(
                dir.into_iter().map(|x| x * params.mean_radius).collect(),
            )?);
        }
        let shift_offset = FeatureVector::new(
            random_direction(&mut rng, params.dim)
                .into_iter()
                .map(|x| x * params.shift_magnitude)
                .collect(),
        )?;
        // Per-coordinate std jitter/sqrt(dim) gives a perturbation of norm ~jitter.
        let per_coord = params.jitter_spread / (params.dim as f64).sqrt();
        let target_jitter = (0..classes)
            .map(|_| FeatureVector::new(normal_vec(&mut rng, params.dim, per_coord)))
            .collect::<Result<Vec<_>>>()?;

        let mut min_gap = f64::INFINITY;
        for i in 0..classes {
            for j in i + 1..classes {
                min_gap = min_gap.min(euclidean_distance(&class_means[i], &class_means[j])?);
            }
        }
        if min_gap > 4.0 * params.class_spread {
            return Ok(DomainSpec {
                dim: params.dim,
                num_base_classes: params.num_base_classes,
                num_novel_classes: params.num_novel_classes,
                class_means,
                class_spread: params.class_spread,
                background_spread: params.background_spread,
                shift_offset,
                jitter_spread: params.jitter_spread,
                target_jitter,
                source_novel_fraction: params.source_novel_fraction,
                score_params: params.score_params,
                seed: used,
            });
        }
    }
    Err(Error::InvalidConfig(format!(
        "could not separate class means by 4 x class_spread in {MAX_SPEC_ATTEMPTS} draws"
    )))
}

/// A generated batch. Algorithms should only read `features` and
/// `fg_scores`; the label accessors are for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    domain: Domain,
    features: Vec<FeatureVector>,
    fg_scores: Vec<f64>,
    true_labels: Vec<usize>,
    origins: Vec<usize>,
}

impl LabeledBatch {
    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[FeatureVector] {
        &self.features
    }

    pub fn fg_scores(&self) -> &[f64] {
        &self.fg_scores
    }

    /// Visible labels: base classes, novel ids (target only), 0 otherwise.
    pub fn true_labels(&self) -> &[usize] {
        &self.true_labels
    }

    /// Generating class label of every entry, including unlabelled novel
    /// objects in source batches.
    pub fn origins(&self) -> &[usize] {
        &self.origins
    }

    /// Source-side matching: labelled features grouped by base class
    /// (`result[c - 1]` for class `c`), plus indices of the unmatched pool.
    pub fn split_matched(&self, num_base_classes: usize) -> (Vec<Vec<FeatureVector>>, Vec<usize>) {
        let mut matched = vec![Vec::new(); num_base_classes];
        let mut unmatched = Vec::new();
        for (i, &l) in self.true_labels.iter().enumerate() {
            if (1..=num_base_classes).contains(&l) {
                matched[l - 1].push(self.features[i].clone());
            } else {
                unmatched.push(i);
            }
        }
        (matched, unmatched)
    }
}

/// Samples one batch: `n_foreground` class objects followed by
/// `n_background` unmatched entries.
pub fn sample_batch(
    spec: &DomainSpec,
    domain: Domain,
    n_foreground: usize,
    n_background: usize,
    seed: u64,
) -> Result<LabeledBatch> {
    if n_foreground + n_background == 0 {
        return Err(Error::InvalidConfig("batch must hold at least one entry".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sp = spec.score_params;
    let fg_classes = match domain {
        Domain::Source => spec.num_base_classes,
        Domain::Target => spec.num_classes(),
    };
    let total = n_foreground + n_background;
    let mut batch = LabeledBatch {
        domain,
        features: Vec::with_capacity(total),
        fg_scores: Vec::with_capacity(total),
        true_labels: Vec::with_capacity(total),
        origins: Vec::with_capacity(total),
    };

    let draw_object = |rng: &mut ChaCha8Rng, k: usize| -> Result<FeatureVector> {
        let mean = spec.mean(k, domain);
        let noise = normal_vec(rng, spec.dim, spec.class_spread);
        FeatureVector::new(mean.iter().zip(noise).map(|(m, e)| m + e).collect())
    };

    for _ in 0..n_foreground {
        let k = rng.random_range(0..fg_classes);
        let v = draw_object(&mut rng, k)?;
        batch.features.push(v);
        batch
            .fg_scores
            .push(rng.random_range(sp.foreground_low..=sp.foreground_high));
        batch.true_labels.push(spec.label_of(k));
        batch.origins.push(spec.label_of(k));
    }
    for _ in 0..n_background {
        let leak = domain == Domain::Source && rng.random::<f64>() < spec.source_novel_fraction;
        let (v, origin) = if leak {
            let k = spec.num_base_classes + rng.random_range(0..spec.num_novel_classes);
            (draw_object(&mut rng, k)?, spec.label_of(k))
        } else {
            let per_coord = spec.background_spread / (spec.dim as f64).sqrt();
            let v = FeatureVector::new(normal_vec(&mut rng, spec.dim, per_coord))?;
            (v, 0)
        };
        batch.features.push(v);
        batch
            .fg_scores
            .push(rng.random_range(sp.background_low..=sp.background_high));
        batch.true_labels.push(0);
        batch.origins.push(origin);
    }
    Ok(batch)
}
