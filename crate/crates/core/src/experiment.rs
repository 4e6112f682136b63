//! End-to-end training loop on the synthetic benchmark.
//!
//! Each iteration runs a source phase (bank update from matched features,
//! novel refresh, novel-candidate selection) and then a target phase
//! (foreground filtering, pseudo-labelling, prototype update). A linear probe
//! learns from the selected candidates and from the pseudo-labels. Every
//! `eval_every` iterations a held-out target batch is scored against its
//! hidden labels.
//!
//! All randomness flows from [`derive_seed`], so a stage can be replayed
//! from its iteration number alone.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{build_tcm, filter_foreground, update_prototypes_from_target, DEFAULT_FG_THRESHOLD};
use crate::error::Error;
use crate::eval::{confusion, MetricReport, SelectionMetrics};
use crate::memory_bank::{MemoryBank, DEFAULT_MOMENTUM};
use crate::numerics::{euclidean_distance, FeatureVector};
use crate::probe::{ProbeClassifier, DEFAULT_ADAPTIVE_LOSS_WEIGHT, DEFAULT_LEARNING_RATE, DEFAULT_NOVEL_LOSS_WEIGHT};
use crate::selection::{build_scm, select_topk, update_novel_memory, DEFAULT_GAMMA, DEFAULT_TOP_K};
use crate::simulator::{make_spec, sample_batch, Domain, DomainSpec, LabeledBatch, SpecParams};

pub const CSV_HEADER: &str =
    "iter,base_accuracy,novel_recall,wilderness_impact,aose,selection_precision,selection_recall,loss_nc,loss_ac";

/// Stage tags mixed into [`derive_seed`].
pub mod stage {
    pub const SPEC: u64 = 1;
    pub const BANK_INIT: u64 = 2;
    pub const SOURCE: u64 = 3;
    pub const TARGET: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const FINAL_EVAL: u64 = 6;
    /// Class `c` uses `KMEANS + c`.
    pub const KMEANS: u64 = 0x100;
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output function.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sub-seed for `(master, iteration, stage)`: three chained SplitMix64 rounds.
pub fn derive_seed(master: u64, iteration: u64, stage_tag: u64) -> u64 {
    let h = mix64(master.wrapping_add(GOLDEN_GAMMA));
    let h = mix64(h ^ iteration.wrapping_mul(GOLDEN_GAMMA));
    mix64(h ^ stage_tag.wrapping_mul(GOLDEN_GAMMA).rotate_left(17))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spec: SpecParams,
    pub iterations: usize,
    pub source_foreground: usize,
    pub source_background: usize,
    pub target_foreground: usize,
    pub target_background: usize,
    pub eval_foreground: usize,
    pub eval_background: usize,
    pub gamma: f64,
    pub top_k: usize,
    pub beta: f64,
    pub fg_threshold: f64,
    pub learning_rate: f64,
    /// Weight of the novel-class probe loss.
    pub lambda_novel: f64,
    /// Weight of the adaptive probe loss.
    pub lambda_adaptive: f64,
    pub seed: u64,
    pub eval_every: usize,
    /// Write a bank snapshot every this many iterations; 0 disables.
    pub snapshot_every: usize,
    pub output_dir: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            spec: SpecParams::default(),
            iterations: 200,
            source_foreground: 40,
            source_background: 40,
            target_foreground: 40,
            target_background: 20,
            eval_foreground: 200,
            eval_background: 50,
            gamma: DEFAULT_GAMMA,
            top_k: DEFAULT_TOP_K,
            beta: DEFAULT_MOMENTUM,
            fg_threshold: DEFAULT_FG_THRESHOLD,
            learning_rate: DEFAULT_LEARNING_RATE,
            lambda_novel: DEFAULT_NOVEL_LOSS_WEIGHT,
            lambda_adaptive: DEFAULT_ADAPTIVE_LOSS_WEIGHT,
            seed: 42,
            eval_every: 10,
            snapshot_every: 0,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        let config: Self = serde_json::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |msg: &str| Err(RunError::Config(msg.to_string()));
        if self.spec.num_base_classes < 2 {
            return bad("at least two base classes are required");
        }
        if self.source_foreground + self.source_background == 0
            || self.target_foreground + self.target_background == 0
            || self.eval_foreground + self.eval_background == 0
        {
            return bad("every batch needs at least one entry");
        }
        let positive = [
            ("gamma", self.gamma),
            ("beta", self.beta),
            ("learning_rate", self.learning_rate),
            ("lambda_novel", self.lambda_novel),
            ("lambda_adaptive", self.lambda_adaptive),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if self.beta > 1.0 {
            return bad("beta must be at most 1");
        }
        if !(0.0..=1.0).contains(&self.fg_threshold) {
            return bad("fg_threshold must lie in [0, 1]");
        }
        if self.top_k == 0 {
            return bad("top_k must be positive");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("iteration {iteration}, stage {stage}: {source}")]
    Step {
        iteration: usize,
        stage: &'static str,
        source: Error,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn at(iteration: usize, stage: &'static str) -> impl FnOnce(Error) -> RunError {
    move |source| RunError::Step {
        iteration,
        stage,
        source,
    }
}

/// One metrics row. `iter` is `None` for the final summary row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub iter: Option<usize>,
    pub metrics: MetricReport,
    pub loss_nc: Option<f64>,
    pub loss_ac: Option<f64>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricRow {
    pub fn to_csv(&self) -> String {
        let m = &self.metrics;
        let iter = self.iter.map_or_else(|| "final".to_string(), |t| t.to_string());
        format!(
            "{iter},{},{},{},{},{},{},{},{}",
            cell(m.base_accuracy),
            cell(m.novel_recall),
            cell(m.wilderness_impact),
            m.aose,
            cell(m.selection_precision),
            cell(m.selection_recall),
            cell(self.loss_nc),
            cell(self.loss_ac),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<MetricRow>,
    pub final_row: Option<MetricRow>,
    /// Nearest source-prototype accuracy of a bank that only saw source data,
    /// on the final held-out batch.
    pub baseline_accuracy: Option<f64>,
    /// Selection counts over the whole run.
    pub selection: SelectionMetrics,
    pub spec_seed: u64,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub final_bank: Option<MemoryBank>,
}

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in self.rows.iter().chain(&self.final_row) {
            let _ = writeln!(out, "{}", row.to_csv());
        }
        out
    }

    pub fn final_assignment_accuracy(&self) -> Option<f64> {
        self.final_row.as_ref().and_then(|r| r.metrics.base_accuracy)
    }
}

/// What one iteration did to the bank, for the probe and the metrics.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub selected: Vec<FeatureVector>,
    pub selection: Option<SelectionMetrics>,
    pub kept: Vec<FeatureVector>,
    pub assigned_labels: Vec<usize>,
}

/// The generated spec and initial bank for a config.
pub fn setup(config: &ExperimentConfig) -> Result<(DomainSpec, MemoryBank), RunError> {
    config.validate()?;
    let spec = make_spec(&config.spec, derive_seed(config.seed, 0, stage::SPEC))
        .map_err(|e| RunError::Config(e.to_string()))?;
    let bank = MemoryBank::init(
        config.spec.num_base_classes,
        config.spec.dim,
        derive_seed(config.seed, 0, stage::BANK_INIT),
        config.beta,
    )
    .map_err(|e| RunError::Config(e.to_string()))?;
    Ok((spec, bank))
}

/// Source-side bank update from matched features, then the novel refresh.
fn source_bank_update(
    config: &ExperimentConfig,
    bank: &MemoryBank,
    matched: &[Vec<FeatureVector>],
    t: usize,
) -> Result<MemoryBank, RunError> {
    let mut next = bank.clone();
    for (i, feats) in matched.iter().enumerate() {
        let class = i + 1;
        let seed = derive_seed(config.seed, t as u64, stage::KMEANS + class as u64);
        next = next
            .update_base_class(class, feats, seed)
            .map_err(at(t, "base class update"))?;
    }
    next.refresh_novel_from_base().map_err(at(t, "novel refresh"))
}

/// Source batch for iteration `t`.
pub fn source_batch(config: &ExperimentConfig, spec: &DomainSpec, t: usize) -> Result<LabeledBatch, RunError> {
    sample_batch(
        spec,
        Domain::Source,
        config.source_foreground,
        config.source_background,
        derive_seed(config.seed, t as u64, stage::SOURCE),
    )
    .map_err(at(t, "source sampling"))
}

/// Every bank mutation of iteration `t` (1-based). Does not touch the probe,
/// so replaying it from a snapshot reproduces the bank trajectory.
pub fn bank_step(
    config: &ExperimentConfig,
    spec: &DomainSpec,
    bank: &MemoryBank,
    t: usize,
) -> Result<(MemoryBank, StepTrace), RunError> {
    let c = spec.num_base_classes;
    let source = source_batch(config, spec, t)?;
    let (matched, unmatched) = source.split_matched(c);
    let mut bank = source_bank_update(config, bank, &matched, t)?;

    let mut trace = StepTrace {
        selected: Vec::new(),
        selection: None,
        kept: Vec::new(),
        assigned_labels: Vec::new(),
    };
    if !unmatched.is_empty() {
        let pool: Vec<FeatureVector> = unmatched.iter().map(|&i| source.features()[i].clone()).collect();
        let origins: Vec<usize> = unmatched.iter().map(|&i| source.origins()[i]).collect();
        let scm = build_scm(&pool, &bank, config.gamma).map_err(at(t, "source connection matrix"))?;
        let k = config.top_k.min(pool.len());
        let picked = select_topk(&scm, &pool, k).map_err(at(t, "top-k selection"))?;
        trace.selection = Some(
            crate::eval::selection_metrics(&picked.indices, &origins, c).map_err(at(t, "selection metrics"))?,
        );
        bank = update_novel_memory(&bank, &picked).map_err(at(t, "novel memory update"))?;
        trace.selected = picked.features;
    }

    let target = sample_batch(
        spec,
        Domain::Target,
        config.target_foreground,
        config.target_background,
        derive_seed(config.seed, t as u64, stage::TARGET),
    )
    .map_err(at(t, "target sampling"))?;
    let (kept, _) = filter_foreground(target.features(), target.fg_scores(), config.fg_threshold)
        .map_err(at(t, "foreground filter"))?;
    if !kept.is_empty() {
        let tcm = build_tcm(&kept, &bank).map_err(at(t, "target connection matrix"))?;
        bank = update_prototypes_from_target(&bank, &kept, &tcm.assigned_labels)
            .map_err(at(t, "target prototype update"))?;
        trace.kept = kept;
        trace.assigned_labels = tcm.assigned_labels;
    }
    Ok((bank, trace))
}

/// Re-runs iterations `from + 1 ..= to` starting from `bank`.
pub fn replay_bank(
    config: &ExperimentConfig,
    spec: &DomainSpec,
    bank: &MemoryBank,
    from: usize,
    to: usize,
) -> Result<MemoryBank, RunError> {
    let mut bank = bank.clone();
    for t in from + 1..=to {
        bank = bank_step(config, spec, &bank, t)?.0;
    }
    Ok(bank)
}

/// Nearest base prototype (Euclidean, ties to the lower class) accuracy on
/// the base-truth entries of `batch`.
pub fn compute_baseline(bank: &MemoryBank, batch: &LabeledBatch) -> crate::error::Result<f64> {
    let c = bank.num_base_classes();
    let mut correct = 0usize;
    let mut total = 0usize;
    for (v, &truth) in batch.features().iter().zip(batch.true_labels()) {
        if !(1..=c).contains(&truth) {
            continue;
        }
        let mut best = (0, f64::INFINITY);
        for (i, p) in bank.base_prototypes().iter().enumerate() {
            let d = euclidean_distance(v, p)?;
            if d < best.1 {
                best = (i, d);
            }
        }
        total += 1;
        if best.0 + 1 == truth {
            correct += 1;
        }
    }
    if total == 0 {
        return Err(Error::UndefinedMetric("baseline accuracy"));
    }
    Ok(correct as f64 / total as f64)
}

/// Scores the bank's pseudo-labels and the probe's predictions on the
/// foreground-filtered part of `batch`.
fn evaluate(
    config: &ExperimentConfig,
    bank: &MemoryBank,
    probe: &ProbeClassifier,
    batch: &LabeledBatch,
    selection: &SelectionMetrics,
    t: usize,
) -> Result<MetricReport, RunError> {
    let c = bank.num_base_classes();
    let (kept, idx) = filter_foreground(batch.features(), batch.fg_scores(), config.fg_threshold)
        .map_err(at(t, "evaluation filter"))?;
    let truths: Vec<usize> = idx.iter().map(|&i| batch.true_labels()[i]).collect();
    let mut report = MetricReport {
        selection_precision: selection.precision,
        selection_recall: selection.recall,
        ..MetricReport::default()
    };
    if kept.is_empty() {
        return Ok(report);
    }
    let assigned = build_tcm(&kept, bank).map_err(at(t, "evaluation assignment"))?.assigned_labels;
    report.base_accuracy = confusion(&assigned, &truths, c)
        .map_err(at(t, "evaluation assignment"))?
        .base_accuracy();

    let preds = kept
        .iter()
        .map(|v| probe.predict(v).map(|slot| slot + 1))
        .collect::<crate::error::Result<Vec<_>>>()
        .map_err(at(t, "probe prediction"))?;
    let table = confusion(&preds, &truths, c).map_err(at(t, "evaluation metrics"))?;
    report.per_class_precision = table.per_class_precision();
    report.per_class_recall = table.per_class_recall();
    report.novel_recall = table.novel_recall();
    report.wilderness_impact = table.wilderness_impact().ok();
    report.aose = table.aose();
    Ok(report)
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, RunError> {
    run_experiment_observed(config, |_, _| Ok(()))
}

/// Runs the loop, calling `on_iteration(t, bank)` after every iteration.
pub fn run_experiment_observed<F>(config: &ExperimentConfig, mut on_iteration: F) -> Result<ExperimentReport, RunError>
where
    F: FnMut(usize, &MemoryBank) -> Result<(), RunError>,
{
    let (spec, mut bank) = setup(config)?;
    let c = spec.num_base_classes;
    let novel_slot = c;
    let mut shadow = bank.clone();
    let mut probe = ProbeClassifier::zeros(c + 1, spec.dim, config.learning_rate)
        .map_err(|e| RunError::Config(e.to_string()))?;
    probe.loss_weight_novel = config.lambda_novel;
    probe.loss_weight_adaptive = config.lambda_adaptive;

    let mut report = ExperimentReport {
        rows: Vec::new(),
        final_row: None,
        baseline_accuracy: None,
        selection: SelectionMetrics::default(),
        spec_seed: spec.seed,
        notes: vec![
            "loss_nc and loss_ac are the weighted probe losses averaged over the evaluation window".into(),
            "only the novel-class and adaptive losses train the probe; no detection or global alignment loss exists here"
                .into(),
        ],
        final_bank: None,
    };
    let mut window = SelectionMetrics::default();
    let (mut window_nc, mut window_ac) = (Vec::new(), Vec::new());
    let (mut all_nc, mut all_ac) = (Vec::new(), Vec::new());

    for t in 1..=config.iterations {
        let (next, trace) = bank_step(config, &spec, &bank, t)?;
        bank = next;

        // The baseline bank sees the same source updates and nothing else.
        let source = source_batch(config, &spec, t)?;
        shadow = source_bank_update(config, &shadow, &source.split_matched(c).0, t)?;

        if let Some(sel) = &trace.selection {
            window = window.merge(sel);
            report.selection = report.selection.merge(sel);
        }
        if !trace.selected.is_empty() {
            let labels = vec![novel_slot; trace.selected.len()];
            let w = probe.loss_weight_novel;
            let loss = probe.loss(&trace.selected, &labels, w).map_err(at(t, "novel probe loss"))?;
            probe = probe.sgd_step(&trace.selected, &labels, w).map_err(at(t, "novel probe step"))?;
            window_nc.push(loss);
            all_nc.push(loss);
        }
        if !trace.kept.is_empty() {
            let labels: Vec<usize> = trace.assigned_labels.iter().map(|l| l - 1).collect();
            let w = probe.loss_weight_adaptive;
            let loss = probe.loss(&trace.kept, &labels, w).map_err(at(t, "adaptive probe loss"))?;
            probe = probe.sgd_step(&trace.kept, &labels, w).map_err(at(t, "adaptive probe step"))?;
            window_ac.push(loss);
            all_ac.push(loss);
        }

        if t % config.eval_every == 0 {
            let batch = eval_batch(config, &spec, derive_seed(config.seed, t as u64, stage::EVAL), t)?;
            let metrics = evaluate(config, &bank, &probe, &batch, &window, t)?;
            report.rows.push(MetricRow {
                iter: Some(t),
                metrics,
                loss_nc: mean(&window_nc),
                loss_ac: mean(&window_ac),
            });
            window = SelectionMetrics::default();
            window_nc.clear();
            window_ac.clear();
        }
        on_iteration(t, &bank)?;
    }

    if config.iterations > 0 {
        let t = config.iterations;
        let batch = eval_batch(config, &spec, derive_seed(config.seed, t as u64, stage::FINAL_EVAL), t)?;
        let metrics = evaluate(config, &bank, &probe, &batch, &report.selection, t)?;
        report.baseline_accuracy = compute_baseline(&shadow, &batch).ok();
        report.final_row = Some(MetricRow {
            iter: None,
            metrics,
            loss_nc: mean(&all_nc),
            loss_ac: mean(&all_ac),
        });
    }
    report.final_bank = Some(bank);
    Ok(report)
}

fn eval_batch(config: &ExperimentConfig, spec: &DomainSpec, seed: u64, t: usize) -> Result<LabeledBatch, RunError> {
    sample_batch(spec, Domain::Target, config.eval_foreground, config.eval_background, seed)
        .map_err(at(t, "evaluation sampling"))
}
