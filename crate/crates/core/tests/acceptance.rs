//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use openset_bank::assignment::{build_tcm, update_prototypes_from_target};
use openset_bank::clustering::{kmeans, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use openset_bank::eval::{aose, wilderness_impact};
use openset_bank::experiment::{run_experiment, ExperimentConfig};
use openset_bank::memory_bank::{momentum_blend, BankParts};
use openset_bank::probe::ProbeClassifier;
use openset_bank::selection::{protoball_distance, select_topk, update_novel_memory, NovelSelection, ScmResult};
use openset_bank::{FeatureVector, MemoryBank};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Final assignment accuracy of the default run, seed 42.
const GOLDEN_ACCURACY: f64 = 0.6277372262773723;
const GOLDEN_TOLERANCE: f64 = 0.02;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn normal(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> FeatureVector {
    let v: Vec<f64> = (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect();
    FeatureVector::new(v).unwrap()
}

fn fv(v: &[f64]) -> FeatureVector {
    FeatureVector::from_slice(v).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn protoball() -> Outcome {
    let u = protoball_distance(&fv(&[0.0, 0.5]), &fv(&[0.0, 0.0]), &fv(&[1.0, 0.0]), 0.65).map_err(|e| e.to_string())?;
    ensure((u + 0.318_034_0).abs() <= 1e-7, || format!("hand value {u}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_bisector = 0.0f64;
    let mut worst_anti = 0.0f64;
    for _ in 0..1000 {
        let dim = rng.random_range(2..=8);
        let a = normal(&mut rng, dim, 3.0);
        let b = normal(&mut rng, dim, 3.0);
        let v = normal(&mut rng, dim, 3.0);
        let gamma = rng.random_range(0.1..1.5);
        let ab = protoball_distance(&v, &a, &b, gamma).unwrap();
        let ba = protoball_distance(&v, &b, &a, gamma).unwrap();
        worst_anti = worst_anti.max((ab + ba).abs());

        // Midpoint plus a component orthogonal to b - a.
        let axis: Vec<f64> = b.iter().zip(a.iter()).map(|(x, y)| x - y).collect();
        let r = normal(&mut rng, dim, 3.0);
        let k = dot(&r, &axis) / dot(&axis, &axis);
        let on: Vec<f64> = (0..dim).map(|i| (a[i] + b[i]) / 2.0 + r[i] - k * axis[i]).collect();
        let s = protoball_distance(&fv(&on), &a, &b, gamma).unwrap();
        worst_bisector = worst_bisector.max(s.abs());
    }
    ensure(worst_bisector <= 1e-9, || format!("bisector residual {worst_bisector:e}"))?;
    ensure(worst_anti <= 1e-12, || format!("antisymmetry residual {worst_anti:e}"))?;
    Ok(format!(
        "hand {u:.7}, bisector max {worst_bisector:.1e}, antisymmetry max {worst_anti:.1e}"
    ))
}

fn blend() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_orth = 0.0f64;
    let mut convex_pairs = 0;
    for _ in 0..1000 {
        let dim = rng.random_range(2..=16);
        let beta = rng.random_range(0.001..=1.0);
        let old = normal(&mut rng, dim, 2.0);
        ensure(momentum_blend(&old, &old, beta).unwrap() == old, || "fixed point moved".into())?;

        let r = normal(&mut rng, dim, 2.0);
        let k = dot(&r, &old) / dot(&old, &old);
        let orth = fv(&r.iter().zip(old.iter()).map(|(x, o)| x - k * o).collect::<Vec<_>>());
        if orth.norm() > 1e-6 {
            let out = momentum_blend(&old, &orth, beta).unwrap();
            let diff = out.iter().zip(old.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            worst_orth = worst_orth.max(diff);
        }

        let mut new = normal(&mut rng, dim, 2.0);
        if dot(&new, &old) < 0.0 {
            new = new.scale(-1.0);
        }
        let out = momentum_blend(&old, &new, beta).unwrap();
        for i in 0..dim {
            let (lo, hi) = (old[i].min(new[i]), old[i].max(new[i]));
            ensure(out[i] >= lo - 1e-12 && out[i] <= hi + 1e-12, || {
                format!("coordinate {i} = {} outside [{lo}, {hi}]", out[i])
            })?;
        }
        convex_pairs += 1;
    }
    ensure(worst_orth <= 1e-12, || format!("orthogonal drift {worst_orth:e}"))?;
    Ok(format!("orthogonal drift max {worst_orth:.1e}, {convex_pairs} convex pairs"))
}

/// Canonical form of a partition: member lists sorted by first member.
fn canonical(labels: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = (0..k)
        .map(|c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
        .filter(|g: &Vec<usize>| !g.is_empty())
        .collect();
    groups.sort();
    groups
}

fn partition_inertia(points: &[FeatureVector], labels: &[usize], k: usize) -> Option<f64> {
    let dim = points[0].dim();
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<&FeatureVector> = points.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
        if members.is_empty() {
            return None;
        }
        let centre: Vec<f64> = (0..dim)
            .map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64)
            .collect();
        total += members
            .iter()
            .map(|p| p.iter().zip(&centre).map(|(x, m)| (x - m).powi(2)).sum::<f64>())
            .sum::<f64>();
    }
    Some(total)
}

fn brute_force_partition(points: &[FeatureVector], k: usize) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut labels = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;
    for code in 0..k.pow(n as u32) {
        let mut c = code;
        for l in labels.iter_mut() {
            *l = c % k;
            c /= k;
        }
        if let Some(inertia) = partition_inertia(points, &labels, k) {
            if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
                best = Some((inertia, labels.clone()));
            }
        }
    }
    canonical(&best.unwrap().1, k)
}

fn clustering_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for instance in 0..50 {
        let dim = rng.random_range(2..=4);
        let spread = 1.0;
        let n = rng.random_range(4..=8);
        let centres: Vec<Vec<f64>> = (0..3)
            .map(|c| {
                let mut m = vec![0.0; dim];
                m[c % dim] += 40.0 * (1 + c / dim) as f64;
                m
            })
            .collect();
        // Every cluster gets a point; the rest are spread at random.
        let points: Vec<FeatureVector> = (0..n)
            .map(|i| {
                let c = if i < 3 { i } else { rng.random_range(0..3) };
                fv(&centres[c]
                    .iter()
                    .map(|m| m + rng.random_range(-spread..=spread))
                    .collect::<Vec<_>>())
            })
            .collect();
        let seed = rng.random();
        let got = kmeans(&points, 3, seed, DEFAULT_MAX_ITERS, DEFAULT_TOL).map_err(|e| e.to_string())?;
        let again = kmeans(&points, 3, seed, DEFAULT_MAX_ITERS, DEFAULT_TOL).unwrap();
        ensure(got == again, || format!("instance {instance}: repeated call differs"))?;
        let expected = brute_force_partition(&points, 3);
        ensure(canonical(&got.assignments, 3) == expected, || {
            format!("instance {instance}: got {:?}, oracle {expected:?}", got.assignments)
        })?;
    }
    Ok("50 instances match the exhaustive partition".into())
}

fn random_bank(rng: &mut ChaCha8Rng, classes: usize, dim: usize) -> MemoryBank {
    let block = |rng: &mut ChaCha8Rng, n: usize| (0..n).map(|_| normal(rng, dim, 3.0)).collect::<Vec<_>>();
    MemoryBank::from_parts(BankParts {
        momentum: 0.01,
        base_prototypes: block(rng, classes),
        base_aux_plus: block(rng, classes),
        base_aux_minus: block(rng, classes),
        base_disparity: block(rng, classes),
        novel_prototype: normal(rng, dim, 3.0),
        novel_disparity: normal(rng, dim, 1.0),
    })
    .unwrap()
}

fn selection_and_assignment() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..100 {
        let n = rng.random_range(1..=30);
        // Small integer scores force ties.
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64 - 2.5).collect();
        let k = rng.random_range(1..=n);
        let feats: Vec<FeatureVector> = (0..n).map(|i| fv(&[i as f64, 0.0])).collect();
        let scm = ScmResult {
            scores: vec![scores.clone()],
            partner_of: vec![0],
            best_scores: scores.clone(),
        };
        let got = select_topk(&scm, &feats, k).map_err(|e| e.to_string())?.indices;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| scores[i].partial_cmp(&scores[j]).unwrap().then(i.cmp(&j)));
        let mut want = order[..k].to_vec();
        want.sort();
        ensure(got == want, || format!("top-k case {case}: {got:?} vs {want:?}"))?;
    }
    for case in 0..100 {
        let classes = rng.random_range(2..=6);
        let dim = rng.random_range(2..=8);
        let bank = random_bank(&mut rng, classes, dim);
        let kept: Vec<FeatureVector> = (0..rng.random_range(1..=20)).map(|_| normal(&mut rng, dim, 4.0)).collect();
        let got = build_tcm(&kept, &bank).map_err(|e| e.to_string())?.assigned_labels;
        let want: Vec<usize> = kept
            .iter()
            .map(|v| {
                let mut best = (0, f64::INFINITY);
                for label in 1..=classes + 1 {
                    let (p, m) = bank.auxiliary(label).unwrap();
                    let mid: Vec<f64> = p.iter().zip(m.iter()).map(|(x, y)| (x + y) / 2.0).collect();
                    let num = v.iter().zip(&mid).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                    let den = p.iter().zip(m.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt().max(1e-12);
                    if num / den < best.1 {
                        best = (label, num / den);
                    }
                }
                best.0
            })
            .collect();
        ensure(got == want, || format!("assignment case {case}: {got:?} vs {want:?}"))?;
    }
    Ok("100 top-k and 100 assignment cases exact".into())
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-4;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let classes = rng.random_range(2..=6);
        let dim = rng.random_range(1..=16);
        let weights: Vec<f64> = (0..classes * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let biases: Vec<f64> = (0..classes).map(|_| rng.random_range(-1.0..1.0)).collect();
        let probe = ProbeClassifier::from_parameters(classes, dim, weights, biases, 0.1).unwrap();
        let n = rng.random_range(1..=6);
        let feats: Vec<FeatureVector> = (0..n).map(|_| normal(&mut rng, dim, 1.0)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let weight = rng.random_range(0.1..2.0);
        let grad = probe.gradient(&feats, &labels, weight).unwrap();
        let analytic: Vec<f64> = grad.weights.iter().chain(&grad.biases).copied().collect();
        for (i, a) in analytic.iter().enumerate() {
            let mut plus = probe.clone();
            *plus.parameter_mut(i) += h;
            let mut minus = probe.clone();
            *minus.parameter_mut(i) -= h;
            let numeric =
                (plus.loss(&feats, &labels, weight).unwrap() - minus.loss(&feats, &labels, weight).unwrap()) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    ensure(worst <= 1e-5, || format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.2e}"))
}

fn novel_consistent(bank: &MemoryBank) -> bool {
    let m = bank.novel_prototype();
    let d = bank.novel_disparity();
    (0..bank.dim()).all(|i| {
        (bank.novel_aux_plus()[i] - (m[i] + d[i])).abs() <= 1e-12
            && (bank.novel_aux_minus()[i] - (m[i] - d[i])).abs() <= 1e-12
    })
}

fn bank_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (classes, dim) = (4, 6);
    let mut bank = MemoryBank::init(classes, dim, 6, 0.2).unwrap();
    let mut counts = [0usize; 4];
    for step in 0..100 {
        let op = rng.random_range(0..4);
        counts[op] += 1;
        bank = match op {
            0 => {
                let c = rng.random_range(1..=classes);
                let m = rng.random_range(0..=6);
                let feats: Vec<FeatureVector> = (0..m).map(|_| normal(&mut rng, dim, 2.0)).collect();
                bank.update_base_class(c, &feats, rng.random()).map_err(|e| e.to_string())?
            }
            1 => bank.refresh_novel_from_base().map_err(|e| e.to_string())?,
            2 => {
                let m = rng.random_range(1..=5);
                let features: Vec<FeatureVector> = (0..m).map(|_| normal(&mut rng, dim, 2.0)).collect();
                let selection = NovelSelection {
                    indices: (0..m).collect(),
                    features,
                };
                update_novel_memory(&bank, &selection).map_err(|e| e.to_string())?
            }
            _ => {
                let m = rng.random_range(0..=8);
                let kept: Vec<FeatureVector> = (0..m).map(|_| normal(&mut rng, dim, 2.0)).collect();
                let labels: Vec<usize> = (0..m).map(|_| rng.random_range(1..=classes + 1)).collect();
                update_prototypes_from_target(&bank, &kept, &labels).map_err(|e| e.to_string())?
            }
        };
        ensure(novel_consistent(&bank), || format!("step {step}: novel aux drifted"))?;
        let loaded = MemoryBank::load_snapshot(&bank.snapshot()).map_err(|e| e.to_string())?;
        ensure(loaded == bank, || format!("step {step}: snapshot round trip differs"))?;
        ensure(loaded.snapshot() == bank.snapshot(), || format!("step {step}: snapshot bytes differ"))?;
    }
    Ok(format!(
        "100 operations (base {}, refresh {}, novel {}, target {})",
        counts[0], counts[1], counts[2], counts[3]
    ))
}

fn end_to_end() -> Outcome {
    let config = ExperimentConfig::default();
    let first = run_experiment(&config).map_err(|e| e.to_string())?;
    let second = run_experiment(&config).map_err(|e| e.to_string())?;
    let accuracy = first.final_assignment_accuracy().ok_or("no final accuracy")?;
    let baseline = first.baseline_accuracy.ok_or("no baseline")?;
    let precision = first.selection.precision.ok_or("no selection precision")?;
    let chance = first.selection.chance_rate().ok_or("no chance rate")?;
    let recall = first
        .final_row
        .as_ref()
        .and_then(|r| r.metrics.novel_recall)
        .ok_or("no novel recall")?;
    let summary = format!(
        "accuracy {accuracy:.4} vs baseline {baseline:.4}, selection precision {precision:.3} vs chance {chance:.3}, novel recall {recall:.3}"
    );
    let mut failed = Vec::new();
    if accuracy <= baseline {
        failed.push("(a) accuracy does not exceed baseline");
    }
    if precision < 2.0 * chance {
        failed.push("(b) selection precision below twice chance");
    }
    if recall <= 0.0 {
        failed.push("(c) novel recall is zero");
    }
    if first.to_csv() != second.to_csv() {
        failed.push("(d) metrics differ between runs");
    }
    if (accuracy - GOLDEN_ACCURACY).abs() > GOLDEN_TOLERANCE {
        failed.push("accuracy moved away from the recorded value");
    }
    if failed.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}; {summary}", failed.join(", ")))
    }
}

fn metric_fixture() -> Outcome {
    let truths = [1, 2, 1, 4, 4, 0];
    let preds = [1, 2, 1, 2, 3, 3];
    let wi = wilderness_impact(&preds, &truths, 2).map_err(|e| e.to_string())?;
    let count = aose(&preds, &truths, 2).map_err(|e| e.to_string())?;
    ensure((wi - 1.0 / 0.75 + 1.0).abs() <= 1e-9, || format!("WI {wi}"))?;
    ensure((wi - 0.333_333_3).abs() <= 1e-7, || format!("WI {wi}"))?;
    ensure(count == 1, || format!("AOSE {count}"))?;
    Ok(format!("WI {wi:.7}, AOSE {count}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Outcome); 8] = [
        ("ProtoBall unit fidelity", Duration::from_secs(1), protoball),
        ("momentum blend invariants", Duration::from_secs(1), blend),
        ("clustering oracle", Duration::from_secs(10), clustering_oracle),
        ("selection and assignment oracles", Duration::from_secs(5), selection_and_assignment),
        ("probe gradient check", Duration::from_secs(10), gradient_check),
        ("bank consistency", Duration::from_secs(5), bank_consistency),
        ("end-to-end synthetic benchmark", Duration::from_secs(60), end_to_end),
        ("metric fixture", Duration::from_secs(1), metric_fixture),
    ];
    let mut failures = 0;
    for (n, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > *limit => Err(format!("{detail}; took {elapsed:.2?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail} [{elapsed:.2?}]", n + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {}: FAIL  {name}: {detail} [{elapsed:.2?}]", n + 1);
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
