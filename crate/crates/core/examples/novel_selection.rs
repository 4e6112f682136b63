//! Scores an unmatched source pool against the bank and picks the top-k
//! novel candidates, using a bank built from the true class means.

use openset_bank::experiment::ExperimentConfig;
use openset_bank::memory_bank::BankParts;
use openset_bank::selection::{build_scm, select_topk, update_novel_memory};
use openset_bank::simulator::{make_spec, sample_batch, Domain};
use openset_bank::{FeatureVector, MemoryBank};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ExperimentConfig::default();
    let spec = make_spec(&config.spec, config.seed)?;
    let c = spec.num_base_classes;
    let means: Vec<FeatureVector> = (0..c).map(|k| spec.mean(k, Domain::Source)).collect();
    let ones = FeatureVector::new(vec![1.0; spec.dim])?;
    let bank = MemoryBank::from_parts(BankParts {
        momentum: config.beta,
        base_prototypes: means.clone(),
        base_aux_plus: means.clone(),
        base_aux_minus: means.iter().map(|m| m.add(&ones)).collect::<Result<_, _>>()?,
        base_disparity: vec![ones.clone(); c],
        novel_prototype: means[0].clone(),
        novel_disparity: ones,
    })?;

    let batch = sample_batch(&spec, Domain::Source, 40, 40, 5)?;
    let (_, unmatched) = batch.split_matched(c);
    let pool: Vec<FeatureVector> = unmatched.iter().map(|&i| batch.features()[i].clone()).collect();
    let scm = build_scm(&pool, &bank, config.gamma)?;
    let picked = select_topk(&scm, &pool, 10)?;
    let novel = picked
        .indices
        .iter()
        .filter(|&&i| spec.is_novel_label(batch.origins()[unmatched[i]]))
        .count();
    println!("pool size {}, selected {}, truly novel {novel}", pool.len(), picked.len());
    for &i in &picked.indices {
        println!("  query {i:>3}  score {:+.4}  origin {}", scm.best_scores[i], batch.origins()[unmatched[i]]);
    }
    let next = update_novel_memory(&bank, &picked)?;
    println!("novel prototype norm {:.3} -> {:.3}", bank.novel_prototype().norm(), next.novel_prototype().norm());
    Ok(())
}
