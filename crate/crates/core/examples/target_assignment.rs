//! Pseudo-labels a target batch against a bank built from the source class
//! means and pulls the prototypes toward the assigned features.

use openset_bank::assignment::{build_tcm, filter_foreground, update_prototypes_from_target};
use openset_bank::eval::collapse_label;
use openset_bank::memory_bank::BankParts;
use openset_bank::simulator::{make_spec, sample_batch, Domain, SpecParams};
use openset_bank::{FeatureVector, MemoryBank};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = make_spec(&SpecParams::default(), 42)?;
    let c = spec.num_base_classes;
    let means: Vec<FeatureVector> = (0..c).map(|k| spec.mean(k, Domain::Source)).collect();
    let unit = FeatureVector::new((0..spec.dim).map(|i| if i == 0 { 1.5 } else { 0.0 }).collect())?;
    let bank = MemoryBank::from_parts(BankParts {
        momentum: 0.1,
        base_prototypes: means.clone(),
        base_aux_plus: means.iter().map(|m| m.add(&unit)).collect::<Result<_, _>>()?,
        base_aux_minus: means.iter().map(|m| m.sub(&unit)).collect::<Result<_, _>>()?,
        base_disparity: vec![unit.clone(); c],
        novel_prototype: spec.mean(c, Domain::Source),
        novel_disparity: unit.clone(),
    })?;

    let batch = sample_batch(&spec, Domain::Target, 60, 20, 8)?;
    let (kept, idx) = filter_foreground(batch.features(), batch.fg_scores(), 0.5)?;
    let tcm = build_tcm(&kept, &bank)?;
    let correct = tcm
        .assigned_labels
        .iter()
        .zip(&idx)
        .filter(|(&l, &i)| l == collapse_label(batch.true_labels()[i], c))
        .count();
    println!("kept {} of {} entries", kept.len(), batch.len());
    println!("assignment accuracy {:.3}", correct as f64 / kept.len() as f64);
    let next = update_prototypes_from_target(&bank, &kept, &tcm.assigned_labels)?;
    for k in 0..c {
        let before = (bank.base_prototypes()[k].sub(&spec.mean(k, Domain::Target))?).norm();
        let after = (next.base_prototypes()[k].sub(&spec.mean(k, Domain::Target))?).norm();
        println!("class {}: distance to target mean {before:.3} -> {after:.3}", k + 1);
    }
    Ok(())
}
