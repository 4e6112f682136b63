//! One labelled-source update of a single base class.

use openset_bank::report::describe_bank;
use openset_bank::{FeatureVector, MemoryBank};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bank = MemoryBank::init(3, 4, 7, 0.5)?;
    let proto = bank.base_prototypes()[0].clone();
    let matched: Vec<FeatureVector> = (0..6)
        .map(|i| proto.lincomb(1.0, &FeatureVector::new(vec![0.1 * i as f64, -0.05, 0.02, 0.0])?, 1.0))
        .collect::<Result<_, _>>()?;

    let next = bank.update_base_class(1, &matched, 99)?.refresh_novel_from_base()?;
    println!("before:\n{}", describe_bank(&bank));
    println!("after:\n{}", describe_bank(&next));
    println!("class 1 prototype moved from {:?}", bank.base_prototypes()[0].as_slice());
    println!("                          to {:?}", next.base_prototypes()[0].as_slice());
    Ok(())
}
