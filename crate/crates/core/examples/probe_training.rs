//! Trains the linear probe on labelled source features.

use openset_bank::probe::ProbeClassifier;
use openset_bank::simulator::{make_spec, sample_batch, Domain, SpecParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = make_spec(&SpecParams::default(), 1)?;
    let c = spec.num_base_classes;
    let mut probe = ProbeClassifier::zeros(c, spec.dim, 0.05)?;
    let test = sample_batch(&spec, Domain::Source, 200, 0, 1000)?;
    for step in 0..=50 {
        let batch = sample_batch(&spec, Domain::Source, 40, 0, step)?;
        let labels: Vec<usize> = batch.true_labels().iter().map(|l| l - 1).collect();
        if step % 10 == 0 {
            let hits = test
                .features()
                .iter()
                .zip(test.true_labels())
                .filter(|(v, &l)| probe.predict(v).is_ok_and(|p| p + 1 == l))
                .count();
            println!(
                "step {step:>2}  loss {:.4}  held-out accuracy {:.3}",
                probe.loss(batch.features(), &labels, 1.0)?,
                hits as f64 / test.len() as f64
            );
        }
        probe = probe.sgd_step(batch.features(), &labels, 1.0)?;
    }
    Ok(())
}
