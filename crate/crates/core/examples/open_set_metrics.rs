//! Confusion-based open-set metrics on a handful of predictions.

use openset_bank::eval::{confusion, selection_metrics};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Two base classes; truths 3 and above are unknown.
    let truths = [1, 1, 2, 2, 3, 4, 4, 5];
    let preds = [1, 3, 2, 1, 3, 3, 2, 3];
    let m = confusion(&preds, &truths, 2)?;
    println!("counts: {:?}", m.counts);
    println!("base accuracy:     {:?}", m.base_accuracy());
    println!("novel recall:      {:?}", m.novel_recall());
    println!("wilderness impact: {:?}", m.wilderness_impact().ok());
    println!("open-set errors:   {}", m.aose());
    println!("precision per class: {:?}", m.per_class_precision());
    println!("recall per class:    {:?}", m.per_class_recall());

    let origins = [1, 4, 5, 0, 2, 4];
    let sel = selection_metrics(&[1, 2, 3], &origins, 2)?;
    println!(
        "selection: precision {:?} recall {:?} chance {:?}",
        sel.precision,
        sel.recall,
        sel.chance_rate()
    );
    Ok(())
}
