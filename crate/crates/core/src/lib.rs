//! Category-level memory bank for open-set domain adaptation on feature
//! vectors: a clustering-based prototype bank, novel-candidate selection,
//! target pseudo-labelling, a probe classifier, a synthetic two-domain
//! generator and open-set metrics.

pub mod assignment;
pub mod clustering;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod memory_bank;
pub mod numerics;
pub mod probe;
pub mod report;
pub mod selection;
pub mod simulator;

pub use error::{Error, Result};
pub use memory_bank::MemoryBank;
pub use numerics::FeatureVector;
