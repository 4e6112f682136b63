//! Clusters three well-separated blobs and prints the centroids.

use openset_bank::clustering::{kmeans_with, KMeansParams};
use openset_bank::FeatureVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 0.3)?;
    let centers = [[0.0, 0.0], [6.0, 0.0], [3.0, 5.0]];
    let mut points = Vec::new();
    for c in &centers {
        for _ in 0..20 {
            points.push(FeatureVector::new(vec![
                c[0] + noise.sample(&mut rng),
                c[1] + noise.sample(&mut rng),
            ])?);
        }
    }
    let result = kmeans_with(&points, 3, 11, &KMeansParams::default())?;
    for (i, c) in result.centroids.iter().enumerate() {
        println!("cluster {i}: {:?}  ({} points)", c.as_slice(), result.members(i).len());
    }
    println!("inertia: {:.4}", result.inertia);
    Ok(())
}
