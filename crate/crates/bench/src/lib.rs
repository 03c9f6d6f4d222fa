//! Inputs shared by the engine benchmarks.

use dynclust::WeightedPoint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` unit-weight points around `blobs` centers in `[0, 100]^dim`, ids
/// starting at `first_id`.
pub fn blob_points(
    n: usize,
    dim: usize,
    blobs: usize,
    first_id: u64,
    seed: u64,
) -> Vec<WeightedPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..blobs.max(1))
        .map(|_| (0..dim).map(|_| rng.random::<f64>() * 100.0).collect())
        .collect();
    (0..n)
        .map(|i| {
            let c = &centers[rng.random_range(0..centers.len())];
            let coords: Vec<f64> = c
                .iter()
                .map(|x| x + rng.random::<f64>() * 4.0 - 2.0)
                .collect();
            WeightedPoint::unit(first_id + i as u64, coords)
        })
        .collect()
}
