//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vaddiff_core::{Coords, FeatureType, FeatureWindow, Label, Split};

/// `n` pose windows of shape `t x k` with uniform coordinates, assigned
/// round-robin to the three splits.
pub fn pose_windows(n: usize, t: usize, k: usize, seed: u64) -> Vec<FeatureWindow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (split, label) = match i % 3 {
                0 => (Split::Train, Label::Normal),
                1 => (Split::ValidationNormal, Label::Normal),
                _ => (Split::ValidationAnomalous, Label::Anomalous),
            };
            let data = (0..t * k * 2).map(|_| rng.random_range(-50.0..50.0)).collect();
            FeatureWindow::new(
                FeatureType::Pose,
                format!("v{}", i % 97),
                (i * 6) as u64,
                vec![(i % 7).to_string()],
                label,
                split,
                Coords::new(t, k, data).unwrap(),
                vec![true; t * k],
            )
            .unwrap()
        })
        .collect()
}
