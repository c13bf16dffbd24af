//! Fixtures shared by the benchmarks.

use relcorr_core::simulation::{generate_world, make_sample_pairs};
use relcorr_core::{SamplePair, ScenarioConfig};

/// Deterministic simulated pair with the most shared anchors among the
/// first few sampled scenes.
pub fn busy_pair(config: &ScenarioConfig) -> SamplePair {
    use rand::SeedableRng;
    (0..8u64)
        .flat_map(|s| {
            let world = generate_world(&config.world, 100 + s);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s);
            make_sample_pairs(&world, config, &format!("b{s}"), &mut rng)
        })
        .max_by_key(|p| p.shared_anchors())
        .expect("scenes with at least one pair")
}
