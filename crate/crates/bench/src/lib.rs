//! Seeded workloads shared by the benchmarks.

use eapcr_core::features::EncodedRow;
use eapcr_core::{ArchConfig, EapcrParams, ModelConfig, PermutationSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A freshly initialised model over `n_features` columns of 6 levels each.
pub struct Workload {
    pub params: EapcrParams,
    pub spec: PermutationSpec,
    pub rows: Vec<EncodedRow>,
    pub targets: Vec<f64>,
}

impl Workload {
    pub fn new(n_features: usize, embed_dim: usize, batch: usize) -> Self {
        let cards = vec![6; n_features];
        let arch = ArchConfig {
            embed_dim,
            ..ArchConfig::default()
        };
        let config = ModelConfig::new(arch, cards).expect("valid config");
        let params = EapcrParams::init(&config, 0).expect("init");
        let spec = PermutationSpec::new(n_features).expect("n ≥ 2");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows = (0..batch)
            .map(|_| EncodedRow {
                indices: (0..n_features).map(|_| rng.gen_range(0..6)).collect(),
            })
            .collect();
        let targets = (0..batch).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self {
            params,
            spec,
            rows,
            targets,
        }
    }
}

/// Uniform(-1, 1) tensor of the given shape.
pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape matches")
}
