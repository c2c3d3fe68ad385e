//! Synthetic fixtures shared by the benchmarks.

use bingear_core::graph::build_normalized_adjacency;
use bingear_core::propagation::{layer_weights, propagate};
use bingear_core::quantize::build_binarized_tables;
use bingear_core::trainer::init_base;
use bingear_core::{BinarizedModel, Dataset, LayerEmbeddings, NormalizedAdjacency};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random bipartite graph with `per_user` distinct items per user and a few
/// held-out items each.
pub fn random_dataset(users: usize, items: usize, per_user: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(users);
    let mut test = Vec::with_capacity(users);
    for _ in 0..users {
        let mut picked: Vec<u32> = (0..per_user + 2).map(|_| rng.random_range(0..items as u32)).collect();
        picked.sort_unstable();
        picked.dedup();
        let held = picked.split_off(picked.len().saturating_sub(1).max(1));
        train.push(picked);
        test.push(held);
    }
    Dataset::new(users, items, train, test).expect("generated dataset is valid")
}

pub struct Fixture {
    pub ds: Dataset,
    pub adj: NormalizedAdjacency,
    pub layers: LayerEmbeddings<f32>,
    pub model: BinarizedModel,
}

pub fn fixture(users: usize, items: usize, dim: usize, num_layers: usize) -> Fixture {
    let ds = random_dataset(users, items, 20, 7);
    let adj = build_normalized_adjacency(&ds).expect("adjacency");
    let base = init_base(ds.num_nodes(), dim, 7);
    let layers = propagate(&base, &adj, num_layers).expect("propagate");
    let table = build_binarized_tables(&layers).expect("binarize");
    let model = BinarizedModel { table, weights: layer_weights(num_layers), config_hash: 0, seed: 7 };
    Fixture { ds, adj, layers, model }
}
