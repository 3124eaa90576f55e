//! Shared workloads for the kernel benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tcg_core::{synth, translate, BlockConfig, CsrGraph, EmbeddingMatrix, TiledGraph};

/// A uniform random graph, its default tiling and seeded embeddings.
pub struct Workload {
    pub graph: CsrGraph,
    pub tiled: TiledGraph,
    pub x: EmbeddingMatrix,
}

pub fn uniform(n: usize, avg_degree: f64, dim: usize) -> Workload {
    let graph = synth::uniform(n, avg_degree, 1).expect("valid parameters");
    let tiled = translate(graph.clone(), BlockConfig::default());
    let x = EmbeddingMatrix::random(n, dim, &mut ChaCha8Rng::seed_from_u64(2));
    Workload { graph, tiled, x }
}
