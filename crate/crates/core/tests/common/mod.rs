#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tcg_core::{synth, CsrGraph, EdgeValList, EmbeddingMatrix};

pub fn four_node() -> CsrGraph {
    CsrGraph::new(4, vec![0, 2, 3, 4, 4], vec![0, 3, 3, 1], None).unwrap()
}

pub fn x4() -> EmbeddingMatrix {
    EmbeddingMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [2.0, 2.0], [5.0, 5.0]]).unwrap()
}

pub const DIMS: [usize; 5] = [1, 2, 16, 64, 256];

/// One seeded random workload.
pub struct Case {
    pub name: String,
    pub graph: CsrGraph,
    pub x: EmbeddingMatrix,
    pub weights: Option<EdgeValList>,
}

/// `N` log-uniform in [16, 10 000], average degree uniform in [1, 32],
/// `D` cycling through [`DIMS`]. Odd cases use a skewed degree
/// distribution; every third case carries explicit edge weights.
pub fn random_case(i: usize, seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let n = (16f64.ln() + rng.random::<f64>() * (10_000f64.ln() - 16f64.ln())).exp() as usize;
    let deg = rng.random_range(1.0..=32.0);
    let d = DIMS[i % DIMS.len()];
    let gseed = rng.random();
    let graph = if i.is_multiple_of(2) {
        synth::uniform(n, deg, gseed).unwrap()
    } else {
        synth::powerlaw(n, deg, 1.0, gseed).unwrap()
    };
    let x = EmbeddingMatrix::random(n, d, &mut rng);
    let weights = i.is_multiple_of(3).then(|| {
        EdgeValList::new((0..graph.num_edges()).map(|_| rng.random_range(-1.0..1.0)).collect())
    });
    Case {
        name: format!("case{i}(N={n},M={},D={d})", graph.num_edges()),
        graph,
        x,
        weights,
    }
}

/// Structural corner cases plus a handful of random graphs.
pub fn structural_suite() -> Vec<(String, CsrGraph)> {
    let mut v = vec![
        ("four_node".to_string(), four_node()),
        ("empty".to_string(), CsrGraph::empty(37)),
        ("single".to_string(), CsrGraph::from_edges(1, &[(0, 0)], None).unwrap()),
        (
            "star".to_string(),
            CsrGraph::from_edges(100, &(1..100).map(|i| (0, i)).collect::<Vec<_>>(), None).unwrap(),
        ),
        ("blockdense".to_string(), synth::blockdense(8, 3, 16, 5).unwrap()),
        ("uniform_odd_n".to_string(), synth::uniform(1001, 5.0, 11).unwrap()),
        ("powerlaw".to_string(), synth::powerlaw(3000, 12.0, 1.0, 12).unwrap()),
    ];
    for i in 0..8 {
        let c = random_case(i, 0x00AC_CE55);
        v.push((c.name, c.graph));
    }
    v
}
