//! Seeded synthetic graph generators.

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::error::{Error, Result};
use crate::graph::CsrGraph;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn edge_count(n: usize, avg_degree: f64) -> Result<usize> {
    if n == 0 {
        return Err(Error::InvalidParameter("node count must be at least 1".into()));
    }
    if n >= u32::MAX as usize {
        return Err(Error::InvalidParameter(format!("{n} nodes exceed 32-bit ids")));
    }
    if !(avg_degree.is_finite() && avg_degree >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "average degree must be a non-negative number, got {avg_degree}"
        )));
    }
    Ok((n as f64 * avg_degree).round() as usize)
}

/// `round(n * avg_degree)` edges; edge `i` leaves node `i mod n` and points
/// at a uniformly random node. Duplicates are collapsed.
pub fn uniform(n: usize, avg_degree: f64, seed: u64) -> Result<CsrGraph> {
    let m = edge_count(n, avg_degree)?;
    let mut rng = rng(seed);
    let edges: Vec<(u32, u32)> = (0..m)
        .map(|i| ((i % n) as u32, rng.random_range(0..n as u32)))
        .collect();
    CsrGraph::from_edges(n, &edges, None)
}

/// Like [`uniform`] but destinations follow a Zipf law with the given
/// exponent over a random relabeling of the nodes, giving a skewed
/// in-degree distribution with scattered hubs.
pub fn powerlaw(n: usize, avg_degree: f64, exponent: f64, seed: u64) -> Result<CsrGraph> {
    let m = edge_count(n, avg_degree)?;
    let zipf = Zipf::new(n as f64, exponent)
        .map_err(|e| Error::InvalidParameter(format!("zipf exponent {exponent}: {e}")))?;
    let mut rng = rng(seed);
    let mut relabel: Vec<u32> = (0..n as u32).collect();
    relabel.shuffle(&mut rng);
    let edges: Vec<(u32, u32)> = (0..m)
        .map(|i| {
            let rank = (zipf.sample(&mut rng) as usize).clamp(1, n) - 1;
            ((i % n) as u32, relabel[rank])
        })
        .collect();
    CsrGraph::from_edges(n, &edges, None)
}

/// `windows * blk` nodes. Every row window of height `blk` gets
/// `blocks_per_window` fully dense `blk x blk` blocks at distinct, randomly
/// chosen block-aligned column positions.
pub fn blockdense(
    windows: usize,
    blocks_per_window: usize,
    blk: usize,
    seed: u64,
) -> Result<CsrGraph> {
    if windows == 0 || blk == 0 {
        return Err(Error::InvalidParameter(
            "window count and block size must be positive".into(),
        ));
    }
    if blocks_per_window > windows {
        return Err(Error::InvalidParameter(format!(
            "{blocks_per_window} blocks per window exceed {windows} column slots"
        )));
    }
    let n = windows
        .checked_mul(blk)
        .filter(|&n| n < u32::MAX as usize)
        .ok_or_else(|| Error::InvalidParameter("graph too large".into()))?;
    let mut rng = rng(seed);
    let mut edges = Vec::with_capacity(n * blocks_per_window * blk);
    for w in 0..windows {
        let mut slots = index::sample(&mut rng, windows, blocks_per_window).into_vec();
        slots.sort_unstable();
        for r in w * blk..(w + 1) * blk {
            for &s in &slots {
                edges.extend((s * blk..(s + 1) * blk).map(|c| (r as u32, c as u32)));
            }
        }
    }
    CsrGraph::from_edges(n, &edges, None)
}

/// `1 - nnz / N^2`.
pub fn sparsity(g: &CsrGraph) -> f64 {
    let n = g.num_nodes() as f64;
    if n == 0.0 {
        return 1.0;
    }
    1.0 - g.num_edges() as f64 / (n * n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_seeded() {
        let a = uniform(4096, 8.0, 7).unwrap();
        let b = uniform(4096, 8.0, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, uniform(4096, 8.0, 8).unwrap());
        assert!(a.num_edges() <= 4096 * 8 && a.num_edges() > 4096 * 7);
        assert_eq!(uniform(10, 0.0, 1).unwrap().num_edges(), 0);
    }

    #[test]
    fn parameter_checks() {
        assert!(uniform(0, 1.0, 0).is_err());
        assert!(uniform(10, -1.0, 0).is_err());
        assert!(powerlaw(10, 1.0, -1.0, 0).is_err());
        assert!(blockdense(4, 5, 16, 0).is_err());
        assert!(blockdense(0, 0, 16, 0).is_err());
    }

    #[test]
    fn powerlaw_is_skewed() {
        let g = powerlaw(2000, 8.0, 1.0, 3).unwrap();
        let mut indeg = vec![0usize; 2000];
        for &c in g.edge_list() {
            indeg[c as usize] += 1;
        }
        let max = *indeg.iter().max().unwrap();
        let avg = g.num_edges() as f64 / 2000.0;
        assert!(max as f64 > 20.0 * avg, "max {max} avg {avg}");
        assert_eq!(g, powerlaw(2000, 8.0, 1.0, 3).unwrap());
    }

    #[test]
    fn blockdense_counts() {
        let g = blockdense(256, 4, 16, 1).unwrap();
        assert_eq!(g.num_nodes(), 4096);
        assert_eq!(g.num_edges(), 256 * 4 * 16 * 16);
        let expected = 1.0 - 4.0 * 16.0 * 16.0 / (16.0 * 4096.0);
        assert!((sparsity(&g) - expected).abs() < 1e-12);
    }
}
