#![allow(clippy::needless_range_loop)]

mod common;

use proptest::prelude::*;
use tcg_core::kernels::{self, make_plan, with_workers};
use tcg_core::oracle::{compare, ref_sddmm, ref_spmm, ref_spmm_f64, Tolerance};
use tcg_core::tile::{fetch_dense, init_sparse, store_dense};
use tcg_core::{quantize_tf32, sgt, BlockConfig, CsrGraph, EdgeValList, EmbeddingMatrix, PrecisionMode};

const EXACT: PrecisionMode = PrecisionMode::ExactF32;
const TF32: PrecisionMode = PrecisionMode::Tf32Emulated;

fn graph_and_x() -> impl Strategy<Value = (CsrGraph, EmbeddingMatrix, Vec<f32>)> {
    (1usize..120, 1usize..40).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec((0..n as u32, 0..n as u32), 0..500),
            prop::collection::vec(-4.0f32..4.0, n * d),
            prop::collection::vec(-2.0f32..2.0, 500),
        )
            .prop_map(move |(e, x, w)| {
                let g = CsrGraph::from_edges(n, &e, None).unwrap();
                let m = g.num_edges();
                (g, EmbeddingMatrix::new(n, d, x).unwrap(), w[..m].to_vec())
            })
    })
}

fn config() -> impl Strategy<Value = BlockConfig> {
    prop_oneof![
        Just(BlockConfig::default()),
        Just(BlockConfig::new(16, 16).unwrap()),
        (1usize..20, 1usize..12).prop_map(|(h, w)| BlockConfig::new(h, w).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_kernels_match_oracle_bitwise(
        (g, x, w) in graph_and_x(), cfg in config(), warps in 1usize..5, weighted: bool
    ) {
        let t = sgt::translate(g.clone(), cfg);
        let f = weighted.then(|| EdgeValList::new(w));
        let plan = make_plan(&t, x.num_cols(), Some(warps));
        let got = kernels::spmm(&t, &x, f.as_ref(), EXACT, Some(&plan)).unwrap().value;
        let want = ref_spmm(&g, &x, f.as_ref()).unwrap();
        prop_assert!(got.bitwise_eq(&want), "{}", compare(&got, &want, Tolerance::EXACT).unwrap());

        let got = kernels::sddmm(&t, &x, EXACT).unwrap().value;
        let want = ref_sddmm(&g, &x).unwrap();
        prop_assert!(got.bitwise_eq(&want), "{}", compare(&got, &want, Tolerance::EXACT).unwrap());
    }

    #[test]
    fn tf32_equals_oracle_on_quantized_operands((g, x, w) in graph_and_x()) {
        let t = sgt::translate(g.clone(), BlockConfig::default());
        let f = EdgeValList::new(w);
        let got = kernels::spmm(&t, &x, Some(&f), TF32, None).unwrap().value;
        let fq = EdgeValList::new(f.values.iter().map(|&v| quantize_tf32(v)).collect());
        let want = ref_spmm(&g, &x.map(quantize_tf32), Some(&fq)).unwrap();
        prop_assert!(got.bitwise_eq(&want));

        let got = kernels::sddmm(&t, &x, TF32).unwrap().value;
        let want = ref_sddmm(&g, &x.map(quantize_tf32)).unwrap();
        prop_assert!(got.bitwise_eq(&want));
    }

    #[test]
    fn tf32_error_is_bounded((g, x, _w) in graph_and_x()) {
        // Per element: |tf32 - exact| <= 10 * K * 2^-10 * sum |terms|, with
        // K the number of quantized products accumulated.
        let t = sgt::translate(g.clone(), BlockConfig::default());
        let got = kernels::spmm(&t, &x, None, TF32, None).unwrap().value;
        let exact = ref_spmm_f64(&g, &x, None).unwrap();
        let magnitude = ref_spmm_f64(&g, &x.map(f32::abs), None).unwrap();
        let d = x.num_cols();
        for i in 0..got.data().len() {
            let k = g.row_range(i / d).len().max(1) as f64;
            let bound = 10.0 * k * 2f64.powi(-10) * magnitude.data()[i] as f64;
            let err = (got.data()[i] as f64 - exact.data()[i] as f64).abs();
            prop_assert!(err <= bound, "element {i}: err {err} bound {bound}");
        }
    }

    #[test]
    fn translation_never_changes_results((g, x, _w) in graph_and_x(), cfg in config()) {
        let direct = ref_spmm(&g, &x, None).unwrap();
        let tiled = kernels::spmm(&sgt::translate(g, cfg), &x, None, EXACT, None).unwrap().value;
        prop_assert!(tiled.bitwise_eq(&direct));
    }

    #[test]
    fn instrumentation_counts_condensed_blocks((g, x, _w) in graph_and_x(), cfg in config()) {
        let t = sgt::translate(g, cfg);
        let d = x.num_cols();
        let blocks: u64 = t.win_partition().iter().map(|&b| b as u64).sum();
        let out = kernels::spmm(&t, &x, None, EXACT, None).unwrap();
        prop_assert_eq!(out.counters.tiles_visited, blocks);
        let plan = make_plan(&t, d, None);
        let chunks_per_window: u64 = plan
            .tasks
            .iter()
            .filter(|task| task.window == 0)
            .map(|task| task.dim_count.div_ceil(cfg.blk_h) as u64)
            .sum();
        prop_assert_eq!(out.counters.mma_calls, blocks * chunks_per_window);

        let square: u64 = (0..t.num_row_windows()).map(|w| t.square_blocks(w) as u64).sum();
        let s = kernels::sddmm(&t, &x, EXACT).unwrap();
        prop_assert_eq!(s.counters.tiles_visited, square);
        prop_assert_eq!(s.counters.mma_calls, square * d.div_ceil(cfg.blk_w) as u64);
    }

    #[test]
    fn outputs_independent_of_workers_and_plan((g, x, w) in graph_and_x(), warps in 1usize..6) {
        let t = sgt::translate(g, BlockConfig::new(4, 3).unwrap());
        let f = EdgeValList::new(w);
        let base = kernels::spmm(&t, &x, Some(&f), EXACT, None).unwrap().value;
        let plan = make_plan(&t, x.num_cols(), Some(warps));
        for workers in [1, 3] {
            let other = with_workers(workers, || {
                kernels::spmm(&t, &x, Some(&f), EXACT, Some(&plan)).unwrap().value
            }).unwrap();
            prop_assert!(other.bitwise_eq(&base));
        }
    }

    #[test]
    fn sparse_tiles_reconstruct_adjacency_rows((g, _x, w) in graph_and_x(), cfg in config()) {
        let g = g.with_edge_values(Some(w)).unwrap();
        let t = sgt::translate(g.clone(), cfg);
        for win in 0..t.num_row_windows() {
            let rows = t.window_rows(win);
            let mut dense = vec![vec![0.0f32; g.num_nodes()]; rows.len()];
            for b in 0..t.win_partition()[win] as usize {
                let tile = init_sparse(&t, win, b).unwrap();
                let cols = sgt::block_columns(&t, win, b).unwrap();
                for r in 0..cfg.blk_h {
                    for (k, &node) in cols.iter().enumerate() {
                        let v = tile.get(r, k);
                        if r < rows.len() {
                            dense[r][node as usize] = v;
                        } else {
                            prop_assert_eq!(v, 0.0);
                        }
                    }
                    for k in cols.len()..cfg.blk_w {
                        prop_assert_eq!(tile.get(r, k), 0.0);
                    }
                }
            }
            for (ri, r) in rows.clone().enumerate() {
                let mut want = vec![0.0f32; g.num_nodes()];
                for e in g.row_range(r) {
                    want[g.edge_list()[e] as usize] = g.edge_values().unwrap()[e];
                }
                prop_assert_eq!(&dense[ri], &want);
            }
        }
    }

    #[test]
    fn fetch_then_store_is_identity_on_identity_adjacency(
        n in 1usize..60, d in 1usize..20, h in 1usize..9, seed in any::<u64>()
    ) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = EmbeddingMatrix::random(n, d, &mut rng);
        let edges: Vec<(u32, u32)> = (0..n as u32).map(|i| (i, i)).collect();
        let g = CsrGraph::from_edges(n, &edges, None).unwrap();
        // blk_w = blk_h so each window is exactly one block of its own rows.
        let t = sgt::translate(g, BlockConfig::new(h, h).unwrap());
        let mut out = EmbeddingMatrix::zeros(n, d);
        for w in 0..t.num_row_windows() {
            for dim_start in (0..d).step_by(3) {
                let cnt = 3.min(d - dim_start);
                let tile = fetch_dense(&t, &x, w, 0, dim_start, cnt).unwrap();
                store_dense(&mut out, &tile, w, dim_start).unwrap();
            }
        }
        prop_assert!(out.bitwise_eq(&x));
    }
}

#[test]
fn agnn_rows_sum_to_one() {
    for (name, g) in common::structural_suite() {
        let t = sgt::translate(g.clone(), BlockConfig::default());
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let x = EmbeddingMatrix::random(g.num_nodes(), 8, &mut rng);
        let att = kernels::agnn_attention(&t, &x, EXACT).unwrap().value;
        for r in 0..g.num_nodes() {
            let range = g.row_range(r);
            if range.is_empty() {
                continue;
            }
            let s: f64 = att.values[range].iter().map(|&v| v as f64).sum();
            assert!((s - 1.0).abs() <= 1e-6, "{name} row {r}: {s}");
        }
    }
}

#[test]
fn zero_degree_rows_are_zero() {
    let g = CsrGraph::from_edges(40, &[(0, 5), (3, 39), (39, 0)], None).unwrap();
    let t = sgt::translate(g, BlockConfig::default());
    let x = EmbeddingMatrix::from_rows(&vec![[1.0f32, 2.0]; 40]).unwrap();
    let out = kernels::agnn_layer(&t, &x, EXACT).unwrap().value;
    for r in 0..40 {
        let expect_zero = !matches!(r, 0 | 3 | 39);
        assert_eq!(out.row(r).iter().all(|&v| v == 0.0), expect_zero, "row {r}");
    }
}
