//! Tiled SpMM and SDDMM over a translated graph, the GCN and AGNN forward
//! layers built on them, and the two-level workload decomposition.
//!
//! Work is organized per row window (one "thread block" on the hardware)
//! and, inside a window, per contiguous range of embedding columns (one
//! "warp"). Every task owns a disjoint output rectangle and accumulates in
//! a fixed order, so results are bitwise identical for any worker count.

use std::ops::{Add, AddAssign};

use rayon::prelude::*;

use crate::dense::{EdgeValList, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::sgt::{PrecisionMode, TiledGraph};
use crate::tile::{
    gather_rows_into, gather_rows_transposed_into, init_window_tiles, load_rows_into,
    mma_accumulate, store_sparse_slice, store_tile_into_slab, Layout, Tile, TF32_K, TF32_M,
};

/// Instrumentation counters reported by every kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counters {
    /// Sparse tiles initialized (each traversed once per window).
    pub tiles_visited: u64,
    pub mma_calls: u64,
    /// Bytes of embedding data copied into operand tiles.
    pub bytes_gathered: u64,
}

impl Add for Counters {
    type Output = Counters;

    fn add(self, o: Counters) -> Counters {
        Counters {
            tiles_visited: self.tiles_visited + o.tiles_visited,
            mma_calls: self.mma_calls + o.mma_calls,
            bytes_gathered: self.bytes_gathered + o.bytes_gathered,
        }
    }
}

impl AddAssign for Counters {
    fn add_assign(&mut self, o: Counters) {
        *self = *self + o;
    }
}

/// A kernel result together with its instrumentation counters.
#[derive(Debug, Clone, PartialEq)]
pub struct Profiled<T> {
    pub value: T,
    pub counters: Counters,
}

/// One unit of work: embedding columns `dim_start..dim_start + dim_count`
/// of row window `window`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Task {
    pub window: usize,
    pub dim_start: usize,
    pub dim_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskPlan {
    pub tasks: Vec<Task>,
    /// Sub-workers per window; the embedding dimension is split this many
    /// ways.
    pub warps_per_block: usize,
}

impl TaskPlan {
    /// Checks that the tasks cover every (window, column) cell of a
    /// `num_windows x dim` grid exactly once.
    pub fn validate(&self, num_windows: usize, dim: usize) -> Result<()> {
        let mut per_window: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_windows];
        for t in &self.tasks {
            if t.window >= num_windows {
                return Err(Error::Plan(format!(
                    "task window {} >= {num_windows}",
                    t.window
                )));
            }
            if t.dim_count == 0 || t.dim_start + t.dim_count > dim {
                return Err(Error::Plan(format!(
                    "task range {}..{} outside 1..={dim} columns",
                    t.dim_start,
                    t.dim_start + t.dim_count
                )));
            }
            per_window[t.window].push((t.dim_start, t.dim_start + t.dim_count));
        }
        for (w, ranges) in per_window.iter_mut().enumerate() {
            ranges.sort_unstable();
            let mut next = 0;
            for &(s, e) in ranges.iter() {
                if s < next {
                    return Err(Error::Plan(format!("overlapping tasks in window {w} at column {s}")));
                }
                if s > next {
                    return Err(Error::Plan(format!("window {w}: columns {next}..{s} uncovered")));
                }
                next = e;
            }
            if next != dim {
                return Err(Error::Plan(format!("window {w}: columns {next}..{dim} uncovered")));
            }
        }
        Ok(())
    }

    /// Column ranges per window, ascending.
    fn ranges_by_window(&self, num_windows: usize) -> Vec<Vec<(usize, usize)>> {
        let mut per_window = vec![Vec::new(); num_windows];
        for t in &self.tasks {
            per_window[t.window].push((t.dim_start, t.dim_count));
        }
        for r in &mut per_window {
            r.sort_unstable();
        }
        per_window
    }
}

/// Warps per window from the average number of edges per row window:
/// `max(1, floor(avg / 32))`.
pub fn warps_per_block_for(avg_edges_per_window: f64) -> usize {
    ((avg_edges_per_window / 32.0).floor() as usize).max(1)
}

/// Splits `dim` columns into at most `parts` contiguous ranges. Ranges are
/// whole multiples of `chunk` (except the last) whenever there are at least
/// `parts` chunks; otherwise the columns are split as evenly as possible.
fn split_dims(dim: usize, parts: usize, chunk: usize) -> Vec<(usize, usize)> {
    let parts = parts.clamp(1, dim.max(1));
    let tiles = dim.div_ceil(chunk);
    let (unit, units) = if tiles >= parts { (chunk, tiles) } else { (1, dim) };
    let base = units / parts;
    let extra = units % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let n = base + usize::from(p < extra);
        let end = ((start / unit + n) * unit).min(dim);
        if end > start {
            out.push((start, end - start));
        }
        start = end;
    }
    out
}

/// Builds the task plan for an embedding of width `dim`. The warp count
/// comes from the average edges per row window unless `requested_workers`
/// overrides it.
pub fn make_plan(t: &TiledGraph, dim: usize, requested_workers: Option<usize>) -> TaskPlan {
    let windows = t.num_row_windows();
    let avg = if windows == 0 {
        0.0
    } else {
        t.graph().num_edges() as f64 / windows as f64
    };
    let warps = requested_workers.unwrap_or_else(|| warps_per_block_for(avg)).max(1);
    let ranges = split_dims(dim, warps, t.config().blk_h);
    let tasks = (0..windows)
        .flat_map(|w| {
            ranges.iter().map(move |&(dim_start, dim_count)| Task {
                window: w,
                dim_start,
                dim_count,
            })
        })
        .collect();
    TaskPlan {
        tasks,
        warps_per_block: warps,
    }
}

/// Runs `f` on a dedicated pool of `workers` threads. Kernels called inside
/// use that pool.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn check_mode(t: &TiledGraph, mode: PrecisionMode) -> Result<()> {
    let cfg = t.config();
    if mode == PrecisionMode::Tf32Emulated && (cfg.blk_h != TF32_M || cfg.blk_w != TF32_K) {
        return Err(Error::Tf32Shape {
            m: cfg.blk_h,
            k: cfg.blk_w,
            k2: cfg.blk_w,
            n: cfg.blk_h,
        });
    }
    Ok(())
}

fn check_embedding(t: &TiledGraph, x: &EmbeddingMatrix) -> Result<()> {
    if x.num_rows() != t.graph().num_nodes() {
        return Err(Error::ShapeMismatch(format!(
            "embedding has {} rows, graph has {} nodes",
            x.num_rows(),
            t.graph().num_nodes()
        )));
    }
    if x.num_cols() == 0 {
        return Err(Error::ShapeMismatch("embedding dimension must be at least 1".into()));
    }
    Ok(())
}

fn spmm_window(
    t: &TiledGraph,
    x: &EmbeddingMatrix,
    weights: Option<&[f32]>,
    mode: PrecisionMode,
    window: usize,
    slab: &mut [f32],
    ranges: &[(usize, usize)],
) -> Counters {
    let cfg = t.config();
    let d = x.num_cols();
    let dense_w = cfg.blk_h;
    let cols = t.col_to_node(window);
    let sparse = init_window_tiles(t, window, weights);
    let mut c = Counters {
        tiles_visited: sparse.len() as u64,
        ..Counters::default()
    };
    debug_assert!(ranges.windows(2).all(|p| p[0].0 + p[0].1 <= p[1].0));

    let mut b = Tile::zeros(cfg.blk_w, dense_w, Layout::ColMajor);
    let mut acc = Tile::zeros(cfg.blk_h, dense_w, Layout::RowMajor);
    for &(start, count) in ranges {
        let end = start + count;
        let mut d0 = start;
        while d0 < end {
            let cw = dense_w.min(end - d0);
            acc.fill_zero();
            for (blk, a) in sparse.iter().enumerate() {
                let lo = blk * cfg.blk_w;
                let nodes = &cols[lo..(lo + cfg.blk_w).min(cols.len())];
                c.bytes_gathered += gather_rows_into(&mut b, x, nodes, d0, cw);
                mma_accumulate(a, &b, &mut acc, mode).expect("tile shapes fixed by config");
                c.mma_calls += 1;
            }
            store_tile_into_slab(slab, d, &acc, d0, cw);
            d0 += cw;
        }
    }
    c
}

/// Neighbor aggregation `X' = (F ⊙ A) X` on the translated graph.
///
/// Each row window walks its condensed tiles in ascending order and
/// accumulates `A_tile * X_tile` per embedding chunk; with `ExactF32` the
/// output is bitwise equal to a CSR-order f32 reference. `f` overrides the
/// graph's edge weights; without it the graph's own values (or 1.0) are
/// used.
pub fn spmm(
    t: &TiledGraph,
    x: &EmbeddingMatrix,
    f: Option<&EdgeValList>,
    mode: PrecisionMode,
    plan: Option<&TaskPlan>,
) -> Result<Profiled<EmbeddingMatrix>> {
    check_mode(t, mode)?;
    check_embedding(t, x)?;
    if let Some(f) = f {
        if f.len() != t.graph().num_edges() {
            return Err(Error::ShapeMismatch(format!(
                "{} edge values for {} edges",
                f.len(),
                t.graph().num_edges()
            )));
        }
    }
    let d = x.num_cols();
    let windows = t.num_row_windows();
    let default_plan;
    let plan = match plan {
        Some(p) => p,
        None => {
            default_plan = make_plan(t, d, None);
            &default_plan
        }
    };
    plan.validate(windows, d)?;
    let ranges = plan.ranges_by_window(windows);
    let weights = f.map(|f| f.as_slice());

    let mut out = EmbeddingMatrix::zeros(t.graph().num_nodes(), d);
    let counters = out
        .data_mut()
        .par_chunks_mut(t.config().blk_h * d)
        .zip(ranges.par_iter())
        .enumerate()
        .map(|(w, (slab, r))| spmm_window(t, x, weights, mode, w, slab, r))
        .reduce(Counters::default, Add::add);
    Ok(Profiled {
        value: out,
        counters,
    })
}

fn sddmm_window(
    t: &TiledGraph,
    x: &EmbeddingMatrix,
    mode: PrecisionMode,
    window: usize,
    vals: &mut [f32],
    edge_base: usize,
) -> Counters {
    let cfg = t.config();
    let d = x.num_cols();
    let cols = t.col_to_node(window);
    let blocks = t.square_blocks(window);
    let mut c = Counters {
        tiles_visited: blocks as u64,
        ..Counters::default()
    };
    if blocks == 0 {
        return c;
    }

    // Window rows of X, one row-major tile per chunk of blk_w columns.
    let rows = t.window_rows(window);
    let chunks: Vec<(usize, usize)> = (0..d)
        .step_by(cfg.blk_w)
        .map(|d0| (d0, cfg.blk_w.min(d - d0)))
        .collect();
    let a_tiles: Vec<Tile> = chunks
        .iter()
        .map(|&(d0, cw)| {
            let mut a = Tile::zeros(cfg.blk_h, cfg.blk_w, Layout::RowMajor);
            c.bytes_gathered += load_rows_into(&mut a, x, rows.clone(), d0, cw);
            a
        })
        .collect();

    let mut b = Tile::zeros(cfg.blk_w, cfg.blk_h, Layout::ColMajor);
    let mut acc = Tile::zeros(cfg.blk_h, cfg.blk_h, Layout::RowMajor);
    for blk in 0..blocks {
        let lo = blk * cfg.blk_h;
        // Padded tail blocks (from rounding up) gather nothing.
        let nodes = &cols[lo.min(cols.len())..(lo + cfg.blk_h).min(cols.len())];
        acc.fill_zero();
        for (a, &(d0, cw)) in a_tiles.iter().zip(&chunks) {
            c.bytes_gathered += gather_rows_transposed_into(&mut b, x, nodes, d0, cw);
            mma_accumulate(a, &b, &mut acc, mode).expect("tile shapes fixed by config");
            c.mma_calls += 1;
        }
        store_sparse_slice(vals, edge_base, &acc, t, window, blk);
    }
    c
}

/// Edge features `F = (X Xᵀ) ⊙ A`: one dot product per edge.
///
/// Reuses the SpMM translation at square `blk_h x blk_h` output
/// granularity (`ceil(win_partition * blk_w / blk_h)` tiles per window) and
/// accumulates over the embedding dimension in chunks of `blk_w`.
pub fn sddmm(
    t: &TiledGraph,
    x: &EmbeddingMatrix,
    mode: PrecisionMode,
) -> Result<Profiled<EdgeValList>> {
    check_mode(t, mode)?;
    check_embedding(t, x)?;
    let windows = t.num_row_windows();
    let mut values = vec![0.0f32; t.graph().num_edges()];

    let mut slices = Vec::with_capacity(windows);
    let mut rest: &mut [f32] = &mut values;
    let mut base = 0;
    for w in 0..windows {
        let len = t.window_edges(w).len();
        let (head, tail) = rest.split_at_mut(len);
        slices.push((w, base, head));
        base += len;
        rest = tail;
    }
    let counters = slices
        .into_par_iter()
        .map(|(w, base, vals)| sddmm_window(t, x, mode, w, vals, base))
        .reduce(Counters::default, Add::add);
    Ok(Profiled {
        value: EdgeValList::new(values),
        counters,
    })
}

/// GCN forward layer: aggregate with SpMM, then `H W + b` in plain f32.
pub fn gcn_layer(
    t: &TiledGraph,
    x: &EmbeddingMatrix,
    weight: &EmbeddingMatrix,
    bias: &[f32],
    mode: PrecisionMode,
) -> Result<Profiled<EmbeddingMatrix>> {
    if weight.num_rows() != x.num_cols() || bias.len() != weight.num_cols() {
        return Err(Error::ShapeMismatch(format!(
            "input width {}, weight {}x{}, bias {}",
            x.num_cols(),
            weight.num_rows(),
            weight.num_cols(),
            bias.len()
        )));
    }
    let agg = spmm(t, x, None, mode, None)?;
    let mut out = agg.value.matmul(weight)?;
    let cols = out.num_cols();
    if cols > 0 {
        for row in out.data_mut().chunks_exact_mut(cols) {
            for (v, b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        }
    }
    Ok(Profiled {
        value: out,
        counters: agg.counters,
    })
}

/// Numerically stable softmax of edge scores within each row.
pub fn edge_softmax(t: &TiledGraph, scores: &EdgeValList) -> Result<EdgeValList> {
    let g = t.graph();
    if scores.len() != g.num_edges() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores for {} edges",
            scores.len(),
            g.num_edges()
        )));
    }
    let mut out = vec![0.0f32; scores.len()];
    for r in 0..g.num_nodes() {
        let range = g.row_range(r);
        let s = &scores.values[range.clone()];
        let Some(max) = s.iter().copied().map(f64::from).reduce(f64::max) else {
            continue;
        };
        let exps: Vec<f64> = s.iter().map(|&v| (f64::from(v) - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for (o, e) in out[range].iter_mut().zip(exps) {
            *o = (e / sum) as f32;
        }
    }
    Ok(EdgeValList::new(out))
}

/// AGNN attention weights: SDDMM edge scores normalized per row.
pub fn agnn_attention(
    t: &TiledGraph,
    x: &EmbeddingMatrix,
    mode: PrecisionMode,
) -> Result<Profiled<EdgeValList>> {
    let scores = sddmm(t, x, mode)?;
    Ok(Profiled {
        value: edge_softmax(t, &scores.value)?,
        counters: scores.counters,
    })
}

/// AGNN forward layer: `spmm(t, x, softmax_row(sddmm(t, x)))`. Nodes
/// without edges produce zero rows.
pub fn agnn_layer(
    t: &TiledGraph,
    x: &EmbeddingMatrix,
    mode: PrecisionMode,
) -> Result<Profiled<EmbeddingMatrix>> {
    let att = agnn_attention(t, x, mode)?;
    let agg = spmm(t, x, Some(&att.value), mode, None)?;
    Ok(Profiled {
        value: agg.value,
        counters: att.counters + agg.counters,
    })
}
