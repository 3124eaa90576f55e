//! Sparse graph translation: per-row-window column condensation.
//!
//! The adjacency matrix is cut into row windows of `blk_h` rows. Inside a
//! window the distinct neighbor ids are sorted and renumbered `0..u`, so all
//! nonzeros of the window fall into `ceil(u / blk_w)` dense `blk_h x blk_w`
//! tiles instead of being scattered over up to `N / blk_w` column tiles.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::CsrGraph;

/// Numeric mode of the MMA primitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PrecisionMode {
    /// Plain f32 multiply-accumulate, any tile shape.
    #[default]
    ExactF32,
    /// Operands rounded to TF-32 (10 mantissa bits), f32 accumulation,
    /// fixed 16x8 * 8x16 shape.
    Tf32Emulated,
}

impl PrecisionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PrecisionMode::ExactF32 => "f32",
            PrecisionMode::Tf32Emulated => "tf32",
        }
    }
}

impl std::str::FromStr for PrecisionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" | "exact" | "exact_f32" => Ok(Self::ExactF32),
            "tf32" | "tf32_emulated" => Ok(Self::Tf32Emulated),
            other => Err(Error::InvalidParameter(format!("unknown precision {other:?}"))),
        }
    }
}

/// Tile geometry used by translation and the kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockConfig {
    /// Tile height; also the row-window height.
    pub blk_h: usize,
    /// Tile width of the sparse operand.
    pub blk_w: usize,
    pub precision: PrecisionMode,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self {
            blk_h: 16,
            blk_w: 8,
            precision: PrecisionMode::ExactF32,
        }
    }
}

impl BlockConfig {
    pub fn new(blk_h: usize, blk_w: usize) -> Result<Self> {
        Self::with_precision(blk_h, blk_w, PrecisionMode::ExactF32)
    }

    pub fn with_precision(blk_h: usize, blk_w: usize, precision: PrecisionMode) -> Result<Self> {
        if blk_h == 0 || blk_w == 0 {
            return Err(Error::InvalidParameter(format!(
                "tile shape must be positive, got {blk_h}x{blk_w}"
            )));
        }
        if blk_h > u32::MAX as usize || blk_w > u32::MAX as usize {
            return Err(Error::InvalidParameter("tile shape exceeds u32".into()));
        }
        Ok(Self {
            blk_h,
            blk_w,
            precision,
        })
    }

    /// The 16x16 output granularity used by SDDMM with the same window height.
    pub fn square(&self) -> Self {
        Self {
            blk_w: self.blk_h,
            ..*self
        }
    }
}

/// Output of [`translate`]: the source graph plus its condensed tiling.
#[derive(Debug, Clone, PartialEq)]
pub struct TiledGraph {
    graph: Arc<CsrGraph>,
    config: BlockConfig,
    win_partition: Vec<u32>,
    edge_to_col: Vec<u32>,
    /// `col_offsets[w]..col_offsets[w + 1]` indexes `col_to_node` for window `w`.
    col_offsets: Vec<usize>,
    col_to_node: Vec<u32>,
}

impl TiledGraph {
    /// Reassembles a tiling from its parts and checks it against `graph`.
    pub fn from_parts(
        graph: Arc<CsrGraph>,
        config: BlockConfig,
        win_partition: Vec<u32>,
        edge_to_col: Vec<u32>,
        col_offsets: Vec<usize>,
        col_to_node: Vec<u32>,
    ) -> Result<Self> {
        let t = Self {
            graph,
            config,
            win_partition,
            edge_to_col,
            col_offsets,
            col_to_node,
        };
        t.check()?;
        Ok(t)
    }

    pub fn graph(&self) -> &CsrGraph {
        &self.graph
    }

    pub fn graph_arc(&self) -> &Arc<CsrGraph> {
        &self.graph
    }

    pub fn config(&self) -> BlockConfig {
        self.config
    }

    pub fn num_row_windows(&self) -> usize {
        self.win_partition.len()
    }

    pub fn win_partition(&self) -> &[u32] {
        &self.win_partition
    }

    pub fn edge_to_col(&self) -> &[u32] {
        &self.edge_to_col
    }

    pub fn col_offsets(&self) -> &[usize] {
        &self.col_offsets
    }

    pub fn col_to_node_all(&self) -> &[u32] {
        &self.col_to_node
    }

    /// Sorted unique neighbor ids of window `w`, indexed by condensed column.
    pub fn col_to_node(&self, w: usize) -> &[u32] {
        &self.col_to_node[self.col_offsets[w]..self.col_offsets[w + 1]]
    }

    /// Rows `start..end` covered by window `w`, clipped to `N`.
    pub fn window_rows(&self, w: usize) -> std::ops::Range<usize> {
        let n = self.graph.num_nodes();
        let start = (w * self.config.blk_h).min(n);
        start..((w + 1) * self.config.blk_h).min(n)
    }

    /// Edge index range of window `w`.
    pub fn window_edges(&self, w: usize) -> std::ops::Range<usize> {
        let rows = self.window_rows(w);
        let np = self.graph.node_pointer();
        np[rows.start]..np[rows.end]
    }

    /// Number of `blk_h x blk_h` output tiles per window when the same
    /// translation is reused at square granularity.
    pub fn square_blocks(&self, w: usize) -> usize {
        (self.win_partition[w] as usize * self.config.blk_w).div_ceil(self.config.blk_h)
    }

    /// Checks every structural invariant of the tiling.
    pub fn check(&self) -> Result<()> {
        let g = &*self.graph;
        let cfg = self.config;
        let windows = g.num_nodes().div_ceil(cfg.blk_h);
        let bad = |m: String| Err(Error::Format(m));
        if self.win_partition.len() != windows {
            return bad(format!(
                "{} window counts for {windows} windows",
                self.win_partition.len()
            ));
        }
        if self.edge_to_col.len() != g.num_edges() {
            return bad("edge_to_col length differs from edge_list".into());
        }
        if self.col_offsets.len() != windows + 1
            || self.col_offsets[0] != 0
            || *self.col_offsets.last().unwrap() != self.col_to_node.len()
            || self.col_offsets.windows(2).any(|w| w[1] < w[0])
        {
            return bad("malformed per-window column offsets".into());
        }
        for w in 0..windows {
            let cols = self.col_to_node(w);
            if cols.windows(2).any(|p| p[0] >= p[1]) {
                return bad(format!("window {w}: columns not strictly ascending"));
            }
            if self.win_partition[w] as usize != cols.len().div_ceil(cfg.blk_w) {
                return bad(format!("window {w}: block count mismatch"));
            }
            let mut seen = vec![false; cols.len()];
            for e in self.window_edges(w) {
                let c = self.edge_to_col[e] as usize;
                if c >= cols.len() || cols[c] != g.edge_list()[e] {
                    return bad(format!("edge {e}: condensed column does not map back"));
                }
                seen[c] = true;
            }
            if !seen.iter().all(|&s| s) {
                return bad(format!("window {w}: unused condensed column"));
            }
        }
        Ok(())
    }
}

/// Condensation of one row window.
fn translate_window(g: &CsrGraph, rows: std::ops::Range<usize>, blk_w: usize) -> (u32, Vec<u32>, Vec<u32>) {
    let np = g.node_pointer();
    let edges = &g.edge_list()[np[rows.start]..np[rows.end]];
    let mut unique = edges.to_vec();
    unique.sort_unstable();
    unique.dedup();
    let edge_to_col = edges
        .iter()
        .map(|c| unique.binary_search(c).expect("neighbor present") as u32)
        .collect();
    (unique.len().div_ceil(blk_w) as u32, edge_to_col, unique)
}

/// Runs sparse graph translation over every row window. Windows are
/// independent and processed in parallel; the result does not depend on
/// scheduling.
pub fn translate(graph: impl Into<Arc<CsrGraph>>, cfg: BlockConfig) -> TiledGraph {
    let graph = graph.into();
    let n = graph.num_nodes();
    let windows = n.div_ceil(cfg.blk_h);
    let per_window: Vec<_> = (0..windows)
        .into_par_iter()
        .map(|w| {
            let rows = (w * cfg.blk_h)..((w + 1) * cfg.blk_h).min(n);
            translate_window(&graph, rows, cfg.blk_w)
        })
        .collect();

    let mut win_partition = Vec::with_capacity(windows);
    let mut edge_to_col = Vec::with_capacity(graph.num_edges());
    let mut col_offsets = Vec::with_capacity(windows + 1);
    let mut col_to_node = Vec::new();
    col_offsets.push(0);
    for (blocks, e2c, unique) in per_window {
        win_partition.push(blocks);
        edge_to_col.extend_from_slice(&e2c);
        col_to_node.extend_from_slice(&unique);
        col_offsets.push(col_to_node.len());
    }
    TiledGraph {
        graph,
        config: cfg,
        win_partition,
        edge_to_col,
        col_offsets,
        col_to_node,
    }
}

/// Per-window and total tile counts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BlockCounts {
    pub per_window: Vec<u64>,
    pub total: u64,
}

impl BlockCounts {
    fn from_per_window(per_window: Vec<u64>) -> Self {
        let total = per_window.iter().sum();
        Self { per_window, total }
    }
}

/// Occupied `blk_h x blk_w` tiles of the untranslated adjacency: per window,
/// the number of distinct `col / blk_w` buckets holding a nonzero.
pub fn count_blocks_before(g: &CsrGraph, cfg: BlockConfig) -> BlockCounts {
    let n = g.num_nodes();
    let np = g.node_pointer();
    let per_window = (0..n.div_ceil(cfg.blk_h))
        .into_par_iter()
        .map(|w| {
            let lo = np[w * cfg.blk_h];
            let hi = np[((w + 1) * cfg.blk_h).min(n)];
            let mut buckets: Vec<usize> = g.edge_list()[lo..hi]
                .iter()
                .map(|&c| c as usize / cfg.blk_w)
                .collect();
            buckets.sort_unstable();
            buckets.dedup();
            buckets.len() as u64
        })
        .collect();
    BlockCounts::from_per_window(per_window)
}

/// Tiles traversed after translation: the sum of the window partition.
pub fn count_blocks_after(t: &TiledGraph) -> BlockCounts {
    BlockCounts::from_per_window(t.win_partition.iter().map(|&b| b as u64).collect())
}

/// Tiles traversed at square `blk_h x blk_h` granularity when the SpMM
/// translation is reused (SDDMM output tiles).
pub fn count_square_blocks_after(t: &TiledGraph) -> BlockCounts {
    BlockCounts::from_per_window(
        (0..t.num_row_windows())
            .map(|w| t.square_blocks(w) as u64)
            .collect(),
    )
}

/// `1 - after / before`, with 0/0 reported as 0.
pub fn reduction_ratio(before: u64, after: u64) -> f64 {
    if before == 0 {
        0.0
    } else {
        1.0 - after as f64 / before as f64
    }
}

/// Original node ids of the condensed columns in tile `block` of window
/// `window`. The last tile of a window may be shorter than `blk_w`.
pub fn block_columns(t: &TiledGraph, window: usize, block: usize) -> Result<&[u32]> {
    block_column_range(t, window, block, t.config.blk_w)
}

pub(crate) fn block_column_range(
    t: &TiledGraph,
    window: usize,
    block: usize,
    width: usize,
) -> Result<&[u32]> {
    if window >= t.num_row_windows() {
        return Err(Error::out_of_range("window", window, t.num_row_windows()));
    }
    let cols = t.col_to_node(window);
    let blocks = cols.len().div_ceil(width);
    if block >= blocks {
        return Err(Error::out_of_range("block", block, blocks));
    }
    let start = block * width;
    Ok(&cols[start..(start + width).min(cols.len())])
}
