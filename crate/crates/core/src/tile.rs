//! Fixed-shape tiles, the emulated MMA primitive `D = A * B + C`, and the
//! load/store primitives that move data between tiles and the graph.
//!
//! Operand `A` tiles are row-major, operand `B` tiles column-major, so each
//! output element is a dot product of two contiguous slices. Accumulation is
//! always in f32 with ascending `k`, which keeps results bitwise
//! reproducible.

use crate::dense::{EdgeValList, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::sgt::{block_column_range, PrecisionMode, TiledGraph};

/// TF-32 MMA shape: `M x K * K x N` with `M = N = 16`, `K = 8`.
pub const TF32_M: usize = 16;
pub const TF32_N: usize = 16;
pub const TF32_K: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layout {
    RowMajor,
    ColMajor,
}

/// Dense `rows x cols` f32 buffer with a declared storage layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    rows: usize,
    cols: usize,
    layout: Layout,
    data: Vec<f32>,
}

impl Tile {
    pub fn zeros(rows: usize, cols: usize, layout: Layout) -> Self {
        Self {
            rows,
            cols,
            layout,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a tile from logical rows, stored in `layout`.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R], layout: Layout) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.as_ref().len());
        let mut t = Self::zeros(r, c, layout);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != c {
                return Err(Error::ShapeMismatch(format!("ragged tile row {i}")));
            }
            for (j, &v) in row.iter().enumerate() {
                t.set(i, j, v);
            }
        }
        Ok(t)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    fn index(&self, r: usize, c: usize) -> usize {
        match self.layout {
            Layout::RowMajor => r * self.cols + c,
            Layout::ColMajor => c * self.rows + r,
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[self.index(r, c)]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        let i = self.index(r, c);
        self.data[i] = v;
    }

    pub fn to_rows(&self) -> Vec<Vec<f32>> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c)).collect())
            .collect()
    }

    /// Same logical content stored in `layout`.
    pub fn to_layout(&self, layout: Layout) -> Self {
        if layout == self.layout {
            return self.clone();
        }
        let mut t = Self::zeros(self.rows, self.cols, layout);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(r, c, self.get(r, c));
            }
        }
        t
    }

    pub(crate) fn fill_zero(&mut self) {
        self.data.fill(0.0);
    }
}

/// Rounds `x` to the nearest TF-32 value (10 explicit mantissa bits,
/// round-to-nearest-even). Sign and exponent width are unchanged; NaN and
/// infinities pass through.
#[inline]
pub fn quantize_tf32(x: f32) -> f32 {
    if !x.is_finite() {
        return x;
    }
    let bits = x.to_bits();
    let lsb = (bits >> 13) & 1;
    let rounded = bits.wrapping_add(0x0FFF + lsb) & !0x1FFF;
    f32::from_bits(rounded)
}

fn check_mma_shapes(a: &Tile, b: &Tile, acc: &Tile, mode: PrecisionMode) -> Result<()> {
    if a.layout != Layout::RowMajor || b.layout != Layout::ColMajor {
        return Err(Error::ShapeMismatch(
            "operand A must be row-major and operand B column-major".into(),
        ));
    }
    if a.cols != b.rows || acc.rows != a.rows || acc.cols != b.cols {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} * {}x{} + {}x{}",
            a.rows, a.cols, b.rows, b.cols, acc.rows, acc.cols
        )));
    }
    if mode == PrecisionMode::Tf32Emulated
        && (a.rows != TF32_M || a.cols != TF32_K || b.cols != TF32_N)
    {
        return Err(Error::Tf32Shape {
            m: a.rows,
            k: a.cols,
            k2: b.rows,
            n: b.cols,
        });
    }
    Ok(())
}

/// In-place `acc += A * B`. `acc` must be row-major.
pub fn mma_accumulate(a: &Tile, b: &Tile, acc: &mut Tile, mode: PrecisionMode) -> Result<()> {
    check_mma_shapes(a, b, acc, mode)?;
    if acc.layout != Layout::RowMajor {
        return Err(Error::ShapeMismatch("accumulator must be row-major".into()));
    }
    let (m, n, k) = (a.rows, b.cols, a.cols);
    match mode {
        PrecisionMode::ExactF32 => mma_kernel(m, n, k, &a.data, &b.data, &mut acc.data, |v| v),
        PrecisionMode::Tf32Emulated => {
            mma_kernel(m, n, k, &a.data, &b.data, &mut acc.data, quantize_tf32)
        }
    }
    Ok(())
}

#[inline(always)]
fn mma_kernel(
    m: usize,
    n: usize,
    k: usize,
    a: &[f32],
    b: &[f32],
    acc: &mut [f32],
    q: impl Fn(f32) -> f32,
) {
    if k == 0 {
        return;
    }
    for (i, a_row) in a.chunks_exact(k).enumerate().take(m) {
        let out = &mut acc[i * n..(i + 1) * n];
        for (o, b_col) in out.iter_mut().zip(b.chunks_exact(k)) {
            let mut s = *o;
            for (&x, &y) in a_row.iter().zip(b_col) {
                s += q(x) * q(y);
            }
            *o = s;
        }
    }
}

/// `D = A * B + C`; the result is row-major.
pub fn mma(a: &Tile, b: &Tile, c: &Tile, mode: PrecisionMode) -> Result<Tile> {
    check_mma_shapes(a, b, c, mode)?;
    let mut d = c.to_layout(Layout::RowMajor);
    mma_accumulate(a, b, &mut d, mode)?;
    Ok(d)
}

fn check_window(t: &TiledGraph, window: usize) -> Result<()> {
    if window >= t.num_row_windows() {
        return Err(Error::out_of_range("window", window, t.num_row_windows()));
    }
    Ok(())
}

/// Sparse `A` tiles (`blk_h x blk_w`, row-major) for every block of
/// `window`, built in one pass over the window's edges. `weights` overrides
/// the graph's own edge values.
pub(crate) fn init_window_tiles(
    t: &TiledGraph,
    window: usize,
    weights: Option<&[f32]>,
) -> Vec<Tile> {
    let cfg = t.config();
    let g = t.graph();
    let mut tiles: Vec<Tile> = (0..t.win_partition()[window])
        .map(|_| Tile::zeros(cfg.blk_h, cfg.blk_w, Layout::RowMajor))
        .collect();
    let rows = t.window_rows(window);
    for r in rows.clone() {
        for e in g.row_range(r) {
            let c = t.edge_to_col()[e] as usize;
            let v = weights.map_or_else(|| g.edge_value(e), |w| w[e]);
            tiles[c / cfg.blk_w].set(r - rows.start, c % cfg.blk_w, v);
        }
    }
    tiles
}

/// Dense `blk_h x blk_w` row-major tile of the sparse adjacency for block
/// `block` of `window`, in condensed column coordinates. Entries hold the
/// edge weight (1.0 for unweighted graphs).
pub fn init_sparse(t: &TiledGraph, window: usize, block: usize) -> Result<Tile> {
    check_window(t, window)?;
    let blocks = t.win_partition()[window] as usize;
    if block >= blocks {
        return Err(Error::out_of_range("block", block, blocks));
    }
    let cfg = t.config();
    let g = t.graph();
    let base = block * cfg.blk_w;
    let mut tile = Tile::zeros(cfg.blk_h, cfg.blk_w, Layout::RowMajor);
    let rows = t.window_rows(window);
    for r in rows.clone() {
        for e in g.row_range(r) {
            let c = t.edge_to_col()[e] as usize;
            if (base..base + cfg.blk_w).contains(&c) {
                tile.set(r - rows.start, c - base, g.edge_value(e));
            }
        }
    }
    Ok(tile)
}

/// Gathers embedding rows `nodes` into a column-major `slots x width` tile:
/// logical row `k` holds `x[nodes[k]][dim_start..dim_start + width]`.
/// Slots past `nodes.len()` and dims past `dim_count` stay zero.
pub(crate) fn gather_rows_into(
    tile: &mut Tile,
    x: &EmbeddingMatrix,
    nodes: &[u32],
    dim_start: usize,
    dim_count: usize,
) -> u64 {
    debug_assert_eq!(tile.layout, Layout::ColMajor);
    debug_assert!(nodes.len() <= tile.rows && dim_count <= tile.cols);
    tile.fill_zero();
    let slots = tile.rows;
    for (k, &node) in nodes.iter().enumerate() {
        let src = &x.row(node as usize)[dim_start..dim_start + dim_count];
        for (n, &v) in src.iter().enumerate() {
            tile.data[n * slots + k] = v;
        }
    }
    (nodes.len() * dim_count * 4) as u64
}

/// Gathers embedding rows as the transposed operand: a column-major
/// `width x slots` tile whose column `n` is `x[nodes[n]][dim_start..]`.
pub(crate) fn gather_rows_transposed_into(
    tile: &mut Tile,
    x: &EmbeddingMatrix,
    nodes: &[u32],
    dim_start: usize,
    dim_count: usize,
) -> u64 {
    debug_assert_eq!(tile.layout, Layout::ColMajor);
    tile.fill_zero();
    let k = tile.rows;
    for (n, &node) in nodes.iter().enumerate() {
        let src = &x.row(node as usize)[dim_start..dim_start + dim_count];
        tile.data[n * k..n * k + dim_count].copy_from_slice(src);
    }
    (nodes.len() * dim_count * 4) as u64
}

/// Loads window rows `rows` of `x` into a row-major `height x width` tile;
/// rows past `N` and dims past `dim_count` stay zero.
pub(crate) fn load_rows_into(
    tile: &mut Tile,
    x: &EmbeddingMatrix,
    rows: std::ops::Range<usize>,
    dim_start: usize,
    dim_count: usize,
) -> u64 {
    debug_assert_eq!(tile.layout, Layout::RowMajor);
    tile.fill_zero();
    let w = tile.cols;
    for (m, r) in rows.clone().enumerate() {
        tile.data[m * w..m * w + dim_count]
            .copy_from_slice(&x.row(r)[dim_start..dim_start + dim_count]);
    }
    (rows.len() * dim_count * 4) as u64
}

/// Dense operand `B` for block `block` of `window`: a `blk_w x dim_count`
/// column-major tile whose row `k` is the embedding of the node behind
/// condensed column `block * blk_w + k`. Missing columns of a short final
/// block are zero rows.
pub fn fetch_dense(
    t: &TiledGraph,
    x: &EmbeddingMatrix,
    window: usize,
    block: usize,
    dim_start: usize,
    dim_count: usize,
) -> Result<Tile> {
    if x.num_rows() != t.graph().num_nodes() {
        return Err(Error::ShapeMismatch(format!(
            "embedding has {} rows, graph has {} nodes",
            x.num_rows(),
            t.graph().num_nodes()
        )));
    }
    if dim_start + dim_count > x.num_cols() {
        return Err(Error::out_of_range(
            "dimension",
            dim_start + dim_count,
            x.num_cols(),
        ));
    }
    let blk_w = t.config().blk_w;
    let nodes = block_column_range(t, window, block, blk_w)?;
    let mut tile = Tile::zeros(blk_w, dim_count, Layout::ColMajor);
    gather_rows_into(&mut tile, x, nodes, dim_start, dim_count);
    Ok(tile)
}

/// Copies the first `width` columns of `tile` into a row slab of a
/// `D`-column matrix, starting at column `dim_start`. Tile rows past the
/// slab are dropped.
pub(crate) fn store_tile_into_slab(
    slab: &mut [f32],
    d: usize,
    tile: &Tile,
    dim_start: usize,
    width: usize,
) {
    let slab_rows = slab.len() / d;
    for r in 0..tile.rows.min(slab_rows) {
        let dst = &mut slab[r * d + dim_start..r * d + dim_start + width];
        for (c, o) in dst.iter_mut().enumerate() {
            *o = tile.get(r, c);
        }
    }
}

/// Writes `tile` into rows `window * tile.rows()..` and columns
/// `dim_start..` of `out`. Rows past the end of `out` are discarded.
pub fn store_dense(
    out: &mut EmbeddingMatrix,
    tile: &Tile,
    window: usize,
    dim_start: usize,
) -> Result<()> {
    let d = out.num_cols();
    if dim_start + tile.cols > d {
        return Err(Error::out_of_range("dimension", dim_start + tile.cols, d));
    }
    let start = window * tile.rows;
    let n = out.num_rows();
    if start >= n && tile.rows > 0 {
        return Err(Error::out_of_range("window", window, n.div_ceil(tile.rows)));
    }
    let end = (start + tile.rows).min(n);
    store_tile_into_slab(
        &mut out.data_mut()[start * d..end * d],
        d,
        tile,
        dim_start,
        tile.cols,
    );
    Ok(())
}

/// Scatters the edge entries of an SDDMM output tile into `vals`, a slice
/// of the edge-value list starting at edge index `edge_base`.
pub(crate) fn store_sparse_slice(
    vals: &mut [f32],
    edge_base: usize,
    tile: &Tile,
    t: &TiledGraph,
    window: usize,
    block: usize,
) {
    let g = t.graph();
    let rows = t.window_rows(window);
    let base = block * tile.cols;
    for r in rows.clone() {
        for e in g.row_range(r) {
            let c = t.edge_to_col()[e] as usize;
            if (base..base + tile.cols).contains(&c) {
                vals[e - edge_base] = tile.get(r - rows.start, c - base);
            }
        }
    }
}

/// Dense-to-sparse output step: for every edge of `window` whose condensed
/// column lies in block `block` (of width `tile.cols()`), copies the tile
/// entry at (row offset, column offset) into `edge_vals`. Non-edge entries
/// are discarded.
pub fn store_sparse(
    edge_vals: &mut EdgeValList,
    tile: &Tile,
    t: &TiledGraph,
    window: usize,
    block: usize,
) -> Result<()> {
    check_window(t, window)?;
    if edge_vals.len() != t.graph().num_edges() {
        return Err(Error::ShapeMismatch(format!(
            "{} edge values for {} edges",
            edge_vals.len(),
            t.graph().num_edges()
        )));
    }
    if tile.rows != t.config().blk_h {
        return Err(Error::ShapeMismatch(format!(
            "tile has {} rows, window height is {}",
            tile.rows,
            t.config().blk_h
        )));
    }
    store_sparse_slice(&mut edge_vals.values, 0, tile, t, window, block);
    Ok(())
}
