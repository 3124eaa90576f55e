//! Little-endian binary files for translated graphs (`TCGT`) and embedding
//! matrices (`TCEM`).
//!
//! `TCGT` layout (version 1):
//!
//! ```text
//! "TCGT" | version u32 | blk_h u32 | blk_w u32 | N u64 | M u64 | W u64
//! win_partition  u32 x W
//! edge_to_col    u32 x M
//! col offsets    u64 x (W + 1)
//! col_to_node    u32 x offsets[W]
//! node_pointer   u64 x (N + 1)
//! has_values     u32 (0 or 1)
//! edge_values    f32 x M          (only if has_values = 1)
//! ```
//!
//! The edge list is not stored: edge `e` in window `w` points at
//! `col_to_node[w][edge_to_col[e]]`.
//!
//! `TCEM` layout: `"TCEM" | version u32 | N u64 | D u64 | N*D f32`, row-major.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::dense::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::graph::CsrGraph;
use crate::sgt::{BlockConfig, TiledGraph};

pub const TCGT_MAGIC: &[u8; 4] = b"TCGT";
pub const TCEM_MAGIC: &[u8; 4] = b"TCEM";
pub const FORMAT_VERSION: u32 = 1;

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated file at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("length exceeds usize".into()))
    }

    fn checked_bytes(&self, count: usize, width: usize) -> Result<usize> {
        count
            .checked_mul(width)
            .filter(|&b| b <= self.buf.len() - self.pos)
            .ok_or_else(|| Error::Format(format!("truncated file at byte {}", self.pos)))
    }

    fn u32s(&mut self, count: usize) -> Result<Vec<u32>> {
        let bytes = self.checked_bytes(count, 4)?;
        Ok(self
            .take(bytes)?
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn u64s(&mut self, count: usize) -> Result<Vec<usize>> {
        let bytes = self.checked_bytes(count, 8)?;
        self.take(bytes)?
            .chunks_exact(8)
            .map(|c| {
                usize::try_from(u64::from_le_bytes(c.try_into().unwrap()))
                    .map_err(|_| Error::Format("offset exceeds usize".into()))
            })
            .collect()
    }

    fn f32s(&mut self, count: usize) -> Result<Vec<f32>> {
        let bytes = self.checked_bytes(count, 4)?;
        Ok(self
            .take(bytes)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.take(4)? != magic {
            return Err(Error::Format(format!(
                "bad magic, expected {:?}",
                String::from_utf8_lossy(magic)
            )));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn put_u32s(out: &mut Vec<u8>, v: impl IntoIterator<Item = u32>) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_u64s(out: &mut Vec<u8>, v: impl IntoIterator<Item = usize>) {
    for x in v {
        out.extend_from_slice(&(x as u64).to_le_bytes());
    }
}

fn put_f32s(out: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// Serializes a translated graph.
pub fn encode_tcgt(t: &TiledGraph) -> Vec<u8> {
    let g = t.graph();
    let cfg = t.config();
    let mut out = Vec::new();
    out.extend_from_slice(TCGT_MAGIC);
    put_u32s(
        &mut out,
        [FORMAT_VERSION, cfg.blk_h as u32, cfg.blk_w as u32],
    );
    put_u64s(&mut out, [g.num_nodes(), g.num_edges(), t.num_row_windows()]);
    put_u32s(&mut out, t.win_partition().iter().copied());
    put_u32s(&mut out, t.edge_to_col().iter().copied());
    put_u64s(&mut out, t.col_offsets().iter().copied());
    put_u32s(&mut out, t.col_to_node_all().iter().copied());
    put_u64s(&mut out, g.node_pointer().iter().copied());
    match g.edge_values() {
        Some(v) => {
            put_u32s(&mut out, [1]);
            put_f32s(&mut out, v);
        }
        None => put_u32s(&mut out, [0]),
    }
    out
}

/// Parses a translated graph and checks every invariant.
pub fn decode_tcgt(bytes: &[u8]) -> Result<TiledGraph> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    c.header(TCGT_MAGIC)?;
    let blk_h = c.u32()? as usize;
    let blk_w = c.u32()? as usize;
    let cfg = BlockConfig::new(blk_h, blk_w).map_err(|e| Error::Format(e.to_string()))?;
    let n = c.len()?;
    let m = c.len()?;
    let windows = c.len()?;
    if windows != n.div_ceil(blk_h) {
        return Err(Error::Format(format!(
            "{windows} windows for {n} nodes at height {blk_h}"
        )));
    }
    let win_partition = c.u32s(windows)?;
    let edge_to_col = c.u32s(m)?;
    let col_offsets = c.u64s(windows + 1)?;
    let total_cols = *col_offsets.last().unwrap();
    let col_to_node = c.u32s(total_cols)?;
    let node_pointer = c.u64s(n + 1)?;
    let edge_values = match c.u32()? {
        0 => None,
        1 => Some(c.f32s(m)?),
        other => return Err(Error::Format(format!("bad edge-value flag {other}"))),
    };
    c.finish()?;

    if col_offsets.windows(2).any(|w| w[1] < w[0]) || col_offsets[0] != 0 {
        return Err(Error::Format("malformed column offsets".into()));
    }
    if node_pointer[0] != 0
        || node_pointer[n] != m
        || node_pointer.windows(2).any(|w| w[1] < w[0])
    {
        return Err(Error::Format("malformed node pointer".into()));
    }
    let mut edge_list = vec![0u32; m];
    for w in 0..windows {
        let cols = &col_to_node[col_offsets[w]..col_offsets[w + 1]];
        let lo = node_pointer[w * blk_h];
        let hi = node_pointer[((w + 1) * blk_h).min(n)];
        for e in lo..hi {
            edge_list[e] = *cols
                .get(edge_to_col[e] as usize)
                .ok_or_else(|| Error::Format(format!("edge {e}: condensed column out of range")))?;
        }
    }
    let graph = CsrGraph::new(n, node_pointer, edge_list, edge_values)
        .map_err(|e| Error::Format(e.to_string()))?;
    TiledGraph::from_parts(
        Arc::new(graph),
        cfg,
        win_partition,
        edge_to_col,
        col_offsets,
        col_to_node,
    )
}

pub fn encode_tcem(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + m.data().len() * 4);
    out.extend_from_slice(TCEM_MAGIC);
    put_u32s(&mut out, [FORMAT_VERSION]);
    put_u64s(&mut out, [m.num_rows(), m.num_cols()]);
    put_f32s(&mut out, m.data());
    out
}

pub fn decode_tcem(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    c.header(TCEM_MAGIC)?;
    let n = c.len()?;
    let d = c.len()?;
    let count = n
        .checked_mul(d)
        .ok_or_else(|| Error::Format("matrix size overflows".into()))?;
    let data = c.f32s(count)?;
    c.finish()?;
    EmbeddingMatrix::new(n, d, data)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

pub fn save_tcgt(t: &TiledGraph, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_tcgt(t))
}

pub fn load_tcgt(path: impl AsRef<Path>) -> Result<TiledGraph> {
    decode_tcgt(&read_file(path.as_ref())?)
}

pub fn save_tcem(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_tcem(m))
}

pub fn load_tcem(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    decode_tcem(&read_file(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sgt::translate;

    fn four_node() -> TiledGraph {
        let g = CsrGraph::new(4, vec![0, 2, 3, 4, 4], vec![0, 3, 3, 1], None).unwrap();
        translate(g, BlockConfig::new(2, 2).unwrap())
    }

    #[test]
    fn tcgt_round_trip() {
        let t = four_node();
        let bytes = encode_tcgt(&t);
        let back = decode_tcgt(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(encode_tcgt(&back), bytes);
    }

    #[test]
    fn tcgt_rejects_corruption() {
        let bytes = encode_tcgt(&four_node());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_tcgt(&bad).is_err());
        assert!(decode_tcgt(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_tcgt(&extra).is_err());
        let mut ver = bytes.clone();
        ver[4] = 2;
        assert!(decode_tcgt(&ver).is_err());
        // Point edge 1 at condensed column 0: breaks the row ordering.
        let mut e2c = bytes;
        let off = 4 + 4 + 4 + 4 + 8 * 3 + 4 * 2 + 4;
        e2c[off] = 0;
        assert!(decode_tcgt(&e2c).is_err());
    }

    #[test]
    fn tcem_round_trip_and_errors() {
        let m = EmbeddingMatrix::from_rows(&[[1.0, -0.0], [f32::MIN_POSITIVE, 3.5]]).unwrap();
        let bytes = encode_tcem(&m);
        assert_eq!(bytes.len(), 24 + 16);
        let back = decode_tcem(&bytes).unwrap();
        assert!(back.bitwise_eq(&m));
        assert!(decode_tcem(&bytes[..30]).is_err());
        assert!(decode_tcem(b"TCEM").is_err());
    }
}
