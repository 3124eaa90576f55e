//! CSR adjacency graphs: loading, validation and cost metrics.
//!
//! A [`CsrGraph`] stores the adjacency matrix `A` in compressed sparse row
//! form. Row `i` holds the out-neighbors of node `i` in
//! `edge_list[node_pointer[i]..node_pointer[i + 1]]`. Loaders normalize every
//! row (sorted ascending, duplicates removed) so downstream tiling is
//! deterministic.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Sparse adjacency matrix in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrGraph {
    num_nodes: usize,
    node_pointer: Vec<usize>,
    edge_list: Vec<u32>,
    edge_values: Option<Vec<f32>>,
}

impl CsrGraph {
    /// Builds a graph and checks every CSR invariant.
    pub fn new(
        num_nodes: usize,
        node_pointer: Vec<usize>,
        edge_list: Vec<u32>,
        edge_values: Option<Vec<f32>>,
    ) -> Result<Self> {
        let g = Self::from_parts_unchecked(num_nodes, node_pointer, edge_list, edge_values);
        let report = g.validate();
        if report.is_valid() {
            Ok(g)
        } else {
            Err(Error::InvalidGraph(report))
        }
    }

    /// Builds a graph without validation. Use [`CsrGraph::validate`] to
    /// diagnose the result.
    pub fn from_parts_unchecked(
        num_nodes: usize,
        node_pointer: Vec<usize>,
        edge_list: Vec<u32>,
        edge_values: Option<Vec<f32>>,
    ) -> Self {
        Self {
            num_nodes,
            node_pointer,
            edge_list,
            edge_values,
        }
    }

    /// A graph with `num_nodes` nodes and no edges.
    pub fn empty(num_nodes: usize) -> Self {
        Self::from_parts_unchecked(num_nodes, vec![0; num_nodes + 1], Vec::new(), None)
    }

    /// Builds a normalized graph from `(src, dst)` pairs. Rows are sorted and
    /// duplicate edges collapsed; when values are supplied the first
    /// occurrence of a duplicated edge wins.
    pub fn from_edges(
        num_nodes: usize,
        edges: &[(u32, u32)],
        values: Option<&[f32]>,
    ) -> Result<Self> {
        if let Some(v) = values {
            if v.len() != edges.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} edge values for {} edges",
                    v.len(),
                    edges.len()
                )));
            }
        }
        for &(s, d) in edges {
            let bad = s.max(d) as usize;
            if bad >= num_nodes {
                return Err(Error::out_of_range("node", bad, num_nodes));
            }
        }

        let mut order: Vec<usize> = (0..edges.len()).collect();
        // Stable sort keeps the first occurrence of a duplicate in front.
        order.sort_by_key(|&i| edges[i]);
        order.dedup_by_key(|i| edges[*i]);

        let mut node_pointer = vec![0usize; num_nodes + 1];
        for &i in &order {
            node_pointer[edges[i].0 as usize + 1] += 1;
        }
        for r in 0..num_nodes {
            node_pointer[r + 1] += node_pointer[r];
        }
        let edge_list = order.iter().map(|&i| edges[i].1).collect();
        let edge_values = values.map(|v| order.iter().map(|&i| v[i]).collect());
        Ok(Self::from_parts_unchecked(
            num_nodes,
            node_pointer,
            edge_list,
            edge_values,
        ))
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edge_list.len()
    }

    pub fn node_pointer(&self) -> &[usize] {
        &self.node_pointer
    }

    pub fn edge_list(&self) -> &[u32] {
        &self.edge_list
    }

    pub fn edge_values(&self) -> Option<&[f32]> {
        self.edge_values.as_deref()
    }

    /// Weight of edge `e`; 1.0 for unweighted graphs.
    #[inline]
    pub fn edge_value(&self, e: usize) -> f32 {
        match &self.edge_values {
            Some(v) => v[e],
            None => 1.0,
        }
    }

    /// Edge index range of row `row`.
    #[inline]
    pub fn row_range(&self, row: usize) -> std::ops::Range<usize> {
        self.node_pointer[row]..self.node_pointer[row + 1]
    }

    pub fn neighbors(&self, row: usize) -> &[u32] {
        &self.edge_list[self.row_range(row)]
    }

    /// Replaces (or removes) the per-edge weights.
    pub fn with_edge_values(mut self, values: Option<Vec<f32>>) -> Result<Self> {
        if let Some(v) = &values {
            if v.len() != self.edge_list.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} edge values for {} edges",
                    v.len(),
                    self.edge_list.len()
                )));
            }
        }
        self.edge_values = values;
        Ok(self)
    }

    /// Iterates `(src, dst)` in CSR order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.num_nodes).flat_map(move |r| self.neighbors(r).iter().map(move |&c| (r as u32, c)))
    }

    /// Lists every violated CSR invariant. The report is empty iff the graph
    /// is valid.
    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        let n = self.num_nodes;
        let np = &self.node_pointer;
        let m = self.edge_list.len();

        if np.len() != n + 1 {
            issues.push(ValidationIssue::RowPointerLength {
                expected: n + 1,
                actual: np.len(),
            });
        }
        if let Some(&first) = np.first() {
            if first != 0 {
                issues.push(ValidationIssue::RowPointerStart(first));
            }
        }
        for (row, w) in np.windows(2).enumerate() {
            if w[1] < w[0] {
                issues.push(ValidationIssue::NonMonotone { row });
            }
        }
        if let Some(&last) = np.last() {
            if last != m {
                issues.push(ValidationIssue::RowPointerEnd { last, edges: m });
            }
        }
        for (edge, &c) in self.edge_list.iter().enumerate() {
            if c as usize >= n {
                issues.push(ValidationIssue::ColumnOutOfRange {
                    edge,
                    column: c,
                    num_nodes: n,
                });
            }
        }
        if let Some(v) = &self.edge_values {
            if v.len() != m {
                issues.push(ValidationIssue::EdgeValuesLength {
                    expected: m,
                    actual: v.len(),
                });
            }
        }

        // Row ordering is only meaningful when the row pointer is sound.
        let structure_ok = np.len() == n + 1
            && np.windows(2).all(|w| w[0] <= w[1])
            && np.last().is_some_and(|&l| l <= m);
        if structure_ok {
            for row in 0..n {
                let cols = &self.edge_list[np[row]..np[row + 1]];
                for (i, w) in cols.windows(2).enumerate() {
                    if w[1] == w[0] {
                        issues.push(ValidationIssue::DuplicateEdge {
                            row,
                            edge: np[row] + i + 1,
                        });
                    } else if w[1] < w[0] {
                        issues.push(ValidationIssue::UnsortedRow {
                            row,
                            edge: np[row] + i + 1,
                        });
                    }
                }
            }
        }
        ValidationReport { issues }
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_valid()
    }
}

/// One violated CSR invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationIssue {
    RowPointerLength { expected: usize, actual: usize },
    RowPointerStart(usize),
    NonMonotone { row: usize },
    RowPointerEnd { last: usize, edges: usize },
    ColumnOutOfRange { edge: usize, column: u32, num_nodes: usize },
    EdgeValuesLength { expected: usize, actual: usize },
    UnsortedRow { row: usize, edge: usize },
    DuplicateEdge { row: usize, edge: usize },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::RowPointerLength { expected, actual } => write!(
                f,
                "row pointer has {actual} entries, expected {expected}"
            ),
            Self::RowPointerStart(v) => write!(f, "row pointer starts at {v}, expected 0"),
            Self::NonMonotone { row } => write!(f, "non-monotone row pointer at row {row}"),
            Self::RowPointerEnd { last, edges } => write!(
                f,
                "row pointer ends at {last} but there are {edges} edges"
            ),
            Self::ColumnOutOfRange { edge, column, num_nodes } => write!(
                f,
                "column id out of range at edge {edge} ({column} >= {num_nodes})"
            ),
            Self::EdgeValuesLength { expected, actual } => write!(
                f,
                "{actual} edge values, expected {expected}"
            ),
            Self::UnsortedRow { row, edge } => {
                write!(f, "unsorted column ids in row {row} at edge {edge}")
            }
            Self::DuplicateEdge { row, edge } => {
                write!(f, "duplicate edge in row {row} at edge {edge}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        Ok(())
    }
}

/// Whole-graph cost metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphStats {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub avg_degree: f64,
    /// Bytes of a dense `N x N` f32 adjacency, `4 * N^2`. Saturates at
    /// `u64::MAX` for `N >= 2^31`.
    pub dense_memory_bytes: u64,
    /// `nnz / (N * N)`; 0 for the empty graph.
    pub effective_computation: f64,
    pub avg_edges_per_row_window: f64,
}

impl GraphStats {
    /// Dense memory in decimal gigabytes (10^9 bytes).
    pub fn dense_memory_gb(&self) -> f64 {
        self.dense_memory_bytes as f64 / 1e9
    }
}

/// `4 * N^2` bytes, the footprint of a dense f32 adjacency matrix.
pub fn dense_memory_bytes(num_nodes: usize) -> u64 {
    let n = num_nodes as u64;
    n.saturating_mul(n).saturating_mul(4)
}

pub fn graph_stats(g: &CsrGraph, window_height: usize) -> GraphStats {
    assert!(window_height >= 1, "window height must be at least 1");
    let n = g.num_nodes();
    let m = g.num_edges();
    let windows = n.div_ceil(window_height);
    let ratio = |num: usize, den: f64| if den > 0.0 { num as f64 / den } else { 0.0 };
    GraphStats {
        num_nodes: n,
        num_edges: m,
        avg_degree: ratio(m, n as f64),
        dense_memory_bytes: dense_memory_bytes(n),
        effective_computation: ratio(m, n as f64 * n as f64),
        avg_edges_per_row_window: ratio(m, windows as f64),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn parse_node_id(tok: &str, line: usize) -> Result<u32> {
    if tok.is_empty() || !tok.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::Parse {
            line,
            message: format!("expected a non-negative integer node id, found {tok:?}"),
        });
    }
    // u32::MAX itself is reserved so that N = max id + 1 still fits.
    match tok.parse::<u32>() {
        Ok(id) if id < u32::MAX => Ok(id),
        _ => Err(Error::NodeIdOverflow {
            line,
            id: tok.to_string(),
        }),
    }
}

/// Loads a whitespace-separated `src dst` edge list. Lines starting with `#`
/// or `%` are comments; blank lines are skipped. A `# nodes N ...` comment
/// (as written by [`write_edge_list`]) raises the node count to at least `N`.
pub fn load_edge_list(path: impl AsRef<Path>, num_nodes_hint: Option<usize>) -> Result<CsrGraph> {
    let path = path.as_ref();
    read_edge_list(open(path)?, num_nodes_hint).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses edge-list text from any reader. See [`load_edge_list`].
pub fn read_edge_list(reader: impl BufRead, num_nodes_hint: Option<usize>) -> Result<CsrGraph> {
    let mut edges = Vec::new();
    let mut max_id: Option<u32> = None;
    let mut declared = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io("<edge list>", e))?;
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix("# nodes ") {
            if let Some(n) = rest.split_whitespace().next().and_then(|t| t.parse().ok()) {
                declared = declared.max(n);
            }
        }
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected \"src dst\", found {} fields", toks.len()),
            });
        }
        let s = parse_node_id(toks[0], lineno)?;
        let d = parse_node_id(toks[1], lineno)?;
        max_id = Some(max_id.map_or(s.max(d), |m| m.max(s).max(d)));
        edges.push((s, d));
    }
    let n = max_id
        .map_or(0, |m| m as usize + 1)
        .max(num_nodes_hint.unwrap_or(0))
        .max(declared);
    CsrGraph::from_edges(n, &edges, None)
}

/// Writes `g` as edge-list text, one `src dst` pair per line in CSR order.
pub fn write_edge_list(g: &CsrGraph, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "# nodes {} edges {}", g.num_nodes(), g.num_edges())?;
    for (s, d) in g.edges() {
        writeln!(w, "{s} {d}")?;
    }
    w.flush()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MmField {
    Pattern,
    Real,
}

/// Loads a Matrix Market coordinate file (`pattern`/`real`/`integer`,
/// `general`/`symmetric`). Real values become edge weights.
pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<CsrGraph> {
    let path = path.as_ref();
    read_matrix_market(open(path)?).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_matrix_market(reader: impl BufRead) -> Result<CsrGraph> {
    let mut lines = reader.lines().enumerate();

    let header = match lines.next() {
        Some((_, l)) => l.map_err(|e| Error::io("<matrix market>", e))?,
        None => return Err(Error::MalformedHeader("empty file".into())),
    };
    let toks: Vec<String> = header
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if toks.len() != 5 || toks[0] != "%%matrixmarket" || toks[1] != "matrix" {
        return Err(Error::MalformedHeader(header));
    }
    if toks[2] != "coordinate" {
        return Err(Error::Unsupported(format!("format {:?}", toks[2])));
    }
    let field = match toks[3].as_str() {
        "pattern" => MmField::Pattern,
        "real" | "integer" | "double" => MmField::Real,
        other => return Err(Error::Unsupported(format!("field {other:?}"))),
    };
    let symmetric = match toks[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(Error::Unsupported(format!("symmetry {other:?}"))),
    };

    let mut size: Option<(usize, usize)> = None;
    let mut edges = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io("<matrix market>", e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        let Some((rows, cols)) = size else {
            if parts.len() != 3 {
                return Err(Error::MalformedHeader(format!(
                    "line {lineno}: expected \"rows cols nnz\""
                )));
            }
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|_| {
                    Error::MalformedHeader(format!("line {lineno}: bad size field {s:?}"))
                })
            };
            let (r, c) = (parse(parts[0])?, parse(parts[1])?);
            parse(parts[2])?;
            if r != c {
                return Err(Error::MalformedHeader(format!(
                    "adjacency must be square, got {r}x{c}"
                )));
            }
            if r >= u32::MAX as usize {
                return Err(Error::NodeIdOverflow {
                    line: lineno,
                    id: r.to_string(),
                });
            }
            size = Some((r, c));
            continue;
        };
        let want = if field == MmField::Pattern { 2 } else { 3 };
        if parts.len() < want {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {want} fields, found {}", parts.len()),
            });
        }
        let index = |s: &str, limit: usize| -> Result<u32> {
            let v: usize = s.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad index {s:?}"),
            })?;
            if v == 0 || v > limit {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("index {v} outside 1..={limit}"),
                });
            }
            Ok((v - 1) as u32)
        };
        let r = index(parts[0], rows)?;
        let c = index(parts[1], cols)?;
        let v = if field == MmField::Real {
            parts[2].parse::<f32>().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad value {:?}", parts[2]),
            })?
        } else {
            1.0
        };
        edges.push((r, c));
        values.push(v);
        if symmetric && r != c {
            edges.push((c, r));
            values.push(v);
        }
    }
    let Some((n, _)) = size else {
        return Err(Error::MalformedHeader("missing size line".into()));
    };
    let vals = (field == MmField::Real).then_some(values.as_slice());
    CsrGraph::from_edges(n, &edges, vals)
}
