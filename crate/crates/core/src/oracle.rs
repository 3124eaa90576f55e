//! Brute-force CSR references for the tiled kernels.
//!
//! These walk the CSR arrays directly with no tiling or translation, in a
//! single thread. The f32 variants accumulate in CSR edge order and
//! ascending dimension order, which is also the order the tiled kernels
//! use, so exact-mode kernel output can be compared bitwise.

use std::fmt;

use crate::dense::{EdgeValList, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::graph::CsrGraph;

fn check(g: &CsrGraph, x: &EmbeddingMatrix, f: Option<&EdgeValList>) -> Result<()> {
    if x.num_rows() != g.num_nodes() {
        return Err(Error::ShapeMismatch(format!(
            "embedding has {} rows, graph has {} nodes",
            x.num_rows(),
            g.num_nodes()
        )));
    }
    if let Some(f) = f {
        if f.len() != g.num_edges() {
            return Err(Error::ShapeMismatch(format!(
                "{} edge values for {} edges",
                f.len(),
                g.num_edges()
            )));
        }
    }
    Ok(())
}

fn weight(g: &CsrGraph, f: Option<&EdgeValList>, e: usize) -> f32 {
    f.map_or_else(|| g.edge_value(e), |f| f.values[e])
}

/// `X'[i] = sum over edges e of row i of f[e] * X[edge_list[e]]`, f32.
pub fn ref_spmm(
    g: &CsrGraph,
    x: &EmbeddingMatrix,
    f: Option<&EdgeValList>,
) -> Result<EmbeddingMatrix> {
    check(g, x, f)?;
    let d = x.num_cols();
    let mut out = EmbeddingMatrix::zeros(g.num_nodes(), d);
    for i in 0..g.num_nodes() {
        let mut acc = vec![0.0f32; d];
        for e in g.row_range(i) {
            let w = weight(g, f, e);
            let src = x.row(g.edge_list()[e] as usize);
            for (a, &v) in acc.iter_mut().zip(src) {
                *a += w * v;
            }
        }
        out.data_mut()[i * d..(i + 1) * d].copy_from_slice(&acc);
    }
    Ok(out)
}

/// As [`ref_spmm`] but accumulating in f64.
pub fn ref_spmm_f64(
    g: &CsrGraph,
    x: &EmbeddingMatrix,
    f: Option<&EdgeValList>,
) -> Result<EmbeddingMatrix> {
    check(g, x, f)?;
    let d = x.num_cols();
    let mut out = EmbeddingMatrix::zeros(g.num_nodes(), d);
    for i in 0..g.num_nodes() {
        let mut acc = vec![0.0f64; d];
        for e in g.row_range(i) {
            let w = weight(g, f, e) as f64;
            let src = x.row(g.edge_list()[e] as usize);
            for (a, &v) in acc.iter_mut().zip(src) {
                *a += w * v as f64;
            }
        }
        for (j, a) in acc.into_iter().enumerate() {
            out.set(i, j, a as f32);
        }
    }
    Ok(out)
}

/// `F[e] = dot(X[src(e)], X[dst(e)])` for every edge, f32, ascending k.
pub fn ref_sddmm(g: &CsrGraph, x: &EmbeddingMatrix) -> Result<EdgeValList> {
    check(g, x, None)?;
    let mut out = Vec::with_capacity(g.num_edges());
    for (s, d) in g.edges() {
        let mut acc = 0.0f32;
        for (a, b) in x.row(s as usize).iter().zip(x.row(d as usize)) {
            acc += a * b;
        }
        out.push(acc);
    }
    Ok(EdgeValList::new(out))
}

/// As [`ref_sddmm`] but accumulating in f64.
pub fn ref_sddmm_f64(g: &CsrGraph, x: &EmbeddingMatrix) -> Result<EdgeValList> {
    check(g, x, None)?;
    Ok(EdgeValList::new(
        g.edges()
            .map(|(s, d)| {
                x.row(s as usize)
                    .iter()
                    .zip(x.row(d as usize))
                    .map(|(&a, &b)| a as f64 * b as f64)
                    .sum::<f64>() as f32
            })
            .collect(),
    ))
}

/// Element-wise tolerance `|a - b| <= abs + rel * |b|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Tolerance {
    pub const EXACT: Tolerance = Tolerance { rel: 0.0, abs: 0.0 };

    pub fn new(rel: f64, abs: f64) -> Self {
        Self { rel, abs }
    }
}

/// Values that [`compare`] can check: a shape plus a flat slice.
pub trait Comparable {
    /// `(rows, cols)`; edge lists are a single column.
    fn shape(&self) -> (usize, usize);
    fn values(&self) -> &[f32];
}

impl Comparable for EmbeddingMatrix {
    fn shape(&self) -> (usize, usize) {
        (self.num_rows(), self.num_cols())
    }

    fn values(&self) -> &[f32] {
        self.data()
    }
}

impl Comparable for EdgeValList {
    fn shape(&self) -> (usize, usize) {
        (self.len(), 1)
    }

    fn values(&self) -> &[f32] {
        self.as_slice()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mismatch {
    pub index: usize,
    pub row: usize,
    pub col: usize,
    pub actual: f32,
    pub expected: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub passed: bool,
    pub max_abs_err: f64,
    /// Largest `|a - b| / |b|` over elements with `b != 0`.
    pub max_rel_err: f64,
    pub first_mismatch: Option<Mismatch>,
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (max abs {:.3e}, max rel {:.3e})",
            if self.passed { "pass" } else { "FAIL" },
            self.max_abs_err,
            self.max_rel_err
        )?;
        if let Some(m) = self.first_mismatch {
            write!(
                f,
                "; first mismatch at [{}, {}]: {} vs expected {}",
                m.row, m.col, m.actual, m.expected
            )?;
        }
        Ok(())
    }
}

/// Compares `actual` against `expected` element-wise.
pub fn compare<T: Comparable + ?Sized>(
    actual: &T,
    expected: &T,
    tol: Tolerance,
) -> Result<CompareReport> {
    if actual.shape() != expected.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            actual.shape(),
            expected.shape()
        )));
    }
    let cols = actual.shape().1.max(1);
    let mut report = CompareReport {
        passed: true,
        max_abs_err: 0.0,
        max_rel_err: 0.0,
        first_mismatch: None,
    };
    for (i, (&a, &b)) in actual.values().iter().zip(expected.values()).enumerate() {
        let (a64, b64) = (a as f64, b as f64);
        let diff = if a.to_bits() == b.to_bits() {
            0.0
        } else {
            (a64 - b64).abs()
        };
        report.max_abs_err = report.max_abs_err.max(diff);
        if b != 0.0 {
            report.max_rel_err = report.max_rel_err.max(diff / b64.abs());
        }
        let ok = diff <= tol.abs + tol.rel * b64.abs();
        if !ok && report.passed {
            report.passed = false;
            report.first_mismatch = Some(Mismatch {
                index: i,
                row: i / cols,
                col: i % cols,
                actual: a,
                expected: b,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_node() -> CsrGraph {
        CsrGraph::new(4, vec![0, 2, 3, 4, 4], vec![0, 3, 3, 1], None).unwrap()
    }

    fn x4() -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [2.0, 2.0], [5.0, 5.0]]).unwrap()
    }

    #[test]
    fn spmm_examples() {
        let out = ref_spmm(&four_node(), &x4(), None).unwrap();
        assert_eq!(
            out.to_rows(),
            vec![vec![6.0, 5.0], vec![5.0, 5.0], vec![0.0, 1.0], vec![0.0, 0.0]]
        );
        assert_eq!(ref_spmm(&CsrGraph::empty(4), &x4(), None).unwrap(), EmbeddingMatrix::zeros(4, 2));

        let g = CsrGraph::from_edges(4, &[(2, 2)], None).unwrap();
        let out = ref_spmm(&g, &x4(), None).unwrap();
        assert_eq!(out.to_rows(), vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![2.0, 2.0], vec![0.0, 0.0]]);
        assert!(ref_spmm(&g, &EmbeddingMatrix::zeros(3, 2), None).is_err());
    }

    #[test]
    fn sddmm_examples() {
        assert_eq!(ref_sddmm(&four_node(), &x4()).unwrap().values, vec![1.0, 5.0, 5.0, 2.0]);
        let zeros = ref_sddmm(&four_node(), &EmbeddingMatrix::zeros(4, 3)).unwrap();
        assert!(zeros.values.iter().all(|&v| v == 0.0));
        let x = EmbeddingMatrix::new(4, 1, vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        assert_eq!(ref_sddmm(&four_node(), &x).unwrap().values, vec![1.0, 0.5, -1.0, -6.0]);
        assert_eq!(ref_sddmm_f64(&four_node(), &x4()).unwrap().values, vec![1.0, 5.0, 5.0, 2.0]);
    }

    #[test]
    fn compare_reports() {
        let a = EmbeddingMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let r = compare(&a, &a, Tolerance::EXACT).unwrap();
        assert!(r.passed);
        assert_eq!(r.max_abs_err, 0.0);

        let b = a.map(|v| v + 1e-7);
        assert!(compare(&b, &a, Tolerance::new(1e-5, 0.0)).unwrap().passed);

        let mut c = a.clone();
        c.set(1, 0, -3.0);
        let r = compare(&c, &a, Tolerance::new(1e-5, 0.0)).unwrap();
        assert!(!r.passed);
        let m = r.first_mismatch.unwrap();
        assert_eq!((m.index, m.row, m.col), (2, 1, 0));
        assert_eq!(r.max_rel_err, 2.0);

        let e = EdgeValList::new(vec![1.0, 2.0]);
        assert!(compare(&e, &EdgeValList::new(vec![1.0]), Tolerance::EXACT).is_err());
        assert!(compare(&a, &EmbeddingMatrix::zeros(4, 1), Tolerance::EXACT).is_err());
    }

    #[test]
    fn f64_variant_agrees_within_rounding() {
        let g = CsrGraph::from_edges(3, &[(0, 1), (0, 2), (1, 0), (2, 2)], Some(&[0.3, 0.7, 1.1, -0.2]))
            .unwrap();
        let x = EmbeddingMatrix::from_rows(&[[0.1, 0.2], [0.3, -0.4], [1e3, 1e-3]]).unwrap();
        let a = ref_spmm(&g, &x, None).unwrap();
        let b = ref_spmm_f64(&g, &x, None).unwrap();
        assert!(compare(&a, &b, Tolerance::new(1e-6, 1e-9)).unwrap().passed);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::seq::SliceRandom;
        use rand::SeedableRng;

        fn case() -> impl Strategy<Value = (CsrGraph, EmbeddingMatrix)> {
            (1usize..40, 1usize..6).prop_flat_map(|(n, d)| {
                (
                    prop::collection::vec((0..n as u32, 0..n as u32), 0..150),
                    prop::collection::vec(-2.0f32..2.0, n * d),
                )
                    .prop_map(move |(e, x)| {
                        (
                            CsrGraph::from_edges(n, &e, None).unwrap(),
                            EmbeddingMatrix::new(n, d, x).unwrap(),
                        )
                    })
            })
        }

        /// Dense `((X Xᵀ) ⊙ A) X` by triple loop in f64.
        fn dense_attention_aggregate(g: &CsrGraph, x: &EmbeddingMatrix) -> Vec<f64> {
            let n = g.num_nodes();
            let d = x.num_cols();
            let mut a = vec![0.0f64; n * n];
            for (s, t) in g.edges() {
                a[s as usize * n + t as usize] = 1.0;
            }
            let mut out = vec![0.0f64; n * d];
            for i in 0..n {
                for j in 0..n {
                    if a[i * n + j] == 0.0 {
                        continue;
                    }
                    let mut s = 0.0f64;
                    for k in 0..d {
                        s += x.get(i, k) as f64 * x.get(j, k) as f64;
                    }
                    for k in 0..d {
                        out[i * d + k] += s * x.get(j, k) as f64;
                    }
                }
            }
            out
        }

        proptest! {
            #[test]
            fn sddmm_then_spmm_matches_dense((g, x) in case()) {
                let f = ref_sddmm(&g, &x).unwrap();
                let got = ref_spmm(&g, &x, Some(&f)).unwrap();
                let want = dense_attention_aggregate(&g, &x);
                for (a, b) in got.data().iter().zip(&want) {
                    prop_assert!((*a as f64 - b).abs() <= 1e-4 + 1e-4 * b.abs(), "{a} vs {b}");
                }
            }

            #[test]
            fn row_permutation_changes_only_rounding((g, x) in case(), seed in any::<u64>()) {
                // Rebuild the CSR with every row's edges shuffled; the
                // unchecked constructor keeps the permuted order.
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let mut edges = Vec::new();
                for r in 0..g.num_nodes() {
                    let mut row = g.neighbors(r).to_vec();
                    row.shuffle(&mut rng);
                    edges.extend(row);
                }
                let shuffled = CsrGraph::from_parts_unchecked(
                    g.num_nodes(), g.node_pointer().to_vec(), edges, None);
                let a = ref_spmm(&g, &x, None).unwrap();
                let b = ref_spmm(&shuffled, &x, None).unwrap();
                let magnitude = ref_spmm_f64(&g, &x.map(f32::abs), None).unwrap();
                let d = x.num_cols();
                for (i, (p, q)) in a.data().iter().zip(b.data()).enumerate() {
                    // Reordering error of recursive summation is bounded by
                    // degree * eps * sum |terms|.
                    let degree = g.row_range(i / d).len() as f64;
                    let bound = 1e-6 * degree * magnitude.data()[i] as f64;
                    prop_assert!((*p as f64 - *q as f64).abs() <= bound, "{p} vs {q}");
                }
            }
        }
    }
}
