//! Sparse graph translation and tile-based SpMM/SDDMM.
//!
//! Graph adjacency is condensed per row window into dense fixed-shape tiles
//! ([`sgt`]), which the kernels ([`kernels`]) feed through an emulated
//! `D = A * B + C` primitive ([`tile`]). [`oracle`] holds the brute-force
//! CSR references every kernel is checked against.
//!
//! ```
//! use tcg_core::{kernels, oracle, sgt, CsrGraph, EmbeddingMatrix, PrecisionMode};
//!
//! let g = CsrGraph::from_edges(4, &[(0, 0), (0, 3), (1, 3), (2, 1)], None).unwrap();
//! let x = EmbeddingMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [2.0, 2.0], [5.0, 5.0]]).unwrap();
//! let t = sgt::translate(g.clone(), sgt::BlockConfig::default());
//! let out = kernels::spmm(&t, &x, None, PrecisionMode::ExactF32, None).unwrap();
//! assert!(out.value.bitwise_eq(&oracle::ref_spmm(&g, &x, None).unwrap()));
//! ```

pub mod dense;
pub mod error;
pub mod format;
pub mod graph;
pub mod kernels;
pub mod oracle;
pub mod sgt;
pub mod synth;
pub mod tile;

pub use dense::{EdgeValList, EmbeddingMatrix};
pub use error::{Error, Result};
pub use graph::{graph_stats, CsrGraph, GraphStats, ValidationReport};
pub use kernels::{Counters, Profiled, TaskPlan};
pub use sgt::{translate, BlockConfig, PrecisionMode, TiledGraph};
pub use tile::{quantize_tf32, Layout, Tile};
