//! Classification approaches for regression (CAR) applied to monocular depth.
//!
//! The crate covers the whole pipeline around a depth classifier:
//!
//! - [`tables`]: handcrafted log-space and adaptive linear depth tables.
//! - [`encode`]: one-hot, ordinal and Gaussian-smoothed classification targets.
//! - [`losses`]: CE, weighted CE, multi-BCE, ordinal, smooth-L1 and
//!   scale-invariant losses with analytic gradients, plus a finite-difference checker.
//! - [`decode`]: soft weighted sum, argmax, ordinal sum and adaptive decoding.
//! - [`uncertainty`]: Shannon entropy, 1-MCP, expectation of distance (E-Dist)
//!   and its adaptive/ordinal variants, ensemble variance.
//! - [`metrics`]: standard depth metrics, sparsification curves and AUSE.
//! - [`synth`]: deterministic synthetic scenes and a linear-head benchmark harness.
//! - [`io`]: `.npy`, JSON, CSV and PGM interchange.
//!
//! Everything here is a pure function over immutable inputs. Reductions go
//! through [`reduce::chunked_sum`], which is bit-identical for any thread count.

pub mod array;
pub mod decode;
pub mod encode;
pub mod error;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod reduce;
pub mod synth;
pub mod tables;
pub mod uncertainty;

pub use array::{DepthMap, GroundTruthDepth, Matrix, ProbMap, ProbSemantics};
pub use error::{CarError, Result};
pub use tables::{DepthRange, DepthTable, TableSpace, WidthVector};
