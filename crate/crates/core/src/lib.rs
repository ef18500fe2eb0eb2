//! Streaming and merge-and-reduce summaries for lp-norm matrix problems.
//!
//! The crate builds well-conditioned bases, extracts high-leverage rows in a
//! single pass, composes lp subspace embeddings over a merge-and-reduce tree,
//! and uses those summaries for lp and l_inf regression, entrywise-l1 low-rank
//! approximation and thresholded matrix multiplication.

pub mod amm;
pub mod conditioning;
pub mod embedding;
pub mod error;
pub mod experiment;
pub mod leverage;
pub(crate) mod linalg;
pub mod lowrank;
pub mod matcore;
pub mod regression;
pub mod rng;

pub use error::{Error, Result};
pub use matcore::{MatrixF, PNorm};
