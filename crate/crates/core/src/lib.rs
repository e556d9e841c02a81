//! Group aggregation of incomplete pairwise comparisons given on scales with
//! different numbers of grades.
//!
//! Each expert's comparison matrix is decomposed into all of its spanning
//! trees. Every tree induces an ideally consistent matrix and a priority
//! vector; these are rated, aggregated, and their per-coordinate spread is
//! scored with a double-entropy agreement index. When agreement is too low,
//! the [`feedback`] loop asks individual experts to revise individual
//! comparisons.

pub mod aggregate;
pub mod agreement;
pub mod engine;
pub mod error;
pub mod feedback;
pub mod pcm;
pub mod scale;
pub mod session;
pub mod simulate;
pub mod spantree;

pub use error::{Error, Result};
