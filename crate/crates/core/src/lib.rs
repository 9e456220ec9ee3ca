//! Passage-based document retrieval kernels.
//!
//! This crate holds the algorithmic core: tokenization and stemming, a
//! positional inverted index with Dirichlet-smoothed language-model scoring,
//! fixed-window passage segmentation, document and passage feature
//! extraction, two linear learning-to-rank trainers, the passage-informed
//! document re-rankers and the evaluation measures.
//!
//! It is `no_std` (with `alloc`) and performs no IO. File formats, the
//! experiment harness and the command-line tool live in the `psgrank` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod eval;
pub mod features;
pub mod index;
pub mod list;
pub mod ltr;
pub mod math;
pub mod passage;
pub mod rank;
pub mod text;

pub use error::{Error, Result};
pub use list::RankedList;
