//! Randomized packing of bounded-degree guest graphs into super-regular
//! multipartite hosts and quasirandom hosts, with the verification tooling
//! needed to check every intermediate guarantee.

pub mod error;
pub mod generate;
pub mod io;
pub mod candidacy;
pub mod embedder;
pub mod graph;
pub mod hypermatch;
pub mod instance;
pub mod orchestrator;
pub mod regularity;
pub mod rng;
pub mod splitter;
pub mod testers;

pub use error::{Error, Result};
pub use graph::{BipartitePair, Graph};
