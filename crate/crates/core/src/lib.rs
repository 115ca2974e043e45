//! Benchmark static security analyzers against a labeled corpus, search for the
//! best-performing tool combinations, and gate submitted code behind an
//! analyzer ensemble plus a human moderator.

pub mod adapters;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod finding;
pub mod gate;
pub mod matcher;
pub mod metrics;
pub mod taxonomy;

pub use error::{Error, Result};
