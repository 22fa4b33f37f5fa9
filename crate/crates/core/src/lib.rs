//! Private release of large counting-query families.
//!
//! The pipeline: encode a query family as a bounded submodular set function,
//! split it into Lipschitz pieces with a deterministic routing map
//! ([`decomposition`]), estimate each piece's mean under the evaluation
//! distribution ([`approximator`]), and answer oracle queries through a
//! noisy, budgeted statistical-query layer ([`privacy`]). Concrete families
//! (monotone disjunctions and conjunctions over binary records, graph cuts)
//! live in [`queries`]. An independent engine ([`mw`]) converts any weak
//! agnostic statistical-query learner into a query-release routine by
//! multiplicative weights, and back.

pub mod approximator;
pub mod decomposition;
pub mod error;
pub mod mask;
pub mod mw;
pub mod oracle;
pub mod privacy;
pub mod queries;

pub use error::{Error, Result};
pub use mask::{SubsetMask, Universe};
pub use oracle::{OracleStats, ValueOracle};

/// Library version embedded into reports and artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
