//! Reliability model for BCH-protected memory with replicated or erasure-coded blocks.
//!
//! Computes how weakening the per-replica ECC strength of a BCH-protected
//! memory tier trades storage overhead against detectable (DUE) and
//! non-detectable (NDE) error rates once replication or erasure coding is
//! layered on top, and validates every closed-form expression against exact
//! enumeration and seeded Monte Carlo fault injection.
//!
//! Module map:
//! - [`numerics`]: log-space probability arithmetic (binomial tails, stable powers).
//! - [`codes`]: BCH parameterization, cache-line DUE/NDE, storage overhead.
//! - [`schemes`]: block and logical-block reliability, optimizer, sweeps.
//! - [`oracle`]: exact enumeration and Monte Carlo verification.
//! - [`cli`]: configuration and the `analyze`/`sweep`/`optimize`/`validate` workflows.

pub mod cli;
pub mod codes;
pub mod error;
pub mod numerics;
pub mod oracle;
pub mod schemes;

pub use codes::{CodeSpec, MemoryConfig, ModelVariants};
pub use error::{Error, Result};
pub use numerics::LogProb;
pub use schemes::{ReliabilityReport, Scheme, SweepTable};
