//! Grouped, selectively weighted false discovery rate control.
//!
//! The crate is organised bottom-up:
//!
//! - [`types`]: p-values, group partitions, truth assignments, weights and
//!   rejection sets, plus the null-proportion identities.
//! - [`stepup`]: the Benjamini–Hochberg step-up engine on (weighted) p-values.
//! - [`estimators`]: null-proportion estimators (Storey, Jin) and the normal
//!   distribution kernel they rely on.
//! - [`selection`]: Kolmogorov–Smirnov and Simes tests used to pick the
//!   interesting groups.
//! - [`procedures`]: oracle, quasi-adaptive, plug-in and generic sGBH/GBH and
//!   the unit-weight variant.
//! - [`simulate`]: seeded Gaussian data generation, the experiment grid and
//!   metric aggregation.

pub mod error;
pub mod estimators;
pub mod procedures;
pub mod selection;
pub mod simulate;
pub mod stepup;
pub mod types;

pub use error::{Error, Result};
pub use estimators::{Estimator, JinConfig, Kernel, ZScores};
pub use procedures::{GenericScope, ProcedureReport};
pub use selection::{Selector, TestMethod, TestOutcome};
pub use types::{
    GroupPartition, GroupSelection, GroupTruthSummary, PValues, RejectionSet, TruthAssignment,
    WeightVector,
};
