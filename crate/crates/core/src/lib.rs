//! Triggering-condition modelling for scenario-based validation.
//!
//! The crate follows one pipeline: an [`ontology`] names every parameter a
//! scenario can carry, [`constraints`] turn triggering conditions into an
//! effective per-parameter constraint set, [`testgen`] expands a constrained
//! [`scenario`] into test matrices, [`simkernel`] runs each case through a
//! longitudinal perception-and-brake model, and [`classify`] compares the
//! resulting safety indicators against the nominal baseline.

pub mod catalog;
pub mod classify;
pub mod constraints;
pub mod corpus;
pub mod interval;
pub mod ontology;
pub mod report;
pub mod scenario;
pub mod simkernel;
pub mod testgen;

pub use interval::Interval;
pub use ontology::{EntityId, Ontology};
pub use report::{Severity, ValidationReport};
