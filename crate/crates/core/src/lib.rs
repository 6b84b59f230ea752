//! Measurement and attribution toolkit for LLM-perceived attributes of debate
//! transcripts.
//!
//! The crate is organised as a pipeline:
//!
//! * [`corpus`] parses transcripts and cuts them into overlapping token-budget slices.
//! * [`registry`] holds the attribute schema and the question ensembles.
//! * [`survey`] renders prompts, runs them through a provider with caching, parses
//!   answers and aggregates them into a [`survey::DataMatrix`].
//! * [`netstats`] computes correlations, partial correlations, the dependency
//!   matrix, pruned activity dependency networks and bootstrap stability.
//! * [`perturb`] runs the ±0.1 perturbation probe and compares methods.
//! * [`synthlab`] generates linear-Gaussian ground truth for validation.
//! * [`report`] renders CSV/SVG/DOT views.
//! * [`pipeline`] wires the stages together behind a resumable run manifest.

pub mod corpus;
pub mod error;
pub mod netstats;
pub mod perturb;
pub mod pipeline;
pub mod registry;
pub mod report;
pub mod survey;
pub mod synthlab;

mod digest;

pub use error::{Error, ErrorKind, Result};

pub use corpus::{Debate, Party, Slice, Turn};

pub use netstats::{AdnGraph, BootstrapReport, CorrelationMatrix, DependencyMatrix, NumericTable};
pub use registry::{AttributeSpec, Registry};
pub use survey::{CostLedger, DataMatrix};
