//! Robust-stability certificates for networks of LTI agents whose links
//! carry bounded uncertainty.
//!
//! The network is rewritten as a structured feedback loop over link
//! coordinates ([`netgraph`]), the agents' frequency responses are combined
//! with per-agent quadratic multipliers ([`lti`], [`multipliers`]), and one
//! small semidefinite condition per link is checked on a frequency grid
//! ([`certify`]). [`oracle`] and [`sim`] provide independent checks.

// `!(x > y)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod error;
pub mod exec;
pub mod grid;
pub mod instances;
pub mod linalg;
pub mod lti;
pub mod multipliers;
pub mod netgraph;
pub mod oracle;
pub mod problem;
pub mod report;
pub mod sim;
pub mod spec;

pub use certify::{certify_problem, CertificateReport, CertifyOptions, Tolerances, Verdict};
pub use error::{Error, Result};
pub use exec::Execution;
pub use grid::{FrequencyGrid, GridSpec};
pub use lti::AgentModel;
pub use multipliers::MultiplierBlocks;
pub use netgraph::{NetworkGraph, StructureMatrices};
pub use problem::Problem;
pub use spec::{load_spec, parse_spec, NetworkSpec, SpecError};
