//! Variables, networks, CPD families and factor algebra.

mod cpd;
mod dist;
mod factor;
mod network;

pub use cpd::{
    cpd_as_table, for_each_assignment, indicator_width, ln_factorial, parent_indicators, sigmoid,
    truncated_poisson_pmf, Cpd, RateModel, MAX_RATE, MIN_RATE, PROBABILITY_FLOOR,
};
pub use dist::DistVec;
pub use factor::Factor;
pub use network::{
    validate_network, IssueKind, NetworkSpec, Role, ValidationIssue, ValidationReport, VariableSpec,
};
