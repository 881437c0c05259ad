//! Tooling for generating ACSL specifications with a language model,
//! verifying them with a deductive verifier and refining them until they
//! verify, plus the metrics used to compare specification configurations.

pub mod acsl;
pub mod config;
pub mod dataset;
pub mod verifier;
pub mod oracle;
pub mod refine;
pub mod runner;
pub mod metrics;
