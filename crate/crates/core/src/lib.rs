//! Paraphrase-consistency evaluation for cloze-style factual queries.
//!
//! The pipeline is: curate a relation dataset ([`corpus`]), score every
//! rendered paraphrase against a model endpoint ([`scoring`]), then compute
//! consistency statistics ([`metrics`]) and retrieval diagnostics
//! ([`retrieval`]). [`report`] renders the resulting tables.

pub mod corpus;
pub mod digest;
pub mod metrics;
pub mod report;
pub mod retrieval;
pub mod scoring;
pub mod synthetic;
