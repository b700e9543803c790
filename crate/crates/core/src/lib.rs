//! Reliability audit for multi-annotator binary criteria schemas.
//!
//! Responses form a tensor `Y[s, a, q]` over units, annotators and criteria.
//! Everything downstream works from per-unit vote counts and a vote threshold `t`.

pub mod error;
pub mod normalize;
pub mod panel;
pub mod report;
pub mod robustness;
pub mod schema;
pub mod separability;
pub mod stability;
pub mod svg;
pub mod synth;
pub mod tensor;
pub mod validation;

pub use error::{AuditError, Result};
pub use report::{run_audit, write_bundle, AuditOptions, AuditReport};
pub use schema::{Category, Criterion, Schema};
pub use tensor::{build_tensor, vote_counts, ResponseRecord, ResponseTensor, VoteTable};
