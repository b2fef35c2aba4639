//! Criterion-scale checks shared by the integration tests and the acceptance
//! suite. Each returns a short summary on success and the first failure
//! otherwise.
#![allow(dead_code)]

pub mod oracle_suite;
pub mod attention_suite;
pub mod cleaning_suite;
pub mod metrics_suite;
