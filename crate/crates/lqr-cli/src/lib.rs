//! Library surface of the experiment harness, shared by the binary and the
//! integration tests.

pub mod config;
pub mod error;
pub mod experiments;
pub mod instances;
pub mod output;
pub mod percentiles;
