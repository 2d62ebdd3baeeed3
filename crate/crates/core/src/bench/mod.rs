//! Benchmark harness.

pub mod experiment;
pub mod micro;
pub mod output;
pub mod reference;
pub mod report;
