//! Orchestration: configuration, module runners, acceptance criteria and the suite report.

pub mod config;
pub mod criteria;
pub mod experiments;
pub mod output;
pub mod suite;
