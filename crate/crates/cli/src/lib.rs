//! Experiment runner and report writer for the FSAR simulator.

pub mod manifest;
pub mod output;
pub mod plan;
pub mod report;
pub mod runner;
