//! Driver for the `fracheat` command line: JSON experiment manifests,
//! operator caching, staged artifact output and consolidated reports.

pub mod artifacts;
pub mod cache;
pub mod failure;
pub mod kinds;
pub mod manifest;
pub mod report;
pub mod run;
