//! Scenario runner for the `dera-core` models.
//!
//! A scenario is one JSON file (see [`scenario`]); [`run::execute`] runs the
//! requested stages and writes CSV/JSON artifacts plus a hashed manifest.

pub mod manifest;
pub mod report;
pub mod run;
pub mod scenario;

pub use run::{execute, RunOptions, Stage};
pub use scenario::Scenario;
