//! Experiment harness around the core solvers: declarative TOML configs,
//! deterministic per-seed instance derivation, CSV/SVG artifact emission,
//! a parallel cell runner, and a standalone invariant verifier.

pub mod config;
pub mod files;
pub mod instance;
pub mod runner;
pub mod svg;
pub mod verify;
