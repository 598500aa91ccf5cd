//! Deterministic, cycle-approximate simulator of a vector-tile accelerator
//! (AI-engine-style array plus programmable-logic side) running a 3D
//! atmospheric advection kernel in several pipeline designs.
//!
//! The crate is organised along the pipeline:
//!
//! - [`grid`]: problem state, slab decomposition, operand extraction
//! - [`oracle`]: scalar ground truth and FLOP accounting
//! - [`fabric`]: the discrete-event core (clocks, channels, windows, tiles)
//! - [`pl`]: programmable-logic producer/consumer stages
//! - [`variants`]: graph builders for every evaluated kernel design
//! - [`validator`]: platform constraint checks and channel accounting
//! - [`profiler`]: performance reports and comparison tables
//! - [`runner`]: build + validate + simulate + verify orchestration

pub mod fabric;
pub mod grid;
pub mod oracle;
pub mod pl;
pub mod profiler;
pub mod runner;
pub mod validator;
pub mod variants;

pub use grid::{Field, Grid3D, InitSpec, OperandBundle, SourceTerms};
pub use profiler::PerfReport;
pub use variants::{VariantName, VariantSpec};
