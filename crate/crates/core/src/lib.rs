//! Differential testing of graph-level model optimizers with per-pass
//! fault localization.
//!
//! A model is optimized (as the default bundle or an explicit pass list),
//! both versions are run over a dataset, outputs are compared with
//! task-specific metrics, and any crash, malformed graph, divergence or new
//! warning triggers a sweep applying each pass alone to the original model.

pub mod comparators;
pub mod localizer;
pub mod mock;
pub mod optimizer;
pub mod orchestrator;
pub mod pipeline;
pub mod reporting;
pub mod runner;
pub mod types;

mod process;
