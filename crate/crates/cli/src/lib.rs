//! Experiment runner: TOML configs in, per-seed CSVs and an aggregate JSON out.

// `!(x > 0.0)` checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod report;
