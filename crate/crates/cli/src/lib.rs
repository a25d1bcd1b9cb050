// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

pub use commands::{Inequality, Report};
pub use config::RunConfig;

/// Worker-count override for the numerical thread pool.
pub const THREADS_ENV: &str = "WAKE_THREADS";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;
