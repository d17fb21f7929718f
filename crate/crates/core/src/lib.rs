//! Nonlinear surface plasmon eigenproblems in layered media.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analytic;
pub mod banded;
pub mod cli;
pub mod config;
pub mod continuation;
pub mod error;
pub mod expansion;
pub mod floquet;
pub mod grid;
pub mod materials;
pub mod spectrum;

pub use error::{Result, SppError};
pub use num_complex::Complex64;
