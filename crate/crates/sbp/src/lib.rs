//! Capacity estimates for the symmetric binary perceptron from lifted random
//! duality functionals, small-margin asymptotics, and the CLuP barrier solver.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod cli;
pub mod clup;
pub mod error;
pub mod flrdt;
pub mod instance;
pub mod numerics;

pub use error::{Error, Result};
