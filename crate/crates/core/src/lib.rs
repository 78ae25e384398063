// Negated comparisons are used on purpose so that NaN falls on the rejecting side.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archive;
pub mod climate;
pub mod config;
pub mod error;
pub mod forcing;
pub mod io;
pub mod observation;
pub mod params;
pub mod prior;
pub mod rng;
pub mod simulate;
pub mod smc;
pub mod summary;

pub use error::{Error, Result};
