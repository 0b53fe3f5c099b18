#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod ber;
pub mod data;
pub mod error;
pub mod numfmt;
pub mod stats;
pub mod synth;
pub mod varcomp;

pub use error::{Error, Result};
