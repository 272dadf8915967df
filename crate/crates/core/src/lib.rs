#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ar;
pub mod basis;
pub mod clean;
pub mod cli;
pub mod corr;
pub mod error;
pub mod gam;
pub mod impute;
pub mod io;
pub mod kalman;
pub mod normalize;
pub mod series;
pub mod synth;

pub use error::{Error, Result};
