#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod netlist;
pub mod units;

pub use error::{Error, Result};
pub mod circuit;
pub mod presets;
pub mod sim;
pub mod phasor;
pub mod poly;
pub mod laplace;
pub mod modulator;
pub mod dsp;
pub mod lti_equiv;
