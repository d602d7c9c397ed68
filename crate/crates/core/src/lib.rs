//! Cut-and-project and suspension point processes: diffraction measures,
//! number variances and hyperuniformity diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffraction;
pub mod error;
pub mod lattice;
pub mod nonhyper;
pub mod padic;
pub mod pointset;
pub mod rational;
pub mod suspension;
pub mod window;

pub use error::{QcsError, Result};
pub use rational::{frac_dist, ExactRational};
