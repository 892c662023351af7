//! Robust time-delay estimation for quasi-static ultrasound elastography.
//!
//! The pipeline takes a pre- and post-compression RF frame pair, finds an
//! integer displacement with dynamic programming, refines it to sub-sample
//! precision with an adaptively weighted amplitude/gradient cost, and turns
//! the axial displacement into a strain image.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod dp;
pub mod error;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod solver;
pub mod strain;

pub use error::{Error, Result};
pub use grid::{DisplacementField, Grid, RFFrame};
