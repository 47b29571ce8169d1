//! Single-cell diffusion: a spatial exclusion model (cell carved out of the
//! domain, prescribed boundary flux) compared against point source models
//! (the cell replaced by one or several Dirac sources).

// `!(x > 0.0)` style guards are intentional: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiment;
pub mod fem;
pub mod geometry;
pub mod mesh;
pub mod metrics;
pub mod source;
pub mod sparse;
