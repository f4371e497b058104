#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod averaging;
pub mod bulk;
pub mod config;
pub mod error;
pub mod geometry;
pub mod oracle;
pub mod potential;
pub mod pullback;
pub mod rng;
pub mod scheme;
pub mod stencil;
pub mod study;
pub mod surface;
