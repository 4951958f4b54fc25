//! Finite element simulator for a Cahn-Hilliard-Forchheimer system with
//! solution-dependent mass and volume sources.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod chf_scheme;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod fe;
pub mod forchheimer;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod sparse;

pub use error::{Error, Result};
