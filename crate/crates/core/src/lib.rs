//! Compile quantum query algorithms into span programs and back into simulated evaluators.

pub mod alg_to_sp;
pub mod circuit_ir;
pub mod cli;
pub mod error;
pub mod fixtures;
pub mod linalg;
pub mod or_compose;
pub mod span_core;
pub mod sp_compiler;
pub mod subroutines;
pub mod tol;

pub use error::{Error, Result};
