//! Application kernels and their host-side references.

pub mod cost;
pub mod data;
pub mod matmul;
pub mod stencil;

pub use data::{Grid, Matrix};
