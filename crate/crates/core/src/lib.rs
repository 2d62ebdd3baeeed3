//! Deterministic discrete-event simulator of a 64-core 2D mesh
//! network-on-chip: banked scratchpads, DMA engines, a contended off-chip
//! link, and a kernel suite (5-point stencil, Cannon matrix multiply) with a
//! benchmark harness.

pub mod calibrate;
pub mod config;
pub mod ecore;
pub mod elink;
pub mod error;
pub mod kernels;
pub mod mesh;
pub mod par;
pub mod runtime;
pub mod time;
pub mod bench;

pub use config::MachineConfig;
pub use error::{Result, SimError};
pub use mesh::Coord;
pub use time::SimTime;
