use thiserror::Error;

use crate::mesh::Coord;

/// Errors raised by configuration, the machine model and the simulation engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("coordinate ({row},{col}) outside {rows}x{cols} mesh")]
    OutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("address error: {0}")]
    Address(String),
    #[error("unmapped address {0:#010x}")]
    Unmapped(u32),
    #[error("DMA channel {channel} busy on core {core}")]
    DmaBusy { core: Coord, channel: u8 },
    #[error("invalid DMA descriptor: {0}")]
    Descriptor(String),
    #[error("timer error: {0}")]
    Timer(String),
    #[error("core {core} is not a participant of barrier {barrier}")]
    Membership { core: Coord, barrier: usize },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("layout error: {0}")]
    Layout(String),
    #[error("capacity error: {0}")]
    Capacity(String),
    #[error("kernel on core {core} faulted: {source}")]
    KernelFault {
        core: Coord,
        #[source]
        source: Box<SimError>,
    },
    #[error("deadlock at {time_ns:.1} ns: blocked cores {blocked:?}")]
    Deadlock {
        time_ns: f64,
        blocked: Vec<(Coord, String)>,
    },
}

pub type Result<T> = std::result::Result<T, SimError>;
