//! Mesh topology, dimension-order routing and closed-form transfer timing.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::TimingModel;
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Coord {
    pub row: usize,
    pub col: usize,
}

impl Coord {
    pub const fn new(row: usize, col: usize) -> Coord {
        Coord { row, col }
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// Mesh dimensions; all topology queries are bounds-checked against it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mesh {
    pub rows: usize,
    pub cols: usize,
}

impl Mesh {
    pub fn new(rows: usize, cols: usize) -> Result<Mesh> {
        if rows == 0 || cols == 0 {
            return Err(SimError::Config(format!("empty mesh {rows}x{cols}")));
        }
        Ok(Mesh { rows, cols })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, c: Coord) -> bool {
        c.row < self.rows && c.col < self.cols
    }

    pub fn check(&self, c: Coord) -> Result<Coord> {
        if self.contains(c) {
            Ok(c)
        } else {
            Err(SimError::OutOfBounds {
                row: c.row,
                col: c.col,
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    pub fn index(&self, c: Coord) -> usize {
        c.row * self.cols + c.col
    }

    pub fn coord(&self, index: usize) -> Coord {
        Coord::new(index / self.cols, index % self.cols)
    }

    pub fn coords(&self) -> impl Iterator<Item = Coord> + '_ {
        (0..self.len()).map(|i| self.coord(i))
    }

    pub fn manhattan_distance(&self, a: Coord, b: Coord) -> Result<usize> {
        self.check(a)?;
        self.check(b)?;
        Ok(a.row.abs_diff(b.row) + a.col.abs_diff(b.col))
    }

    /// Dimension-order path from `src` to `dst`: column moves first, then row
    /// moves. The source itself is not part of the path.
    pub fn route(&self, src: Coord, dst: Coord) -> Result<Vec<Coord>> {
        self.check(src)?;
        self.check(dst)?;
        let mut hops = Vec::with_capacity(self.manhattan_distance(src, dst)?);
        let mut at = src;
        while at.col != dst.col {
            at.col = if dst.col > at.col { at.col + 1 } else { at.col - 1 };
            hops.push(at);
        }
        while at.row != dst.row {
            at.row = if dst.row > at.row { at.row + 1 } else { at.row - 1 };
            hops.push(at);
        }
        Ok(hops)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkClass {
    OnChipWrite,
    OffChipWrite,
    ReadRequest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMethod {
    DirectWrite,
    Dma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferRequest {
    pub src: Coord,
    pub dst: Coord,
    pub byte_count: u64,
    pub method: TransferMethod,
    pub network: NetworkClass,
    pub issue_time_ns: f64,
}

impl TransferRequest {
    pub fn on_chip(src: Coord, dst: Coord, byte_count: u64, method: TransferMethod) -> Self {
        TransferRequest {
            src,
            dst,
            byte_count,
            method,
            network: NetworkClass::OnChipWrite,
            issue_time_ns: 0.0,
        }
    }
}

/// Cycles for one transfer of `bytes` over `distance` hops.
///
/// Direct writes: setup + hops + one issue slot per 32-bit word.
/// DMA: descriptor setup + hops + payload at the DMA rate.
pub fn transfer_cycles(method: TransferMethod, bytes: f64, distance: usize, t: &TimingModel) -> f64 {
    let path = t.hop_latency_cycles * distance as f64;
    match method {
        TransferMethod::DirectWrite => {
            t.direct_write_setup_cycles + path + bytes / 4.0 * t.direct_write_issue_cycles
        }
        TransferMethod::Dma => t.dma_setup_cycles + path + bytes / t.dma_bytes_per_cycle,
    }
}

/// Simulated duration of `req` in nanoseconds.
pub fn transfer_time(req: &TransferRequest, mesh: &Mesh, t: &TimingModel, clock_hz: f64) -> Result<f64> {
    if req.byte_count == 0 {
        return Err(SimError::Domain("zero-byte transfer".into()));
    }
    let d = mesh.manhattan_distance(req.src, req.dst)?;
    let cycles = transfer_cycles(req.method, req.byte_count as f64, d, t);
    Ok(cycles * 1e9 / clock_hz)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Crossover {
    /// Smallest message size at which DMA is strictly faster, and stays so.
    At(u64),
    Never,
}

impl Crossover {
    pub fn bytes(self) -> Option<u64> {
        match self {
            Crossover::At(b) => Some(b),
            Crossover::Never => None,
        }
    }
}

/// Message size above which DMA beats direct writes between adjacent cores.
pub fn crossover_bytes(t: &TimingModel) -> Crossover {
    let dma = |n: u64| transfer_cycles(TransferMethod::Dma, n as f64, 1, t);
    let dw = |n: u64| transfer_cycles(TransferMethod::DirectWrite, n as f64, 1, t);
    let dma_wins = |n: u64| dma(n) < dw(n);
    // Both curves are affine in size, so a crossover exists iff DMA is cheaper
    // per byte; otherwise DMA loses (or stops winning) for large messages.
    if 1.0 / t.dma_bytes_per_cycle >= t.direct_write_issue_cycles / 4.0 {
        return Crossover::Never;
    }
    let mut hi = 1u64;
    while !dma_wins(hi) {
        hi *= 2;
        if hi > 1 << 50 {
            return Crossover::Never;
        }
    }
    let mut lo = 0u64;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if dma_wins(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Crossover::At(hi)
}
