//! Point-to-point message benchmarks run on the simulator: a ping-pong
//! between two cores, one-way time = total / (2 · repetitions).

use serde::{Deserialize, Serialize};

use crate::config::MachineConfig;
use crate::ecore::{DmaDescriptor, DmaMode};
use crate::error::{Result, SimError};
use crate::mesh::Coord;
use crate::runtime::{Ctx, Sim, SimOptions, Workgroup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DirectWrite,
    Dma,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::DirectWrite => "direct_write",
            Method::Dma => "dma",
        }
    }
}

/// Outgoing message staging area and incoming mailbox.
const SEND_BUF: u32 = 0x2000;
const INBOX: u32 = 0x4000;
/// Largest contiguous piece of a message; longer messages are repeated
/// pieces of this size (the payload content does not matter here).
pub const MAX_CHUNK: u64 = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PingPong {
    pub one_way_cycles: f64,
    pub one_way_ns: f64,
    pub bytes_per_s: f64,
}

async fn send(ctx: &Ctx, to: Coord, bytes: u64, method: Method, seq: u32) -> Result<()> {
    let chunk = bytes.min(MAX_CHUNK);
    let pieces = bytes.div_ceil(chunk);
    if bytes % chunk != 0 {
        return Err(SimError::Domain(format!(
            "message of {bytes} bytes is not a whole number of {chunk}-byte pieces"
        )));
    }
    // The last word of the final piece carries the sequence number.
    ctx.write_local_u32(SEND_BUF + chunk as u32 - 4, seq)?;
    let dst = ctx.global(to, INBOX)?;
    match method {
        Method::DirectWrite => {
            let last = ctx.read_local(SEND_BUF, chunk as usize)?;
            let mut early = last.clone();
            let n = early.len();
            early[n - 4..].fill(0);
            for p in 0..pieces {
                ctx.write(dst, if p + 1 == pieces { &last } else { &early }).await?;
            }
        }
        Method::Dma => {
            let src = ctx.my_global(SEND_BUF)?;
            let word = if chunk % 8 == 0 { 8 } else { 4 };
            let d = DmaDescriptor::block_2d(0, src, dst, word, (chunk / word as u64) as u32, pieces as u32, 0, 0)
                .with_mode(DmaMode::Blocking);
            ctx.dma_start(d).await?;
        }
    }
    Ok(())
}

/// One-way transfer time of a `bytes` message from `a` to `b` (and back).
pub fn ping_pong(cfg: &MachineConfig, a: Coord, b: Coord, bytes: u64, method: Method, reps: u32) -> Result<PingPong> {
    if bytes == 0 || bytes % 4 != 0 {
        return Err(SimError::Domain(format!("message size {bytes} must be a positive multiple of 4")));
    }
    if a == b {
        return Err(SimError::Domain("ping-pong needs two distinct cores".into()));
    }
    if reps == 0 {
        return Err(SimError::Domain("at least one repetition".into()));
    }
    let mut sim = Sim::new(cfg, &SimOptions::default())?;
    sim.mesh().check(a)?;
    sim.mesh().check(b)?;
    let group = Workgroup::at_origin(cfg.mesh.rows, cfg.mesh.cols);
    let barrier = sim.create_barrier(&[a, b])?;
    sim.spawn(a, leader_loop(sim.ctx(a, group, barrier)?, b, bytes, method, reps))?;
    sim.spawn(b, follower_loop(sim.ctx(b, group, barrier)?, a, bytes, method, reps))?;
    let summary = sim.run()?;
    let one_way_cycles = summary.end_time.cycles() / (2.0 * reps as f64);
    let one_way_ns = one_way_cycles * 1e9 / cfg.clock_hz();
    Ok(PingPong {
        one_way_cycles,
        one_way_ns,
        bytes_per_s: bytes as f64 / (one_way_ns * 1e-9),
    })
}

async fn leader_loop(ctx: Ctx, peer: Coord, bytes: u64, method: Method, reps: u32) -> Result<()> {
    let flag = INBOX + bytes.min(MAX_CHUNK) as u32 - 4;
    for r in 0..reps {
        let seq = 2 * r + 1;
        send(&ctx, peer, bytes, method, seq).await?;
        ctx.flag_wait(flag, seq + 1).await?;
    }
    Ok(())
}

async fn follower_loop(ctx: Ctx, peer: Coord, bytes: u64, method: Method, reps: u32) -> Result<()> {
    let flag = INBOX + bytes.min(MAX_CHUNK) as u32 - 4;
    for r in 0..reps {
        let seq = 2 * r + 1;
        ctx.flag_wait(flag, seq).await?;
        send(&ctx, peer, bytes, method, seq + 1).await?;
    }
    Ok(())
}

/// Amortized cost of one 4-byte word within a message, in ns.
pub fn per_word_latency_ns(cfg: &MachineConfig, a: Coord, b: Coord, bytes: u64) -> Result<f64> {
    let p = ping_pong(cfg, a, b, bytes, Method::DirectWrite, 2)?;
    Ok(p.one_way_ns / (bytes as f64 / 4.0))
}

/// Message sizes of the bandwidth sweep: powers of two from 4 B to 64 KB.
pub fn sweep_sizes() -> Vec<u64> {
    (2..=16).map(|p| 1u64 << p).collect()
}
