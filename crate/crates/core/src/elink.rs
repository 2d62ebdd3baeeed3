//! The off-chip link and the arbitration of contending mesh writers.
//!
//! Every 4-byte write transaction occupies `transaction_overhead_factor × 4`
//! link-byte slots. Under contention the exit arbiter grants slots in
//! proportion to a per-writer weight derived from the writer's route to the
//! exit corner (stride scheduling, so the schedule is fully deterministic).
//! Weights depend only on position, never on which other writers are active.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::config::{Arbitration, MachineConfig};
use crate::error::Result;
use crate::mesh::{Coord, Mesh};

const STRIDE_SCALE: f64 = (1u128 << 60) as f64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilizationRecord {
    pub core: Coord,
    pub completed_iterations: u64,
    pub transactions: u64,
    pub utilization: f64,
}

/// Outcome of a sustained-write contention run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentionOutcome {
    pub records: Vec<UtilizationRecord>,
    pub link_slots: u64,
    pub duration_s: f64,
    pub payload_bytes_per_s: f64,
}

/// Arbitration weight of a writer at `core`.
pub fn writer_weight(cfg: &MachineConfig, core: Coord) -> f64 {
    let e = &cfg.elink;
    let rd = core.row.abs_diff(e.exit_coord.row) as f64;
    let cd = core.col.abs_diff(e.exit_coord.col) as f64;
    let deep = (rd - e.fair_trunk_rows as f64 + 1.0).max(0.0);
    e.column_decay.powf(cd) * e.cross_decay.powf(rd * cd) * e.deep_row_decay.powf(deep)
}

/// Stride (inverse weight) of each writer in fixed point.
fn strides(cfg: &MachineConfig, writers: &[Coord]) -> Vec<u128> {
    match cfg.elink.arbitration {
        Arbitration::ProportionalShare => writers
            .iter()
            .map(|&c| ((STRIDE_SCALE / writer_weight(cfg, c)).round() as u128).max(1))
            .collect(),
        Arbitration::ThroughTrafficPriority => {
            // The writer whose traffic passes the most merge points is never
            // blocked; everyone else only gets slots it leaves idle, which a
            // sustained writer never does.
            let exit = cfg.elink.exit_coord;
            let hops = |c: &Coord| c.row.abs_diff(exit.row) + c.col.abs_diff(exit.col);
            let top = writers
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| hops(a).cmp(&hops(b)).then(b.cmp(a)))
                .map(|(i, _)| i);
            (0..writers.len())
                .map(|i| if Some(i) == top { 1 } else { u128::MAX / 2 })
                .collect()
        }
    }
}

fn sorted_unique(writers: &[Coord]) -> Vec<Coord> {
    let mut w = writers.to_vec();
    w.sort();
    w.dedup();
    w
}

/// Link slots available in `duration_s`.
pub fn link_slots(cfg: &MachineConfig, duration_s: f64) -> u64 {
    (duration_s * cfg.clock_hz() / cfg.elink.transaction_cycles()).floor() as u64
}

/// Grant counts over `slots` slots computed in closed form: the first `slots`
/// grants of a stride schedule are the `slots` smallest pass values.
pub fn grants_closed_form(strides: &[u128], slots: u64) -> Vec<u64> {
    if strides.is_empty() || slots == 0 {
        return vec![0; strides.len()];
    }
    let count = |t: u128| -> u128 { strides.iter().map(|s| t / s).sum() };
    let min_stride = *strides.iter().min().unwrap();
    let (mut lo, mut hi) = (0u128, min_stride * slots as u128);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if count(mid) >= slots as u128 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut grants: Vec<u64> = strides.iter().map(|s| ((hi - 1) / s) as u64).collect();
    let mut left = slots - grants.iter().sum::<u64>();
    for (g, s) in grants.iter_mut().zip(strides) {
        if left == 0 {
            break;
        }
        if hi % s == 0 {
            *g += 1;
            left -= 1;
        }
    }
    grants
}

/// Slot-by-slot stride arbitration; ties go to the earlier writer.
pub fn grants_slot_by_slot(strides: &[u128], slots: u64) -> Vec<u64> {
    let mut heap: BinaryHeap<Reverse<(u128, usize)>> =
        strides.iter().enumerate().map(|(i, &s)| Reverse((s, i))).collect();
    let mut grants = vec![0u64; strides.len()];
    for _ in 0..slots {
        let Some(Reverse((pass, i))) = heap.pop() else { break };
        grants[i] += 1;
        heap.push(Reverse((pass + strides[i], i)));
    }
    grants
}

fn records(writers: &[Coord], grants: &[u64], block_bytes: u64, slots: u64) -> Vec<UtilizationRecord> {
    let per_block = block_bytes.div_ceil(4).max(1);
    writers
        .iter()
        .zip(grants)
        .map(|(&core, &g)| {
            let iters = g / per_block;
            UtilizationRecord {
                core,
                completed_iterations: iters,
                transactions: g,
                utilization: if slots == 0 { 0.0 } else { (iters * per_block) as f64 / slots as f64 },
            }
        })
        .collect()
}

/// Every writer repeatedly writes `block_bytes` blocks to shared memory for
/// `duration_s` simulated seconds. Records are ordered by coordinate.
pub fn contention_experiment(
    cfg: &MachineConfig,
    writers: &[Coord],
    block_bytes: u64,
    duration_s: f64,
) -> Result<ContentionOutcome> {
    let mesh = Mesh::new(cfg.mesh.rows, cfg.mesh.cols)?;
    for &w in writers {
        mesh.check(w)?;
    }
    if !(duration_s > 0.0) {
        return Err(crate::error::SimError::Domain("duration must be positive".into()));
    }
    let writers = sorted_unique(writers);
    let slots = link_slots(cfg, duration_s);
    let grants = grants_closed_form(&strides(cfg, &writers), slots);
    let used: u64 = grants.iter().sum();
    Ok(ContentionOutcome {
        records: records(&writers, &grants, block_bytes, slots),
        link_slots: slots,
        duration_s,
        payload_bytes_per_s: used as f64 * 4.0 / duration_s,
    })
}

/// Same as [`contention_experiment`] but arbitrates every slot explicitly.
pub fn contention_experiment_stepped(
    cfg: &MachineConfig,
    writers: &[Coord],
    block_bytes: u64,
    duration_s: f64,
) -> Result<ContentionOutcome> {
    let writers = sorted_unique(writers);
    let slots = link_slots(cfg, duration_s);
    let grants = grants_slot_by_slot(&strides(cfg, &writers), slots);
    let used: u64 = grants.iter().sum();
    Ok(ContentionOutcome {
        records: records(&writers, &grants, block_bytes, slots),
        link_slots: slots,
        duration_s,
        payload_bytes_per_s: used as f64 * 4.0 / duration_s,
    })
}

/// Uncontended off-chip write: route to the exit plus one slot per transaction.
pub fn offchip_write_cycles(cfg: &MachineConfig, core: Coord, byte_count: u64) -> f64 {
    let exit = cfg.elink.exit_coord;
    let hops = core.row.abs_diff(exit.row) + core.col.abs_diff(exit.col);
    hops as f64 * cfg.timing.hop_latency_cycles
        + byte_count.div_ceil(4) as f64 * cfg.elink.transaction_cycles()
}

/// One direction of the link as a FIFO server (used inside simulations).
#[derive(Debug, Clone, Default)]
pub struct LinkChannel {
    busy_until_cycles: f64,
    pub transactions: u64,
}

impl LinkChannel {
    /// Serves a request arriving at the exit at `arrival` cycles; returns the
    /// completion time in cycles.
    pub fn serve(&mut self, cfg: &MachineConfig, arrival: f64, byte_count: u64) -> f64 {
        let n = byte_count.div_ceil(4);
        let start = arrival.max(self.busy_until_cycles);
        self.busy_until_cycles = start + n as f64 * cfg.elink.transaction_cycles();
        self.transactions += n;
        self.busy_until_cycles
    }
}
