//! Published measurements the model is compared against, each with the
//! tolerance used by the acceptance checks.

use serde::{Deserialize, Serialize};

use crate::mesh::Coord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tolerance {
    /// Relative, e.g. 0.05 for ±5%.
    Relative(f64),
    Absolute(f64),
    /// Closed interval.
    Band(f64, f64),
}

impl Tolerance {
    pub fn accepts(&self, reference: f64, measured: f64) -> bool {
        if !measured.is_finite() {
            return false;
        }
        match *self {
            Tolerance::Relative(r) => (measured - reference).abs() <= r * reference.abs() + 1e-12,
            Tolerance::Absolute(a) => (measured - reference).abs() <= a + 1e-12,
            Tolerance::Band(lo, hi) => (lo - 1e-9..=hi + 1e-9).contains(&measured),
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            Tolerance::Relative(r) => format!("±{}%", r * 100.0),
            Tolerance::Absolute(a) => format!("±{a}"),
            Tolerance::Band(lo, hi) => format!("[{lo}, {hi}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub id: String,
    /// Short tag naming the published measurement the number belongs to.
    pub source: String,
    pub description: String,
    pub value: f64,
    pub unit: String,
    pub tolerance: Tolerance,
    pub mandatory: bool,
}

/// Mesh latency: (source, destination, Manhattan distance, ns per 4-byte transfer).
pub const LATENCY_PAIRS: [(Coord, Coord, usize, f64); 11] = [
    (Coord::new(0, 0), Coord::new(0, 1), 1, 11.12),
    (Coord::new(0, 0), Coord::new(1, 0), 1, 11.12),
    (Coord::new(0, 0), Coord::new(0, 2), 2, 11.14),
    (Coord::new(0, 0), Coord::new(1, 1), 2, 11.14),
    (Coord::new(0, 0), Coord::new(1, 2), 3, 11.19),
    (Coord::new(0, 0), Coord::new(3, 0), 3, 11.19),
    (Coord::new(0, 0), Coord::new(0, 4), 4, 11.38),
    (Coord::new(0, 0), Coord::new(1, 3), 4, 11.38),
    (Coord::new(0, 0), Coord::new(3, 3), 5, 11.62),
    (Coord::new(0, 0), Coord::new(4, 4), 6, 11.86),
    (Coord::new(0, 0), Coord::new(7, 7), 14, 12.57),
];

/// Message size behind each latency point.
pub const LATENCY_MESSAGE_BYTES: u64 = 80;

pub const DMA_PLATEAU_BYTES_PER_S: f64 = 2.0e9;
pub const CROSSOVER_BYTES: f64 = 500.0;
pub const ELINK_BYTES_PER_S: f64 = 150.0e6;
pub const ELINK_RAW_BYTES_PER_S: f64 = 600.0e6;

/// Four eLink writers: completed iterations and utilization share.
pub const ELINK_FOUR_WRITERS: [(Coord, u64, f64); 4] = [
    (Coord::new(0, 0), 61037, 0.41),
    (Coord::new(0, 1), 48829, 0.33),
    (Coord::new(1, 0), 24414, 0.17),
    (Coord::new(1, 1), 12207, 0.08),
];

pub const ELINK_EXIT_COLUMN_SHARE: f64 = 0.187;
pub const ELINK_ZERO_ITERATION_CORES: usize = 24;

pub const STENCIL_NO_COMM_GFLOPS: f64 = 72.83;
pub const STENCIL_HALO_GFLOPS: f64 = 63.6;
pub const STENCIL_SINGLE_CORE_BAND: (f64, f64) = (0.97, 1.14);

/// Single-core matmul: (block size, GFLOPS).
pub const MATMUL_SINGLE_CORE: [(usize, f64); 5] = [(8, 0.85), (16, 1.07), (20, 1.11), (24, 1.12), (32, 1.15)];

/// On-chip Cannon: (per-core block, GFLOPS on 2×2, 4×4, 8×8).
pub const MATMUL_ON_CHIP: [(usize, [f64; 3]); 5] = [
    (8, [1.25, 5.07, 20.30]),
    (16, [3.12, 12.76, 51.41]),
    (20, [3.58, 14.36, 57.62]),
    (24, [3.84, 15.43, 62.17]),
    (32, [4.06, 16.27, 65.32]),
];

/// Off-chip matmul: (size, GFLOPS, compute %, shared-memory transfer %).
pub const MATMUL_OFF_CHIP: [(usize, f64, f64, f64); 3] = [
    (512, 8.32, 12.8, 87.2),
    (1024, 8.52, 13.1, 86.9),
    (1536, 6.34, 10.9, 89.1),
];

pub const COMPUTE_TO_TRANSFER_BAND: (f64, f64) = (6.0, 7.5);

fn entry(id: &str, source: &str, description: &str, value: f64, unit: &str, tolerance: Tolerance) -> ReferenceEntry {
    ReferenceEntry {
        id: id.to_string(),
        source: source.to_string(),
        description: description.to_string(),
        value,
        unit: unit.to_string(),
        tolerance,
        mandatory: true,
    }
}

/// Every check the report knows about.
pub fn reference_table() -> Vec<ReferenceEntry> {
    let mut t = Vec::new();
    for (a, b, d, ns) in LATENCY_PAIRS {
        t.push(entry(
            &format!("latency.{}_{}-{}_{}", a.row, a.col, b.row, b.col),
            "latency-table",
            &format!("80-byte direct write {a}->{b} (distance {d}), ns per transfer"),
            ns,
            "ns",
            Tolerance::Relative(0.05),
        ));
    }
    t.push(entry(
        "bandwidth.dma_plateau",
        "dma-bandwidth-curve",
        "DMA bandwidth at 64 KB",
        DMA_PLATEAU_BYTES_PER_S / 1e9,
        "GB/s",
        Tolerance::Relative(0.05),
    ));
    t.push(entry(
        "bandwidth.crossover",
        "transfer-time-curve",
        "DMA vs direct-write crossover size",
        CROSSOVER_BYTES,
        "bytes",
        Tolerance::Band(256.0, 1024.0),
    ));
    t.push(entry(
        "bandwidth.monotone",
        "dma-bandwidth-curve",
        "both bandwidth curves non-decreasing in size (1 = yes)",
        1.0,
        "bool",
        Tolerance::Absolute(0.0),
    ));
    t.push(entry(
        "elink.single_writer",
        "elink-throughput",
        "single-writer sustained off-chip write rate",
        ELINK_BYTES_PER_S / 1e6,
        "MB/s",
        Tolerance::Relative(0.05),
    ));
    t.push(entry(
        "elink.four_writers_sum",
        "elink-four-writers",
        "sum of four-writer utilizations",
        0.99,
        "fraction",
        Tolerance::Band(0.98, 1.0),
    ));
    t.push(entry(
        "elink.four_writers_ordered",
        "elink-four-writers",
        "four-writer shares pairwise distinct, row-0 writers above row-1 writers (1 = yes)",
        1.0,
        "bool",
        Tolerance::Absolute(0.0),
    ));
    for r in 0..4 {
        t.push(entry(
            &format!("elink.exit_column_{r}_7"),
            "elink-all-writers",
            &format!("64 writers: utilization of ({r},7)"),
            ELINK_EXIT_COLUMN_SHARE,
            "fraction",
            Tolerance::Absolute(0.02),
        ));
    }
    t.push(entry(
        "elink.zero_iteration_cores",
        "elink-all-writers",
        "64 writers: cores with zero completed iterations (at least 20)",
        ELINK_ZERO_ITERATION_CORES as f64,
        "cores",
        Tolerance::Band(20.0, 64.0),
    ));
    t.push(entry(
        "stencil.no_comm",
        "stencil-throughput",
        "80x20 per core, 64 cores, no communication",
        STENCIL_NO_COMM_GFLOPS,
        "GFLOPS",
        Tolerance::Relative(0.10),
    ));
    t.push(entry(
        "stencil.halo",
        "stencil-throughput",
        "80x20 per core, 64 cores, with halo exchange",
        STENCIL_HALO_GFLOPS,
        "GFLOPS",
        Tolerance::Relative(0.15),
    ));
    t.push(entry(
        "stencil.single_core",
        "stencil-single-core",
        "single core 80x20",
        1.13,
        "GFLOPS",
        Tolerance::Band(STENCIL_SINGLE_CORE_BAND.0, STENCIL_SINGLE_CORE_BAND.1),
    ));
    for (s, g) in MATMUL_SINGLE_CORE {
        t.push(entry(
            &format!("matmul.single_{s}"),
            "matmul-single-core",
            &format!("single core {s}x{s}x{s}"),
            g,
            "GFLOPS",
            Tolerance::Relative(0.05),
        ));
    }
    for (s, g) in MATMUL_ON_CHIP {
        for (k, (q, v)) in [2usize, 4, 8].into_iter().zip(g).enumerate() {
            let mut e = entry(
                &format!("matmul.cannon_{q}x{q}_{s}"),
                "matmul-on-chip",
                &format!("Cannon {q}x{q} cores, {s}x{s} per core"),
                v,
                "GFLOPS",
                Tolerance::Relative(0.10),
            );
            // Only the 8×8 column is an acceptance criterion.
            e.mandatory = k == 2;
            t.push(e);
        }
    }
    for (n, g, _comp, xfer) in MATMUL_OFF_CHIP {
        let mandatory = n == 512;
        let mut e = entry(
            &format!("matmul.offchip_{n}"),
            "matmul-off-chip",
            &format!("off-chip {n}x{n}x{n}"),
            g,
            "GFLOPS",
            Tolerance::Relative(0.10),
        );
        e.mandatory = mandatory;
        t.push(e);
        let mut e = entry(
            &format!("matmul.offchip_{n}_transfer_share"),
            "matmul-off-chip",
            &format!("off-chip {n}: shared-memory transfer share"),
            xfer,
            "percent",
            Tolerance::Absolute(3.0),
        );
        e.mandatory = mandatory;
        t.push(e);
    }
    t.push(entry(
        "matmul.compute_transfer_ratio",
        "matmul-transfer-ratio",
        "block-pair transfer time over block compute time",
        6.5,
        "ratio",
        Tolerance::Band(COMPUTE_TO_TRANSFER_BAND.0, COMPUTE_TO_TRANSFER_BAND.1),
    ));
    t.push(entry(
        "scaling.weak_monotone",
        "weak-scaling",
        "weak-scaling time non-decreasing in core count (1 = yes)",
        1.0,
        "bool",
        Tolerance::Absolute(0.0),
    ));
    t.push(entry(
        "scaling.weak_64_over_8",
        "weak-scaling",
        "weak-scaling time(64)/time(8)",
        1.0,
        "ratio",
        Tolerance::Band(0.0, 1.10),
    ));
    t.push(entry(
        "scaling.strong_min_speedup",
        "strong-scaling",
        "minimum per-doubling speedup 1->4 cores at the largest size",
        2.0,
        "ratio",
        Tolerance::Band(1.9, 2.0),
    ));
    t.push(entry(
        "scaling.strong_size_monotone",
        "strong-scaling",
        "4-core speedup non-decreasing in problem size (1 = yes)",
        1.0,
        "bool",
        Tolerance::Absolute(0.0),
    ));
    t
}

pub fn lookup(id: &str) -> Option<ReferenceEntry> {
    reference_table().into_iter().find(|e| e.id == id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_unique_and_tolerances_set() {
        let t = reference_table();
        let mut ids: Vec<_> = t.iter().map(|e| e.id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), t.len());
        assert!(t.iter().all(|e| !e.source.is_empty()));
    }

    #[test]
    fn four_writer_iterations_match_shares() {
        let total: u64 = ELINK_FOUR_WRITERS.iter().map(|w| w.1).sum();
        for (_, it, share) in ELINK_FOUR_WRITERS {
            assert!((it as f64 / total as f64 - share).abs() < 0.01);
        }
    }

    #[test]
    fn tolerance_kinds() {
        assert!(Tolerance::Relative(0.05).accepts(100.0, 104.9));
        assert!(!Tolerance::Relative(0.05).accepts(100.0, 105.1));
        assert!(Tolerance::Band(1.0, 2.0).accepts(0.0, 1.5));
        assert!(!Tolerance::Absolute(0.02).accepts(0.187, 0.21));
    }
}
