//! Fits the timing and cost-model constants to the published measurements.
//!
//! * direct writes: least squares of hop latency and per-word cost to the
//!   eleven latency points (setup held at its configured value);
//! * DMA: setup and rate solved exactly from the adjacent-core crossover size
//!   and the large-message plateau;
//! * matmul: least squares of per-row overhead and per-element store cost to
//!   the single-core GFLOPS table;
//! * stencil: per-stripe overhead solved from the no-communication rate.

use serde::{Deserialize, Serialize};

use crate::bench::reference::{
    CROSSOVER_BYTES, DMA_PLATEAU_BYTES_PER_S, ELINK_BYTES_PER_S, ELINK_RAW_BYTES_PER_S, LATENCY_MESSAGE_BYTES,
    LATENCY_PAIRS, MATMUL_SINGLE_CORE, STENCIL_NO_COMM_GFLOPS,
};
use crate::config::MachineConfig;
use crate::error::{Result, SimError};

/// Size of the aggregated DMA message the plateau is measured on.
pub const PLATEAU_MESSAGE_BYTES: f64 = 65536.0;

/// Per-core block used to fit the stencil stripe overhead.
pub const STENCIL_FIT_BLOCK: (usize, usize) = (80, 20);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub hop_latency_cycles: f64,
    pub direct_write_issue_cycles: f64,
    pub latency_max_rel_error: f64,
    pub dma_setup_cycles: f64,
    pub dma_bytes_per_cycle: f64,
    pub row_loop_overhead_cycles: f64,
    pub store_row_cycles: f64,
    pub matmul_max_rel_error: f64,
    pub stripe_overhead_cycles: f64,
    pub transaction_overhead_factor: f64,
}

/// Ordinary least squares y = slope·x + intercept.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    (slope, (sy - slope * sx) / n)
}

/// Least squares for y = a·u + b·v (no intercept).
fn two_term_fit(rows: &[(f64, f64, f64)]) -> (f64, f64) {
    let (mut uu, mut uv, mut vv, mut uy, mut vy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(u, v, y) in rows {
        uu += u * u;
        uv += u * v;
        vv += v * v;
        uy += u * y;
        vy += v * y;
    }
    let det = uu * vv - uv * uv;
    ((uy * vv - vy * uv) / det, (uu * vy - uv * uy) / det)
}

pub fn calibrate(base: &MachineConfig) -> Result<(MachineConfig, CalibrationReport)> {
    let mut cfg = base.clone();
    let clock = cfg.clock_hz();
    let ns_per_cycle = 1e9 / clock;
    let words = LATENCY_MESSAGE_BYTES as f64 / 4.0;
    let setup = cfg.timing.direct_write_setup_cycles;

    // Each point: words × per-transfer cycles = setup + hop·d + words·per_word.
    let pts: Vec<(f64, f64)> = LATENCY_PAIRS
        .iter()
        .map(|&(_, _, d, ns)| (d as f64, ns / ns_per_cycle * words - setup))
        .collect();
    let (hop, intercept) = linear_fit(&pts);
    let per_word = intercept / words;
    if hop < 0.0 || per_word <= 0.0 {
        return Err(SimError::Config("latency fit produced negative constants".into()));
    }
    cfg.timing.hop_latency_cycles = hop;
    cfg.timing.direct_write_issue_cycles = per_word;
    let latency_max_rel_error = LATENCY_PAIRS
        .iter()
        .map(|&(_, _, d, ns)| {
            let model = (setup + hop * d as f64 + words * per_word) / words * ns_per_cycle;
            (model - ns).abs() / ns
        })
        .fold(0.0, f64::max);

    // DMA: D + X·q = setup + (X/4)·per_word at the crossover X (adjacent
    // cores, hop terms cancel), and P/(D + hop + P·q) = plateau rate.
    let x = CROSSOVER_BYTES;
    let p = PLATEAU_MESSAGE_BYTES;
    let plateau_cycles = p / (DMA_PLATEAU_BYTES_PER_S / clock);
    let dw_at_x = setup + x / 4.0 * per_word;
    let q = (plateau_cycles - hop - dw_at_x) / (p - x);
    let dma_setup = dw_at_x - x * q;
    if q <= 0.0 || dma_setup < 0.0 {
        return Err(SimError::Config("DMA targets are inconsistent".into()));
    }
    cfg.timing.dma_setup_cycles = dma_setup;
    cfg.timing.dma_bytes_per_cycle = 1.0 / q;

    // Matmul: cycles(s) − s³·(macro/width) = s·overhead + s²·(store/width).
    let mm = &cfg.cost_models.matmul;
    let per_fma = mm.cycles_per_macro / mm.macro_width as f64;
    let rows: Vec<(f64, f64, f64)> = MATMUL_SINGLE_CORE
        .iter()
        .map(|&(s, g)| {
            let s = s as f64;
            let cycles = 2.0 * s * s * s * clock / (g * 1e9);
            (s, s * s, cycles - s * s * s * per_fma)
        })
        .collect();
    let (overhead, store_per_elem) = two_term_fit(&rows);
    cfg.cost_models.matmul.row_loop_overhead_cycles = overhead;
    cfg.cost_models.matmul.store_row_cycles = store_per_elem * cfg.cost_models.matmul.macro_width as f64;
    let matmul_max_rel_error = MATMUL_SINGLE_CORE
        .iter()
        .map(|&(s, g)| {
            let model = crate::kernels::cost::matmul_gflops(s, s, s, &cfg.cost_models.matmul, clock);
            (model - g).abs() / g
        })
        .fold(0.0, f64::max);

    // Stencil: one stripe of the fit block must run at the per-core share of
    // the no-communication aggregate.
    let st = &cfg.cost_models.stencil;
    let (r, c) = STENCIL_FIT_BLOCK;
    let flops = (r * c) as f64 * st.fmadds_per_point * st.flops_per_fmadd;
    let per_core = STENCIL_NO_COMM_GFLOPS * 1e9 / 64.0;
    let target_cycles = flops / per_core * clock;
    let stripes = c.div_ceil(st.stripe_width) as f64;
    let pairs = r.div_ceil(2) as f64;
    let body = stripes * pairs * (st.fmadds_per_stripe_pair + st.loop_penalty_cycles);
    cfg.cost_models.stencil.stripe_overhead_cycles = ((target_cycles - body) / stripes).max(0.0);

    cfg.elink.transaction_overhead_factor = ELINK_RAW_BYTES_PER_S / ELINK_BYTES_PER_S;

    let report = CalibrationReport {
        hop_latency_cycles: hop,
        direct_write_issue_cycles: per_word,
        latency_max_rel_error,
        dma_setup_cycles: dma_setup,
        dma_bytes_per_cycle: 1.0 / q,
        row_loop_overhead_cycles: overhead,
        store_row_cycles: cfg.cost_models.matmul.store_row_cycles,
        matmul_max_rel_error,
        stripe_overhead_cycles: cfg.cost_models.stencil.stripe_overhead_cycles,
        transaction_overhead_factor: cfg.elink.transaction_overhead_factor,
    };
    cfg.validate()?;
    Ok((cfg, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_fit_exact_line() {
        let (m, b) = linear_fit(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]);
        assert!((m - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn default_config_is_the_calibrated_one() {
        let base = MachineConfig::default();
        let (fitted, report) = calibrate(&base).unwrap();
        assert_eq!(fitted, base, "bundled config drifted from the calibration fit");
        assert!(report.latency_max_rel_error < 0.02);
        assert!(report.matmul_max_rel_error < 0.02);
    }
}
