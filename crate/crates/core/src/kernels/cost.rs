//! Cycle-cost models of the hand-written inner kernels.

use crate::config::{MatmulCostModel, StencilCostModel};
use crate::error::{Result, SimError};

/// Cycles for one sweep of a `rows × cols` block. The block is processed as
/// 20-wide column stripes (a partial stripe costs a full one), two rows per
/// unrolled loop body.
pub fn stencil_core_time(rows: usize, cols: usize, m: &StencilCostModel) -> f64 {
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let stripes = cols.div_ceil(m.stripe_width) as f64;
    let pairs = rows.div_ceil(2) as f64;
    stripes * (pairs * (m.fmadds_per_stripe_pair + m.loop_penalty_cycles) + m.stripe_overhead_cycles)
}

pub fn stencil_flops(rows: usize, cols: usize, m: &StencilCostModel) -> f64 {
    (rows * cols) as f64 * m.fmadds_per_point * m.flops_per_fmadd
}

pub fn stencil_gflops(rows: usize, cols: usize, m: &StencilCostModel, clock_hz: f64) -> f64 {
    stencil_flops(rows, cols, m) / stencil_core_time(rows, cols, m) * clock_hz / 1e9
}

/// Cycles for C(m×k) += A(m×n)·B(n×k) on one core. Each (row of A, inner
/// index) pair runs the macro over a row of length k; each row of C adds
/// loop overhead and its store.
pub fn matmul_core_time(m: usize, n: usize, k: usize, model: &MatmulCostModel) -> Result<f64> {
    if m == 0 || n == 0 || k == 0 {
        return Err(SimError::Domain(format!("empty product {m}x{n}x{k}")));
    }
    if m.max(n).max(k) > model.max_block {
        return Err(SimError::Capacity(format!(
            "{m}x{n}x{k} exceeds the single-core limit of {}",
            model.max_block
        )));
    }
    let width = model.macro_width as f64;
    let macro_cycles = model.cycles_per_macro * k as f64 / width;
    let row_cycles = model.row_loop_overhead_cycles + model.store_row_cycles * k as f64 / width;
    Ok((m * n) as f64 * macro_cycles + m as f64 * row_cycles)
}

pub fn matmul_flops(m: usize, n: usize, k: usize) -> f64 {
    2.0 * (m * n * k) as f64
}

/// Single-core rate implied by the cost model; NaN if the shape is invalid.
pub fn matmul_gflops(m: usize, n: usize, k: usize, model: &MatmulCostModel, clock_hz: f64) -> f64 {
    match matmul_core_time(m, n, k, model) {
        Ok(c) => matmul_flops(m, n, k) / c * clock_hz / 1e9,
        Err(_) => f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::MachineConfig;

    #[test]
    fn stencil_no_overhead_is_peak() {
        let mut m = MachineConfig::default().cost_models.stencil;
        m.loop_penalty_cycles = 0.0;
        m.stripe_overhead_cycles = 0.0;
        // 2 flops per cycle exactly.
        let c = stencil_core_time(40, 20, &m);
        assert_eq!(stencil_flops(40, 20, &m) / c, 2.0);
    }

    #[test]
    fn stencil_80x20_in_band() {
        let cfg = MachineConfig::default();
        let g = stencil_gflops(80, 20, &cfg.cost_models.stencil, cfg.clock_hz());
        assert!((0.97..=1.14).contains(&g), "{g}");
    }

    #[test]
    fn partial_stripe_costs_a_full_stripe() {
        let m = MachineConfig::default().cost_models.stencil;
        assert_eq!(stencil_core_time(10, 21, &m), stencil_core_time(10, 40, &m));
    }

    #[test]
    fn matmul_no_overhead_is_peak() {
        let mut m = MachineConfig::default().cost_models.matmul;
        m.row_loop_overhead_cycles = 0.0;
        m.store_row_cycles = 0.0;
        let c = matmul_core_time(32, 32, 32, &m).unwrap();
        assert_eq!(matmul_flops(32, 32, 32) / c, 2.0);
    }

    #[test]
    fn matmul_capacity() {
        let m = MachineConfig::default().cost_models.matmul;
        assert!(matches!(matmul_core_time(33, 8, 8, &m), Err(SimError::Capacity(_))));
    }
}
