//! Machine description loaded from the global JSON config.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::mesh::Coord;

/// Versioned default configuration shipped with the crate.
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../config/default.json");

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineConfig {
    #[serde(default = "current_version")]
    pub version: u32,
    pub mesh: MeshConfig,
    pub timing: TimingModel,
    #[serde(default)]
    pub memory: MemoryConfig,
    pub elink: ELinkConfig,
    pub cost_models: CostModels,
}

fn current_version() -> u32 {
    CONFIG_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub rows: usize,
    pub cols: usize,
    pub clock_hz: f64,
}

/// Calibrated timing constants, all in core clock cycles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingModel {
    pub hop_latency_cycles: f64,
    /// Cost per 32-bit word of a direct (store-instruction) write.
    pub direct_write_issue_cycles: f64,
    pub direct_write_setup_cycles: f64,
    /// Cost of starting a freshly programmed DMA descriptor.
    pub dma_setup_cycles: f64,
    /// Effective neighbor-write payload rate.
    pub dma_bytes_per_cycle: f64,
    /// Start cost of a descriptor that is already resident in the DMA engine.
    pub dma_prepared_start_cycles: f64,
    /// Cost of following a chain link to a resident descriptor.
    pub dma_chain_link_cycles: f64,
    pub sync_flag_poll_cycles: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryConfig {
    pub bank_count: usize,
    pub bank_bytes: usize,
    pub shared_bytes: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            bank_count: 4,
            bank_bytes: 8192,
            shared_bytes: 32 << 20,
        }
    }
}

impl MemoryConfig {
    pub fn local_bytes(&self) -> usize {
        self.bank_count * self.bank_bytes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arbitration {
    /// Deterministic proportional-share exit arbiter with route-derived weights.
    ProportionalShare,
    /// Strict priority for traffic already on the network at every merge point.
    ThroughTrafficPriority,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ELinkConfig {
    pub link_bytes_per_cycle: f64,
    pub transaction_overhead_factor: f64,
    pub exit_coord: Coord,
    pub arbitration: Arbitration,
    /// Weight multiplier per column hop between a writer and the exit column.
    pub column_decay: f64,
    /// Weight multiplier per unit of row distance × column distance.
    pub cross_decay: f64,
    /// Weight multiplier per row beyond `fair_trunk_rows` along the exit column.
    pub deep_row_decay: f64,
    pub fair_trunk_rows: usize,
}

impl ELinkConfig {
    /// Payload bytes per cycle after framing overhead.
    pub fn payload_bytes_per_cycle(&self) -> f64 {
        self.link_bytes_per_cycle / self.transaction_overhead_factor
    }

    /// Link cycles occupied by one 4-byte write transaction.
    pub fn transaction_cycles(&self) -> f64 {
        4.0 * self.transaction_overhead_factor / self.link_bytes_per_cycle
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModels {
    pub stencil: StencilCostModel,
    pub matmul: MatmulCostModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StencilCostModel {
    pub stripe_width: usize,
    pub fmadds_per_stripe_pair: f64,
    pub loop_penalty_cycles: f64,
    /// Per-stripe setup (boundary register loads, pointer arithmetic) per sweep.
    pub stripe_overhead_cycles: f64,
    pub flops_per_fmadd: f64,
    pub fmadds_per_point: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatmulCostModel {
    pub cycles_per_macro: f64,
    pub flops_per_macro: f64,
    /// Row length the macro cost refers to.
    pub macro_width: usize,
    pub row_loop_overhead_cycles: f64,
    /// Cost of storing one full macro-width row of C.
    pub store_row_cycles: f64,
    pub max_block: usize,
}

impl Default for MachineConfig {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_CONFIG_JSON).expect("bundled default config is valid")
    }
}

impl MachineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: MachineConfig =
            serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn clock_hz(&self) -> f64 {
        self.mesh.clock_hz
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if self.version != CONFIG_VERSION {
            return bad(&format!("unsupported config version {}", self.version));
        }
        if self.mesh.rows == 0 || self.mesh.cols == 0 {
            return bad("mesh must have at least one row and one column");
        }
        if self.mesh.rows > 24 || self.mesh.cols > 24 {
            return bad("mesh exceeds the global address space (max 24x24)");
        }
        if !(self.mesh.clock_hz > 0.0 && self.mesh.clock_hz.is_finite()) {
            return bad("clock_hz must be positive");
        }
        let t = &self.timing;
        let fields = [
            t.hop_latency_cycles,
            t.direct_write_issue_cycles,
            t.direct_write_setup_cycles,
            t.dma_setup_cycles,
            t.dma_bytes_per_cycle,
            t.dma_prepared_start_cycles,
            t.dma_chain_link_cycles,
            t.sync_flag_poll_cycles,
        ];
        if fields.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("timing fields must be finite and non-negative");
        }
        if !(t.dma_bytes_per_cycle > 0.0 && t.dma_bytes_per_cycle <= 8.0) {
            return bad("dma_bytes_per_cycle must lie in (0, 8]");
        }
        let m = &self.memory;
        if m.bank_count == 0 || m.bank_bytes == 0 || m.local_bytes() > 1 << 20 {
            return bad("local memory must be non-empty and at most 1 MB");
        }
        if m.shared_bytes == 0 || m.shared_bytes > 32 << 20 {
            return bad("shared region must be non-empty and at most 32 MB");
        }
        let e = &self.elink;
        if !(e.link_bytes_per_cycle > 0.0) || !(e.transaction_overhead_factor >= 1.0) {
            return bad("elink rate must be positive and overhead factor at least 1");
        }
        if e.exit_coord.row >= self.mesh.rows || e.exit_coord.col >= self.mesh.cols {
            return bad("elink exit_coord outside mesh");
        }
        for d in [e.column_decay, e.cross_decay, e.deep_row_decay] {
            if !(d > 0.0 && d <= 1.0) {
                return bad("elink decay factors must lie in (0, 1]");
            }
        }
        let s = &self.cost_models.stencil;
        if s.stripe_width == 0 || s.fmadds_per_stripe_pair <= 0.0 || s.flops_per_fmadd <= 0.0 {
            return bad("stencil cost model must have positive stripe width and FMADD counts");
        }
        if s.loop_penalty_cycles < 0.0 || s.stripe_overhead_cycles < 0.0 {
            return bad("stencil overheads must be non-negative");
        }
        let mm = &self.cost_models.matmul;
        if mm.cycles_per_macro <= 0.0 || mm.macro_width == 0 || mm.max_block == 0 {
            return bad("matmul cost model must be positive");
        }
        if mm.flops_per_macro > 2.0 * mm.cycles_per_macro {
            return bad("matmul inner kernel cannot exceed 2 flops/cycle");
        }
        if mm.row_loop_overhead_cycles < 0.0 || mm.store_row_cycles < 0.0 {
            return bad("matmul overheads must be non-negative");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_default_validates() {
        MachineConfig::default().validate().unwrap();
    }

    #[test]
    fn json_round_trip() {
        let cfg = MachineConfig::default();
        let back = MachineConfig::from_json(&cfg.to_json_pretty()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn rejects_fast_dma() {
        let mut cfg = MachineConfig::default();
        cfg.timing.dma_bytes_per_cycle = 9.0;
        assert!(matches!(cfg.validate(), Err(SimError::Config(_))));
    }

    #[test]
    fn rejects_unknown_fields() {
        let text = DEFAULT_CONFIG_JSON.replacen("\"mesh\"", "\"bogus\": 1, \"mesh\"", 1);
        assert!(MachineConfig::from_json(&text).is_err());
    }
}
