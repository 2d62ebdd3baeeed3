//! Programming layer and discrete-event engine.

mod ctx;
mod engine;
pub mod log;

use std::future::Future;

use serde::{Deserialize, Serialize};

pub use ctx::{Ctx, Timer};
pub use engine::{BarrierId, DmaHandle, MutexId, RunSummary, Sim, SimOptions};

use crate::config::MachineConfig;
use crate::ecore::{AddressMap, Memory};
use crate::error::{Result, SimError};
use crate::mesh::{Coord, Mesh};
use crate::runtime::log::LogRecord;
use crate::time::SimTime;

/// Rectangle of cores running one parallel program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Workgroup {
    pub start: Coord,
    pub rows: usize,
    pub cols: usize,
}

impl Workgroup {
    pub fn new(start: Coord, rows: usize, cols: usize) -> Workgroup {
        Workgroup { start, rows, cols }
    }

    /// Group anchored at (0,0).
    pub fn at_origin(rows: usize, cols: usize) -> Workgroup {
        Workgroup::new(Coord::new(0, 0), rows, cols)
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(SimError::Config(format!("empty workgroup {}x{}", self.rows, self.cols)));
        }
        if self.start.row + self.rows > mesh.rows || self.start.col + self.cols > mesh.cols {
            return Err(SimError::Config(format!(
                "workgroup {}x{} at {} does not fit a {}x{} mesh",
                self.rows, self.cols, self.start, mesh.rows, mesh.cols
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Members in row-major order.
    pub fn members(&self) -> Vec<Coord> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| Coord::new(self.start.row + r, self.start.col + c)))
            .collect()
    }

    pub fn contains(&self, c: Coord) -> bool {
        (self.start.row..self.start.row + self.rows).contains(&c.row)
            && (self.start.col..self.start.col + self.cols).contains(&c.col)
    }
}

/// Host-side view of the machine between runs (zero simulated cost).
pub struct Host<'a> {
    sim: &'a mut Sim,
    group: Workgroup,
}

impl Host<'_> {
    pub fn group(&self) -> Workgroup {
        self.group
    }

    pub fn map(&self) -> AddressMap {
        self.sim.address_map()
    }

    pub fn memory(&self) -> std::cell::Ref<'_, Memory> {
        self.sim.memory()
    }

    pub fn memory_mut(&self) -> std::cell::RefMut<'_, Memory> {
        self.sim.memory_mut()
    }

    pub fn create_mutex(&mut self, home: Coord, offset: u32) -> Result<MutexId> {
        self.sim.create_mutex(home, offset)
    }

    pub fn create_barrier(&mut self, members: &[Coord]) -> Result<BarrierId> {
        self.sim.create_barrier(members)
    }
}

/// Result of a host-orchestrated run.
#[derive(Debug, Clone)]
pub struct HostResult<T> {
    pub end_time: SimTime,
    pub end_ns: f64,
    pub events: u64,
    pub output: T,
    pub log: Vec<LogRecord>,
}

/// The host sequence: create the group, load cores (`pre`), start every
/// member's kernel, run to completion, collect results (`post`).
pub fn host_run<P, K, Fut, Q, T>(
    cfg: &MachineConfig,
    group: Workgroup,
    opts: &SimOptions,
    pre: P,
    mut kernel: K,
    post: Q,
) -> Result<HostResult<T>>
where
    P: FnOnce(&mut Host<'_>) -> Result<()>,
    K: FnMut(Ctx) -> Fut,
    Fut: Future<Output = Result<()>> + 'static,
    Q: FnOnce(&Host<'_>) -> Result<T>,
{
    let mut sim = Sim::new(cfg, opts)?;
    group.validate(&sim.mesh())?;
    let barrier = sim.create_barrier(&group.members())?;
    {
        let mut host = Host {
            sim: &mut sim,
            group,
        };
        pre(&mut host)?;
    }
    for core in group.members() {
        let ctx = sim.ctx(core, group, barrier)?;
        sim.spawn(core, kernel(ctx))?;
    }
    let summary = sim.run()?;
    let log = sim.take_log();
    let host = Host {
        sim: &mut sim,
        group,
    };
    let output = post(&host)?;
    Ok(HostResult {
        end_time: summary.end_time,
        end_ns: summary.end_time.ns(cfg.clock_hz()),
        events: summary.events,
        output,
        log,
    })
}
