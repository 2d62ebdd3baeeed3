//! Kernel-side runtime API. Every call that consumes simulated time is async
//! and suspends the kernel until the engine resumes it.

use std::cell::RefCell;
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll};

use crate::config::MachineConfig;
use crate::ecore::{bytes_to_f32s, f32s_to_bytes, DmaDescriptor, DmaMode, DmaStart, Owner};
use crate::error::{Result, SimError};
use crate::mesh::Coord;
use crate::runtime::engine::{Action, BarrierId, DmaHandle, MutexId, Resume, World};
use crate::runtime::log::EventKind;
use crate::runtime::Workgroup;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timer {
    T0 = 0,
    T1 = 1,
}

struct Park {
    world: Rc<RefCell<World>>,
    idx: usize,
}

impl Future for Park {
    type Output = Resume;
    fn poll(self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<Resume> {
        match self.world.borrow_mut().cores[self.idx].resumed.take() {
            Some(v) => Poll::Ready(v),
            None => Poll::Pending,
        }
    }
}

/// Handle through which a kernel running on one core talks to the machine.
#[derive(Clone)]
pub struct Ctx {
    world: Rc<RefCell<World>>,
    core: Coord,
    idx: usize,
    group: Workgroup,
    barrier: BarrierId,
}

impl Ctx {
    pub(crate) fn new(world: Rc<RefCell<World>>, core: Coord, idx: usize, group: Workgroup, barrier: BarrierId) -> Ctx {
        Ctx {
            world,
            core,
            idx,
            group,
            barrier,
        }
    }

    pub fn coord(&self) -> Coord {
        self.core
    }

    pub fn group(&self) -> Workgroup {
        self.group
    }

    /// Position of this core inside its workgroup.
    pub fn group_pos(&self) -> Coord {
        Coord::new(self.core.row - self.group.start.row, self.core.col - self.group.start.col)
    }

    /// Absolute coordinate of the group member at `pos`.
    pub fn member(&self, pos: Coord) -> Coord {
        Coord::new(self.group.start.row + pos.row, self.group.start.col + pos.col)
    }

    pub fn now(&self) -> SimTime {
        self.world.borrow().now
    }

    pub fn with_config<R>(&self, f: impl FnOnce(&MachineConfig) -> R) -> R {
        f(&self.world.borrow().cfg)
    }

    pub fn global(&self, core: Coord, offset: u32) -> Result<u32> {
        self.world.borrow().mem.map().global(core, offset)
    }

    pub fn my_global(&self, offset: u32) -> Result<u32> {
        self.global(self.core, offset)
    }

    pub fn shared(&self, offset: u32) -> Result<u32> {
        self.world.borrow().mem.map().shared(offset)
    }

    fn park(&self, reason: String) -> Park {
        self.world.borrow_mut().block(self.idx, reason);
        Park {
            world: self.world.clone(),
            idx: self.idx,
        }
    }

    async fn sleep_until(&self, t: SimTime, reason: &str) -> Resume {
        {
            let mut w = self.world.borrow_mut();
            w.resume_at(t, self.idx, Resume::Unit);
        }
        self.park(reason.to_string()).await
    }

    fn local_range(&self, offset: u32, len: usize) -> Result<usize> {
        let limit = self.world.borrow().mem.map().local_bytes();
        if offset as u64 + len as u64 > limit as u64 {
            return Err(SimError::Address(format!("local range {offset:#06x}+{len} out of bounds")));
        }
        Ok(offset as usize)
    }

    pub fn read_local(&self, offset: u32, len: usize) -> Result<Vec<u8>> {
        let off = self.local_range(offset, len)?;
        let w = self.world.borrow();
        Ok(w.mem.owner_bytes(Owner::Core(self.core))[off..off + len].to_vec())
    }

    pub fn write_local(&self, offset: u32, bytes: &[u8]) -> Result<()> {
        let off = self.local_range(offset, bytes.len())?;
        let mut w = self.world.borrow_mut();
        w.mem.owner_bytes_mut(Owner::Core(self.core))[off..off + bytes.len()].copy_from_slice(bytes);
        Ok(())
    }

    pub fn read_local_u32(&self, offset: u32) -> Result<u32> {
        let b = self.read_local(offset, 4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn write_local_u32(&self, offset: u32, v: u32) -> Result<()> {
        self.write_local(offset, &v.to_le_bytes())
    }

    pub fn read_local_f32(&self, offset: u32, count: usize) -> Result<Vec<f32>> {
        Ok(bytes_to_f32s(&self.read_local(offset, count * 4)?))
    }

    pub fn write_local_f32(&self, offset: u32, vals: &[f32]) -> Result<()> {
        self.write_local(offset, &f32s_to_bytes(vals))
    }

    /// Busy the core for `cycles`.
    pub async fn compute(&self, cycles: f64) -> Result<()> {
        if !(cycles >= 0.0 && cycles.is_finite()) {
            return Err(SimError::Domain(format!("compute({cycles})")));
        }
        let t = {
            let mut w = self.world.borrow_mut();
            w.record(self.core, EventKind::Compute, 0);
            w.after(cycles)
        };
        self.sleep_until(t, "compute").await;
        Ok(())
    }

    /// Reads anywhere in the global map. Local reads are free; remote reads
    /// cost a request/reply round trip (uncalibrated, same form as writes).
    pub async fn read(&self, addr: u32, len: usize) -> Result<Vec<u8>> {
        let (data, done) = {
            let mut w = self.world.borrow_mut();
            let (owner, _) = w.mem.map().decode_range(addr, len)?;
            let data = w.mem.read(addr, len)?;
            let done = match owner {
                Owner::Core(c) if c == self.core => None,
                Owner::Core(c) => Some(w.after(2.0 * w.direct_write_cycles(self.core, c, len.max(4)))),
                Owner::Shared => {
                    let path = w.exit_path_cycles(self.core);
                    let arrival = w.now.cycles() + path;
                    let cfg = w.cfg.clone();
                    let end = w.link_read.serve(&cfg, arrival, len as u64) + path;
                    Some(SimTime::from_cycles(end))
                }
            };
            (data, done)
        };
        if let Some(t) = done {
            self.sleep_until(t, "remote read").await;
        }
        Ok(data)
    }

    /// Posted write. Local writes land immediately; remote writes cost the
    /// issuing core one issue slot per word and become visible after the
    /// modeled transfer time.
    pub async fn write(&self, addr: u32, bytes: &[u8]) -> Result<()> {
        if bytes.is_empty() {
            return Err(SimError::Domain("zero-byte write".into()));
        }
        let resume = {
            let mut w = self.world.borrow_mut();
            let (owner, offset) = w.mem.map().decode_range(addr, bytes.len())?;
            let words = bytes.len().div_ceil(4) as f64;
            let issue = words * w.cfg.timing.direct_write_issue_cycles;
            match owner {
                Owner::Core(c) if c == self.core => {
                    w.mem.write(addr, bytes)?;
                    None
                }
                Owner::Core(c) => {
                    let visible = w.after(w.direct_write_cycles(self.core, c, bytes.len()));
                    w.record(self.core, EventKind::Write, bytes.len() as u64);
                    w.schedule(
                        visible,
                        self.core,
                        Action::Apply {
                            owner,
                            offset,
                            data: bytes.to_vec(),
                        },
                    );
                    Some(w.after(issue))
                }
                Owner::Shared => {
                    let arrival = w.now.cycles() + w.exit_path_cycles(self.core);
                    let cfg = w.cfg.clone();
                    let visible = SimTime::from_cycles(w.link_write.serve(&cfg, arrival, bytes.len() as u64));
                    w.record(self.core, EventKind::Write, bytes.len() as u64);
                    w.schedule(
                        visible,
                        self.core,
                        Action::Apply {
                            owner,
                            offset,
                            data: bytes.to_vec(),
                        },
                    );
                    Some(w.after(issue))
                }
            }
        };
        if let Some(t) = resume {
            self.sleep_until(t, "write issue").await;
        }
        Ok(())
    }

    pub async fn write_u32(&self, addr: u32, v: u32) -> Result<()> {
        self.write(addr, &v.to_le_bytes()).await
    }

    /// Starts a DMA on one of the two channels. Source data is read at start;
    /// each segment's payload lands at that segment's completion time.
    pub async fn dma_start(&self, d: DmaDescriptor) -> Result<DmaHandle> {
        let (handle, done) = {
            let mut w = self.world.borrow_mut();
            d.validate(w.mem.map())?;
            let ch = d.channel as usize;
            if w.cores[self.idx].dma_busy_until[ch] > w.now {
                return Err(SimError::DmaBusy {
                    core: self.core,
                    channel: d.channel,
                });
            }
            let cfg = w.cfg.clone();
            let t = &cfg.timing;
            let mut clock = w.now.cycles();
            let mut total = 0u64;
            for (k, seg) in d.segments().into_iter().enumerate() {
                let start_cost = match (d.start, k) {
                    (DmaStart::Fresh, _) => t.dma_setup_cycles,
                    (DmaStart::Resident, 0) => t.dma_prepared_start_cycles,
                    (DmaStart::Resident, _) => t.dma_chain_link_cycles,
                };
                let (src_owner, _) = w.mem.map().decode(seg.src)?;
                let (dst_owner, dst_off) = w.mem.map().decode(seg.dst)?;
                let payload = seg.gather(&w.mem)?;
                let bytes = payload.len() as u64;
                total += bytes;
                clock = match (src_owner, dst_owner) {
                    (Owner::Core(a), Owner::Core(b)) => {
                        clock + start_cost + t.hop_latency_cycles * w.distance(a, b) as f64
                            + bytes as f64 / t.dma_bytes_per_cycle
                    }
                    (Owner::Shared, Owner::Core(c)) => {
                        let path = w.exit_path_cycles(c);
                        w.link_read.serve(&cfg, clock + start_cost + path, bytes) + path
                    }
                    (Owner::Core(c), Owner::Shared) => {
                        let path = w.exit_path_cycles(c);
                        w.link_write.serve(&cfg, clock + start_cost + path, bytes)
                    }
                    (Owner::Shared, Owner::Shared) => {
                        return Err(SimError::Descriptor("shared-to-shared DMA is not supported".into()))
                    }
                };
                let seg_done = SimTime::from_cycles(clock).max(w.now);
                if seg.outer_count == 1 || seg.dst_stride as u64 == seg.row_bytes() as u64 {
                    w.schedule(
                        seg_done,
                        self.core,
                        Action::Apply {
                            owner: dst_owner,
                            offset: dst_off,
                            data: payload,
                        },
                    );
                } else {
                    let row = seg.row_bytes() as usize;
                    for (r, chunk) in payload.chunks(row).enumerate() {
                        let a = seg.dst.wrapping_add((r as u32).wrapping_mul(seg.dst_stride));
                        let (owner, off) = w.mem.map().decode(a)?;
                        w.schedule(
                            seg_done,
                            self.core,
                            Action::Apply {
                                owner,
                                offset: off,
                                data: chunk.to_vec(),
                            },
                        );
                    }
                }
            }
            let done = SimTime::from_cycles(clock).max(w.now);
            w.record(self.core, EventKind::DmaStart, total);
            let core = &mut w.cores[self.idx];
            core.dma_busy_until[ch] = done;
            core.dma_done.push(done);
            let handle = DmaHandle {
                core: self.idx,
                id: core.dma_done.len() - 1,
            };
            (handle, done)
        };
        if d.mode == DmaMode::Blocking {
            self.sleep_until(done, "dma (blocking)").await;
        }
        Ok(handle)
    }

    pub async fn dma_wait(&self, h: DmaHandle) -> Result<()> {
        let done = {
            let w = self.world.borrow();
            if h.core != self.idx {
                return Err(SimError::Protocol("waiting on another core's DMA handle".into()));
            }
            *w.cores[self.idx]
                .dma_done
                .get(h.id)
                .ok_or_else(|| SimError::Protocol("unknown DMA handle".into()))?
        };
        if done > self.now() {
            self.sleep_until(done, "dma_wait").await;
        }
        Ok(())
    }

    pub fn dma_busy(&self, channel: u8) -> bool {
        let w = self.world.borrow();
        w.cores[self.idx].dma_busy_until[channel as usize & 1] > w.now
    }

    /// Barrier across this kernel's workgroup.
    pub async fn barrier(&self) -> Result<()> {
        self.barrier_wait(self.barrier).await
    }

    /// Each participant writes an arrival flag to the master; the master
    /// broadcasts the release once the last flag lands.
    pub async fn barrier_wait(&self, id: BarrierId) -> Result<()> {
        {
            let mut w = self.world.borrow_mut();
            let b = w
                .barriers
                .get(id.0)
                .ok_or_else(|| SimError::Protocol(format!("unknown barrier {}", id.0)))?;
            if !b.members.contains(&self.idx) {
                return Err(SimError::Membership {
                    core: self.core,
                    barrier: id.0,
                });
            }
            if b.members.len() == 1 {
                return Ok(());
            }
            let master = b.master;
            let arrival = w.after(w.direct_write_cycles(self.core, master, 4));
            w.record(self.core, EventKind::BarrierArrive, 4);
            w.barriers[id.0].arrived.push((self.idx, arrival));
            if w.barriers[id.0].arrived.len() == w.barriers[id.0].members.len() {
                let arrived = std::mem::take(&mut w.barriers[id.0].arrived);
                let last = arrived.iter().map(|a| a.1).max().unwrap();
                let release = last + SimTime::from_cycles(w.cfg.timing.sync_flag_poll_cycles);
                let members = w.barriers[id.0].members.clone();
                for m in members {
                    let mc = w.mesh.coord(m);
                    let t = release + SimTime::from_cycles(w.direct_write_cycles(master, mc, 4));
                    w.resume_at(t, m, Resume::Unit);
                }
            }
        }
        self.park(format!("barrier {}", id.0)).await;
        Ok(())
    }

    fn mutex_home(&self, id: MutexId) -> Result<Coord> {
        let w = self.world.borrow();
        w.mutexes
            .get(id.0)
            .map(|m| m.home)
            .ok_or_else(|| SimError::Protocol(format!("unknown mutex {}", id.0)))
    }

    pub async fn mutex_lock(&self, id: MutexId) -> Result<()> {
        let home = self.mutex_home(id)?;
        {
            let mut w = self.world.borrow_mut();
            let t = w.after(w.direct_write_cycles(self.core, home, 4));
            w.record(self.core, EventKind::MutexRequest, 4);
            w.schedule(
                t,
                self.core,
                Action::MutexRequest {
                    mutex: id.0,
                    core: self.idx,
                    try_only: false,
                },
            );
        }
        self.park(format!("mutex {}", id.0)).await;
        Ok(())
    }

    /// Round trip to the mutex word; true if the lock was taken.
    pub async fn mutex_trylock(&self, id: MutexId) -> Result<bool> {
        let home = self.mutex_home(id)?;
        {
            let mut w = self.world.borrow_mut();
            let t = w.after(w.direct_write_cycles(self.core, home, 4) + w.cfg.timing.sync_flag_poll_cycles);
            w.schedule(
                t,
                self.core,
                Action::MutexRequest {
                    mutex: id.0,
                    core: self.idx,
                    try_only: true,
                },
            );
        }
        match self.park(format!("mutex trylock {}", id.0)).await {
            Resume::Flag(b) => Ok(b),
            Resume::Unit => Ok(true),
        }
    }

    pub async fn mutex_unlock(&self, id: MutexId) -> Result<()> {
        let home = self.mutex_home(id)?;
        let t = {
            let mut w = self.world.borrow_mut();
            let m = &w.mutexes[id.0];
            if m.owner != Some(self.idx) || m.releasing {
                return Err(SimError::Protocol(format!("core {} unlocking mutex {} it does not own", self.core, id.0)));
            }
            w.mutexes[id.0].releasing = true;
            let arrive = w.after(w.direct_write_cycles(self.core, home, 4));
            w.record(self.core, EventKind::MutexRelease, 4);
            w.schedule(arrive, self.core, Action::MutexRelease { mutex: id.0 });
            w.after(w.cfg.timing.direct_write_issue_cycles)
        };
        self.sleep_until(t, "mutex unlock").await;
        Ok(())
    }

    /// Suspends until the local word at `offset` equals `expected`.
    pub async fn flag_wait(&self, offset: u32, expected: u32) -> Result<()> {
        if offset % 4 != 0 {
            return Err(SimError::Address(format!("unaligned flag {offset:#x}")));
        }
        if self.read_local_u32(offset)? == expected {
            return Ok(());
        }
        {
            let mut w = self.world.borrow_mut();
            w.record(self.core, EventKind::FlagWait, 4);
            w.waiters.push(crate::runtime::engine::FlagWaiter {
                core: self.idx,
                offset,
                expected,
            });
        }
        self.park(format!("flag_wait {offset:#06x} == {expected}")).await;
        Ok(())
    }

    pub fn timer_start(&self, t: Timer) {
        let mut w = self.world.borrow_mut();
        let now = w.now;
        w.cores[self.idx].timers[t as usize] = Some(now);
    }

    /// Cycles since the matching `timer_start`.
    pub fn timer_stop(&self, t: Timer) -> Result<f64> {
        let mut w = self.world.borrow_mut();
        let now = w.now;
        let start = w.cores[self.idx].timers[t as usize]
            .take()
            .ok_or_else(|| SimError::Timer(format!("{t:?} stopped before it was started")))?;
        Ok((now - start).cycles())
    }

    /// Cycles since `timer_start` without stopping the timer.
    pub fn timer_elapsed(&self, t: Timer) -> Result<f64> {
        let w = self.world.borrow();
        let start = w.cores[self.idx].timers[t as usize]
            .ok_or_else(|| SimError::Timer(format!("{t:?} not started")))?;
        Ok((w.now - start).cycles())
    }
}
