//! The event loop. Kernels are futures polled only when one of their events
//! fires; every blocking runtime call schedules its own wake-up, so time only
//! moves through the queue.

use std::cell::{Ref, RefCell, RefMut};
use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll, Waker};

use crate::config::MachineConfig;
use crate::ecore::{AddressMap, Memory, Owner};
use crate::elink::LinkChannel;
use crate::error::{Result, SimError};
use crate::mesh::{transfer_cycles, Coord, Mesh, TransferMethod};
use crate::runtime::log::{EventKind, LogRecord};
use crate::runtime::{Ctx, Workgroup};
use crate::time::SimTime;

type Task = Pin<Box<dyn Future<Output = Result<()>>>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BarrierId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MutexId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DmaHandle {
    pub(crate) core: usize,
    pub(crate) id: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    /// Record the event log (JSON-lines export).
    pub log_events: bool,
}

/// Value handed to a parked kernel when it resumes.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Resume {
    Unit,
    Flag(bool),
}

#[derive(Debug)]
pub(crate) enum Action {
    Start(usize),
    Resume(usize, Resume),
    Apply { owner: Owner, offset: u32, data: Vec<u8> },
    MutexRequest { mutex: usize, core: usize, try_only: bool },
    MutexRelease { mutex: usize },
}

struct Event {
    time: SimTime,
    row: usize,
    col: usize,
    seq: u64,
    action: Action,
}

impl Event {
    fn key(&self) -> (SimTime, usize, usize, u64) {
        (self.time, self.row, self.col, self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Status {
    Idle,
    Running,
    Blocked,
    Done,
}

#[derive(Debug)]
pub(crate) struct CoreState {
    pub status: Status,
    pub blocked_on: String,
    pub resumed: Option<Resume>,
    pub dma_busy_until: [SimTime; 2],
    pub dma_done: Vec<SimTime>,
    pub timers: [Option<SimTime>; 2],
}

impl CoreState {
    fn new() -> CoreState {
        CoreState {
            status: Status::Idle,
            blocked_on: String::new(),
            resumed: None,
            dma_busy_until: [SimTime::ZERO; 2],
            dma_done: Vec::new(),
            timers: [None; 2],
        }
    }
}

#[derive(Debug)]
pub(crate) struct BarrierState {
    pub members: Vec<usize>,
    pub master: Coord,
    pub arrived: Vec<(usize, SimTime)>,
}

#[derive(Debug)]
pub(crate) struct MutexState {
    pub home: Coord,
    pub offset: u32,
    pub owner: Option<usize>,
    pub releasing: bool,
    pub queue: VecDeque<usize>,
}

#[derive(Debug)]
pub(crate) struct FlagWaiter {
    pub core: usize,
    pub offset: u32,
    pub expected: u32,
}

pub(crate) struct World {
    pub cfg: MachineConfig,
    pub mesh: Mesh,
    pub mem: Memory,
    pub now: SimTime,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    pub cores: Vec<CoreState>,
    pub barriers: Vec<BarrierState>,
    pub mutexes: Vec<MutexState>,
    pub waiters: Vec<FlagWaiter>,
    pub link_write: LinkChannel,
    pub link_read: LinkChannel,
    pub log: Option<Vec<LogRecord>>,
    pub events: u64,
}

impl World {
    pub fn schedule(&mut self, time: SimTime, core: Coord, action: Action) {
        debug_assert!(time >= self.now, "event scheduled in the past");
        self.seq += 1;
        self.queue.push(Reverse(Event {
            time,
            row: core.row,
            col: core.col,
            seq: self.seq,
            action,
        }));
    }

    pub fn resume_at(&mut self, time: SimTime, core: usize, value: Resume) {
        let c = self.mesh.coord(core);
        self.schedule(time, c, Action::Resume(core, value));
    }

    pub fn after(&self, cycles: f64) -> SimTime {
        self.now + SimTime::from_cycles(cycles)
    }

    pub fn distance(&self, a: Coord, b: Coord) -> usize {
        a.row.abs_diff(b.row) + a.col.abs_diff(b.col)
    }

    /// Cycles for a small direct-write message between two cores.
    pub fn direct_write_cycles(&self, from: Coord, to: Coord, bytes: usize) -> f64 {
        transfer_cycles(
            TransferMethod::DirectWrite,
            bytes as f64,
            self.distance(from, to),
            &self.cfg.timing,
        )
    }

    /// Hop latency between a core and the link exit.
    pub fn exit_path_cycles(&self, core: Coord) -> f64 {
        self.distance(core, self.cfg.elink.exit_coord) as f64 * self.cfg.timing.hop_latency_cycles
    }

    pub fn record(&mut self, core: Coord, kind: EventKind, bytes: u64) {
        let clock = self.cfg.clock_hz();
        let now = self.now;
        if let Some(log) = self.log.as_mut() {
            log.push(LogRecord {
                time_ns: now.ns(clock),
                core,
                kind,
                bytes,
            });
        }
    }

    pub fn block(&mut self, core: usize, reason: String) {
        self.cores[core].status = Status::Blocked;
        self.cores[core].blocked_on = reason;
    }

    fn apply(&mut self, owner: Owner, offset: u32, data: &[u8]) {
        let off = offset as usize;
        self.mem.owner_bytes_mut(owner)[off..off + data.len()].copy_from_slice(data);
        if let Owner::Core(c) = owner {
            self.record(c, EventKind::WriteVisible, data.len() as u64);
            let idx = self.mesh.index(c);
            let end = offset + data.len() as u32;
            let mut i = 0;
            while i < self.waiters.len() {
                let w = &self.waiters[i];
                if w.core == idx && w.offset < end && offset < w.offset + 4 {
                    let bytes = &self.mem.owner_bytes(owner)[w.offset as usize..w.offset as usize + 4];
                    let v = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
                    if v == w.expected {
                        let w = self.waiters.remove(i);
                        self.record(c, EventKind::FlagResume, 4);
                        let now = self.now;
                        self.resume_at(now, w.core, Resume::Unit);
                        continue;
                    }
                }
                i += 1;
            }
        }
    }

    fn mutex_request(&mut self, m: usize, core: usize, try_only: bool) {
        let home = self.mutexes[m].home;
        let who = self.mesh.coord(core);
        let back = SimTime::from_cycles(self.direct_write_cycles(home, who, 4));
        if self.mutexes[m].owner.is_none() {
            self.grant(m, core);
            let t = self.now + back;
            self.resume_at(t, core, if try_only { Resume::Flag(true) } else { Resume::Unit });
        } else if try_only {
            let t = self.now + back;
            self.resume_at(t, core, Resume::Flag(false));
        } else {
            self.mutexes[m].queue.push_back(core);
        }
    }

    fn grant(&mut self, m: usize, core: usize) {
        let (home, offset) = (self.mutexes[m].home, self.mutexes[m].offset);
        self.mutexes[m].owner = Some(core);
        self.mutexes[m].releasing = false;
        let tag = core as u32 + 1;
        let owner = Owner::Core(home);
        self.mem.owner_bytes_mut(owner)[offset as usize..offset as usize + 4].copy_from_slice(&tag.to_le_bytes());
        let c = self.mesh.coord(core);
        self.record(c, EventKind::MutexGrant, 4);
    }

    fn mutex_release(&mut self, m: usize) {
        let (home, offset) = (self.mutexes[m].home, self.mutexes[m].offset);
        self.mutexes[m].owner = None;
        self.mutexes[m].releasing = false;
        self.mem.owner_bytes_mut(Owner::Core(home))[offset as usize..offset as usize + 4].fill(0);
        if let Some(next) = self.mutexes[m].queue.pop_front() {
            self.grant(m, next);
            let back = SimTime::from_cycles(self.direct_write_cycles(home, self.mesh.coord(next), 4));
            let t = self.now + back;
            self.resume_at(t, next, Resume::Unit);
        }
    }
}

/// Summary of a completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub end_time: SimTime,
    pub events: u64,
}

/// One simulation instance.
pub struct Sim {
    pub(crate) world: Rc<RefCell<World>>,
    tasks: Vec<Option<Task>>,
}

impl Sim {
    pub fn new(cfg: &MachineConfig, opts: &SimOptions) -> Result<Sim> {
        cfg.validate()?;
        let mesh = Mesh::new(cfg.mesh.rows, cfg.mesh.cols)?;
        let map = AddressMap::new(mesh, &cfg.memory);
        let world = World {
            cfg: cfg.clone(),
            mesh,
            mem: Memory::new(map),
            now: SimTime::ZERO,
            queue: BinaryHeap::new(),
            seq: 0,
            cores: (0..mesh.len()).map(|_| CoreState::new()).collect(),
            barriers: Vec::new(),
            mutexes: Vec::new(),
            waiters: Vec::new(),
            link_write: LinkChannel::default(),
            link_read: LinkChannel::default(),
            log: opts.log_events.then(Vec::new),
            events: 0,
        };
        Ok(Sim {
            world: Rc::new(RefCell::new(world)),
            tasks: (0..mesh.len()).map(|_| None).collect(),
        })
    }

    pub fn config(&self) -> MachineConfig {
        self.world.borrow().cfg.clone()
    }

    pub fn mesh(&self) -> Mesh {
        self.world.borrow().mesh
    }

    pub fn address_map(&self) -> AddressMap {
        *self.world.borrow().mem.map()
    }

    pub fn memory(&self) -> Ref<'_, Memory> {
        Ref::map(self.world.borrow(), |w| &w.mem)
    }

    pub fn memory_mut(&self) -> RefMut<'_, Memory> {
        RefMut::map(self.world.borrow_mut(), |w| &mut w.mem)
    }

    pub fn now(&self) -> SimTime {
        self.world.borrow().now
    }

    pub fn create_barrier(&mut self, members: &[Coord]) -> Result<BarrierId> {
        let mut w = self.world.borrow_mut();
        let mut idx = Vec::with_capacity(members.len());
        for &m in members {
            idx.push(w.mesh.index(w.mesh.check(m)?));
        }
        idx.sort_unstable();
        idx.dedup();
        if idx.is_empty() {
            return Err(SimError::Config("barrier with no participants".into()));
        }
        let master = w.mesh.coord(idx[0]);
        w.barriers.push(BarrierState {
            members: idx,
            master,
            arrived: Vec::new(),
        });
        Ok(BarrierId(w.barriers.len() - 1))
    }

    /// A mutex backed by the word at `offset` in `home`'s scratchpad.
    pub fn create_mutex(&mut self, home: Coord, offset: u32) -> Result<MutexId> {
        let mut w = self.world.borrow_mut();
        w.mesh.check(home)?;
        w.mem.map().global(home, offset)?;
        if offset % 4 != 0 || offset + 4 > w.mem.map().local_bytes() {
            return Err(SimError::Address(format!("mutex word at {offset:#x}")));
        }
        w.mutexes.push(MutexState {
            home,
            offset,
            owner: None,
            releasing: false,
            queue: VecDeque::new(),
        });
        Ok(MutexId(w.mutexes.len() - 1))
    }

    /// Runtime handle for a kernel on `core` belonging to `group`.
    pub fn ctx(&self, core: Coord, group: Workgroup, barrier: BarrierId) -> Result<Ctx> {
        let idx = {
            let w = self.world.borrow();
            w.mesh.index(w.mesh.check(core)?)
        };
        Ok(Ctx::new(self.world.clone(), core, idx, group, barrier))
    }

    pub fn spawn<F>(&mut self, core: Coord, kernel: F) -> Result<()>
    where
        F: Future<Output = Result<()>> + 'static,
    {
        let mut w = self.world.borrow_mut();
        let idx = w.mesh.index(w.mesh.check(core)?);
        if self.tasks[idx].is_some() {
            return Err(SimError::Config(format!("core {core} already has a kernel")));
        }
        self.tasks[idx] = Some(Box::pin(kernel));
        w.cores[idx].status = Status::Running;
        let now = w.now;
        w.schedule(now, core, Action::Start(idx));
        Ok(())
    }

    pub fn take_log(&mut self) -> Vec<LogRecord> {
        self.world.borrow_mut().log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    fn poll(&mut self, idx: usize) -> Result<()> {
        let Some(task) = self.tasks[idx].as_mut() else {
            return Ok(());
        };
        self.world.borrow_mut().cores[idx].status = Status::Running;
        let mut cx = Context::from_waker(Waker::noop());
        match task.as_mut().poll(&mut cx) {
            Poll::Pending => {
                let w = self.world.borrow();
                debug_assert_eq!(
                    w.cores[idx].status,
                    Status::Blocked,
                    "kernel awaited something other than a runtime call"
                );
                Ok(())
            }
            Poll::Ready(res) => {
                self.tasks[idx] = None;
                let mut w = self.world.borrow_mut();
                w.cores[idx].status = Status::Done;
                let core = w.mesh.coord(idx);
                w.record(core, EventKind::Finish, 0);
                res.map_err(|e| SimError::KernelFault {
                    core,
                    source: Box::new(e),
                })
            }
        }
    }

    /// Runs until every kernel finishes, a kernel faults, or no event can
    /// make progress (deadlock).
    pub fn run(&mut self) -> Result<RunSummary> {
        loop {
            let next = {
                let mut w = self.world.borrow_mut();
                match w.queue.pop() {
                    Some(Reverse(ev)) => {
                        w.now = ev.time;
                        w.events += 1;
                        Some(ev.action)
                    }
                    None => None,
                }
            };
            let Some(action) = next else { break };
            match action {
                Action::Start(idx) => {
                    {
                        let mut w = self.world.borrow_mut();
                        let c = w.mesh.coord(idx);
                        w.record(c, EventKind::Start, 0);
                    }
                    self.poll(idx)?;
                }
                Action::Resume(idx, value) => {
                    self.world.borrow_mut().cores[idx].resumed = Some(value);
                    self.poll(idx)?;
                }
                Action::Apply { owner, offset, data } => self.world.borrow_mut().apply(owner, offset, &data),
                Action::MutexRequest { mutex, core, try_only } => {
                    self.world.borrow_mut().mutex_request(mutex, core, try_only)
                }
                Action::MutexRelease { mutex } => self.world.borrow_mut().mutex_release(mutex),
            }
        }
        let w = self.world.borrow();
        let blocked: Vec<(Coord, String)> = w
            .cores
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c.status, Status::Blocked | Status::Running))
            .map(|(i, c)| (w.mesh.coord(i), c.blocked_on.clone()))
            .collect();
        if !blocked.is_empty() {
            return Err(SimError::Deadlock {
                time_ns: w.now.ns(w.cfg.clock_hz()),
                blocked,
            });
        }
        Ok(RunSummary {
            end_time: w.now,
            events: w.events,
        })
    }
}
