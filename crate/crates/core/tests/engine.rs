use std::cell::RefCell;
use std::rc::Rc;

use proptest::prelude::*;

use meshsim::config::MachineConfig;
use meshsim::ecore::{AddressMap, Owner};
use meshsim::error::SimError;
use meshsim::kernels::stencil::{stencil_distributed, Exchange, StencilWeights};
use meshsim::kernels::Grid;
use meshsim::mesh::{Coord, Mesh};
use meshsim::runtime::{Ctx, Sim, SimOptions, Timer, Workgroup};
use meshsim::time::SimTime;

fn logged() -> SimOptions {
    SimOptions { log_events: true }
}

#[test]
fn identical_runs_give_identical_logs() {
    let cfg = MachineConfig::default();
    let g = Grid::from_fn(16, 24, |i, j| ((i * 5 + j * 3) % 7) as f32).unwrap();
    let run = || {
        stencil_distributed(
            &cfg,
            &g,
            StencilWeights::averaging(),
            4,
            Workgroup::at_origin(2, 3),
            Exchange::Halo,
            &logged(),
        )
        .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.elapsed, b.elapsed);
    assert_eq!(a.grid, b.grid);
}

#[test]
fn event_log_is_reproducible_and_ordered() {
    let cfg = MachineConfig::default();
    let go = || {
        let mut sim = Sim::new(&cfg, &logged()).unwrap();
        let group = Workgroup::at_origin(2, 2);
        let bar = sim.create_barrier(&group.members()).unwrap();
        for c in group.members() {
            let ctx = sim.ctx(c, group, bar).unwrap();
            sim.spawn(c, async move {
                ctx.compute(100.0 * (ctx.coord().col + 1) as f64).await?;
                ctx.barrier().await?;
                let peer = ctx.member(Coord::new(1 - ctx.group_pos().row, ctx.group_pos().col));
                ctx.write_u32(ctx.global(peer, 0x100)?, 7).await?;
                ctx.flag_wait(0x100, 7).await
            })
            .unwrap();
        }
        sim.run().unwrap();
        sim.take_log()
    };
    let (a, b) = (go(), go());
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert!(a.windows(2).all(|w| w[0].time_ns <= w[1].time_ns));
}

#[test]
fn writerless_flag_wait_is_a_deadlock() {
    let cfg = MachineConfig::default();
    let mut sim = Sim::new(&cfg, &SimOptions::default()).unwrap();
    let group = Workgroup::at_origin(1, 2);
    let bar = sim.create_barrier(&group.members()).unwrap();
    let waiter = sim.ctx(Coord::new(0, 0), group, bar).unwrap();
    let idle = sim.ctx(Coord::new(0, 1), group, bar).unwrap();
    sim.spawn(Coord::new(0, 0), async move { waiter.flag_wait(0x200, 1).await })
        .unwrap();
    sim.spawn(Coord::new(0, 1), async move { idle.compute(50.0).await }).unwrap();
    match sim.run() {
        Err(SimError::Deadlock { blocked, .. }) => {
            assert_eq!(blocked.len(), 1);
            assert_eq!(blocked[0].0, Coord::new(0, 0));
            assert!(blocked[0].1.contains("flag_wait"));
        }
        other => panic!("expected deadlock, got {other:?}"),
    }
}

#[test]
fn kernel_error_becomes_fault() {
    let cfg = MachineConfig::default();
    let mut sim = Sim::new(&cfg, &SimOptions::default()).unwrap();
    let group = Workgroup::at_origin(1, 1);
    let bar = sim.create_barrier(&group.members()).unwrap();
    let ctx = sim.ctx(Coord::new(0, 0), group, bar).unwrap();
    sim.spawn(Coord::new(0, 0), async move {
        ctx.timer_stop(Timer::T0)?;
        Ok(())
    })
    .unwrap();
    match sim.run() {
        Err(SimError::KernelFault { core, source }) => {
            assert_eq!(core, Coord::new(0, 0));
            assert!(matches!(*source, SimError::Timer(_)));
        }
        other => panic!("expected fault, got {other:?}"),
    }
}

#[test]
fn second_kernel_on_a_core_rejected() {
    let cfg = MachineConfig::default();
    let mut sim = Sim::new(&cfg, &SimOptions::default()).unwrap();
    let group = Workgroup::at_origin(1, 1);
    let bar = sim.create_barrier(&group.members()).unwrap();
    let c = Coord::new(0, 0);
    sim.spawn(c, async { Ok(()) }).unwrap();
    assert!(matches!(sim.spawn(c, async { Ok(()) }), Err(SimError::Config(_))));
    let _ = sim.ctx(c, group, bar);
}

#[test]
fn timer_measures_compute() {
    let cfg = MachineConfig::default();
    let mut sim = Sim::new(&cfg, &SimOptions::default()).unwrap();
    let group = Workgroup::at_origin(1, 1);
    let bar = sim.create_barrier(&group.members()).unwrap();
    let ctx = sim.ctx(Coord::new(0, 0), group, bar).unwrap();
    let seen = Rc::new(RefCell::new(0.0));
    let out = seen.clone();
    sim.spawn(Coord::new(0, 0), async move {
        ctx.timer_start(Timer::T1);
        ctx.compute(1234.0).await?;
        *out.borrow_mut() = ctx.timer_stop(Timer::T1)?;
        Ok(())
    })
    .unwrap();
    sim.run().unwrap();
    assert_eq!(*seen.borrow(), SimTime::from_cycles(1234.0).cycles());
}

#[test]
fn address_map_round_trip_exhaustive() {
    let cfg = MachineConfig::default();
    let mesh = Mesh::new(cfg.mesh.rows, cfg.mesh.cols).unwrap();
    let map = AddressMap::new(mesh, &cfg.memory);
    for c in mesh.coords() {
        for off in (0..map.local_bytes()).step_by(4) {
            let a = map.global(c, off).unwrap();
            assert_eq!(map.decode(a).unwrap(), (Owner::Core(c), off));
        }
        assert!(map.global(c, map.local_bytes()).is_err());
    }
    for off in (0..map.shared_bytes()).step_by(4096) {
        assert_eq!(map.decode(map.shared(off).unwrap()).unwrap(), (Owner::Shared, off));
    }
}

/// Shared record of (core, round, time) pairs written by test kernels.
type Trace = Rc<RefCell<Vec<(usize, usize, SimTime)>>>;

fn run_barrier_schedule(rows: usize, cols: usize, work: Vec<Vec<u16>>) -> (Vec<(usize, usize, SimTime)>, Vec<(usize, usize, SimTime)>) {
    let cfg = MachineConfig::default();
    let mut sim = Sim::new(&cfg, &SimOptions::default()).unwrap();
    let group = Workgroup::at_origin(rows, cols);
    let bar = sim.create_barrier(&group.members()).unwrap();
    let arrive: Trace = Rc::default();
    let leave: Trace = Rc::default();
    for (i, c) in group.members().into_iter().enumerate() {
        let ctx: Ctx = sim.ctx(c, group, bar).unwrap();
        let w = work[i].clone();
        let (arrive, leave) = (arrive.clone(), leave.clone());
        sim.spawn(c, async move {
            for (round, cycles) in w.into_iter().enumerate() {
                ctx.compute(cycles as f64).await?;
                arrive.borrow_mut().push((i, round, ctx.now()));
                ctx.barrier().await?;
                leave.borrow_mut().push((i, round, ctx.now()));
            }
            Ok(())
        })
        .unwrap();
    }
    sim.run().unwrap();
    let a = arrive.borrow().clone();
    let l = leave.borrow().clone();
    (a, l)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nobody_leaves_a_barrier_early(
        rows in 1usize..=4,
        cols in 1usize..=4,
        rounds in 1usize..=5,
        seed in prop::collection::vec(0u16..5000, 16 * 5),
    ) {
        let n = rows * cols;
        let work: Vec<Vec<u16>> = (0..n).map(|i| seed[i * 5..i * 5 + rounds].to_vec()).collect();
        let (arrive, leave) = run_barrier_schedule(rows, cols, work);
        prop_assert_eq!(arrive.len(), n * rounds);
        prop_assert_eq!(leave.len(), n * rounds);
        for r in 0..rounds {
            let last = arrive.iter().filter(|a| a.1 == r).map(|a| a.2).max().unwrap();
            for l in leave.iter().filter(|l| l.1 == r) {
                prop_assert!(n == 1 || l.2 > last, "core {} left round {} at {:?} before {:?}", l.0, r, l.2, last);
            }
        }
    }

    #[test]
    fn mutex_sections_never_overlap(
        holders in prop::collection::vec((0usize..16, 1u16..2000, 0u16..3000), 1..12),
    ) {
        let cfg = MachineConfig::default();
        let mut sim = Sim::new(&cfg, &SimOptions::default()).unwrap();
        let group = Workgroup::at_origin(4, 4);
        let bar = sim.create_barrier(&group.members()).unwrap();
        let m = sim.create_mutex(Coord::new(1, 2), 0x40).unwrap();
        let spans: Rc<RefCell<Vec<(SimTime, SimTime)>>> = Rc::default();
        let members = group.members();
        let mut per_core: Vec<Vec<(u16, u16)>> = vec![Vec::new(); 16];
        for &(c, hold, delay) in &holders {
            per_core[c].push((hold, delay));
        }
        let expected = holders.len();
        for (i, jobs) in per_core.into_iter().enumerate() {
            if jobs.is_empty() {
                continue;
            }
            let ctx = sim.ctx(members[i], group, bar).unwrap();
            let spans = spans.clone();
            sim.spawn(members[i], async move {
                for (hold, delay) in jobs {
                    ctx.compute(delay as f64).await?;
                    ctx.mutex_lock(m).await?;
                    let t0 = ctx.now();
                    ctx.compute(hold as f64).await?;
                    let t1 = ctx.now();
                    spans.borrow_mut().push((t0, t1));
                    ctx.mutex_unlock(m).await?;
                }
                Ok(())
            }).unwrap();
        }
        sim.run().unwrap();
        let mut s = spans.borrow().clone();
        prop_assert_eq!(s.len(), expected);
        s.sort();
        for w in s.windows(2) {
            prop_assert!(w[0].1 <= w[1].0, "{:?} overlaps {:?}", w[0], w[1]);
        }
    }
}
