//! Matrix multiply: references, on-chip Cannon, and off-chip tiling.
//!
//! A is M×N, B is N×K, C is M×K. Every device path accumulates each element
//! of C with fused multiply-adds.

use std::cell::RefCell;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::config::{MachineConfig, MemoryConfig};
use crate::ecore::{BankLayout, DmaDescriptor, DmaMode, Region};
use crate::error::{Result, SimError};
use crate::kernels::cost::{matmul_core_time, matmul_flops};
use crate::kernels::data::Matrix;
use crate::mesh::Coord;
use crate::runtime::{host_run, Ctx, DmaHandle, SimOptions, Workgroup};
use crate::time::SimTime;

/// C = A·B with single-precision FMAs, inner index ascending.
pub fn matmul_reference(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    check_shapes(a, b)?;
    let mut c = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for j in 0..b.cols {
            let mut acc = 0.0f32;
            for k in 0..a.cols {
                acc = a.get(i, k).mul_add(b.get(k, j), acc);
            }
            c.set(i, j, acc);
        }
    }
    Ok(c)
}

/// Double-precision product, an order-insensitive oracle for tolerance checks.
pub fn matmul_f64(a: &Matrix, b: &Matrix) -> Result<Vec<f64>> {
    check_shapes(a, b)?;
    let mut c = vec![0.0f64; a.rows * b.cols];
    for i in 0..a.rows {
        for k in 0..a.cols {
            let x = a.get(i, k) as f64;
            for j in 0..b.cols {
                c[i * b.cols + j] += x * b.get(k, j) as f64;
            }
        }
    }
    Ok(c)
}

fn check_shapes(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.cols != b.rows {
        return Err(SimError::Domain(format!(
            "inner dimensions differ: {}x{} · {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    if a.rows == 0 || a.cols == 0 || b.cols == 0 {
        return Err(SimError::Domain("empty matrix".into()));
    }
    Ok(())
}

/// Per-core block: A is m×n, B is n×k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockShape {
    pub m: usize,
    pub n: usize,
    pub k: usize,
}

impl BlockShape {
    pub fn square(s: usize) -> BlockShape {
        BlockShape { m: s, n: s, k: s }
    }

    fn a_bytes(&self) -> u32 {
        (self.m * self.n * 4) as u32
    }

    fn b_bytes(&self) -> u32 {
        (self.n * self.k * 4) as u32
    }

    fn c_bytes(&self) -> u32 {
        (self.m * self.k * 4) as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BufferScheme {
    /// Two full buffers per operand.
    Double,
    /// Three half-size slots per operand; 32×32 blocks only.
    Half,
}

pub const DATA_BASE: u32 = 0x4000;
pub const FLAGS_BASE: u32 = 0x3F00;
const A_READY: u32 = FLAGS_BASE;
const B_READY: u32 = FLAGS_BASE + 4;
const A_SENT: u32 = FLAGS_BASE + 8;
const B_SENT: u32 = FLAGS_BASE + 12;
const HALF_SLOT: u32 = 0x800;
pub const HALF_A_SLOTS: [u32; 3] = [0x4000, 0x4800, 0x5000];
pub const HALF_B_SLOTS: [u32; 3] = [0x5800, 0x6000, 0x6800];
pub const HALF_C: u32 = 0x7000;

fn double_addrs(s: BlockShape) -> ([u32; 2], [u32; 2], u32) {
    let a0 = DATA_BASE;
    let a1 = a0 + s.a_bytes();
    let b0 = a1 + s.a_bytes();
    let b1 = b0 + s.b_bytes();
    ([a0, a1], [b0, b1], b1 + s.b_bytes())
}

fn fixed_regions() -> Vec<Region> {
    vec![
        Region::new("code", 0, 0x3800),
        Region::new("stack", 0x3800, FLAGS_BASE - 0x3800),
        Region::new("flags", FLAGS_BASE, 0x100),
    ]
}

pub fn cannon_layout(s: BlockShape, scheme: BufferScheme) -> BankLayout {
    let mut r = fixed_regions();
    match scheme {
        BufferScheme::Double => {
            let (a, b, c) = double_addrs(s);
            r.push(Region::new("a0", a[0], s.a_bytes()));
            r.push(Region::new("a1", a[1], s.a_bytes()));
            r.push(Region::new("b0", b[0], s.b_bytes()));
            r.push(Region::new("b1", b[1], s.b_bytes()));
            r.push(Region::new("c", c, s.c_bytes()));
        }
        BufferScheme::Half => {
            for (i, a) in HALF_A_SLOTS.iter().enumerate() {
                r.push(Region::new(&format!("a_s{i}"), *a, HALF_SLOT));
            }
            for (i, b) in HALF_B_SLOTS.iter().enumerate() {
                r.push(Region::new(&format!("b_s{i}"), *b, HALF_SLOT));
            }
            r.push(Region::new("c", HALF_C, 0x1000));
        }
    }
    BankLayout::new(r)
}

/// Double buffering when it fits, otherwise the half-buffer scheme for
/// 32×32 blocks.
pub fn choose_scheme(s: BlockShape, mem: &MemoryConfig) -> Result<BufferScheme> {
    if cannon_layout(s, BufferScheme::Double).validate(mem).is_ok() {
        Ok(BufferScheme::Double)
    } else if s == BlockShape::square(32) {
        cannon_layout(s, BufferScheme::Half).validate(mem)?;
        Ok(BufferScheme::Half)
    } else {
        Err(SimError::Layout(format!("{}x{}x{} block does not fit local memory", s.m, s.n, s.k)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operand {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Half {
    Lower,
    Upper,
}

/// Where the lower and upper halves of both operands live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HalfLayout {
    pub lower: usize,
    pub upper: usize,
    pub free: usize,
}

impl HalfLayout {
    pub const INITIAL: HalfLayout = HalfLayout {
        lower: 0,
        upper: 1,
        free: 2,
    };
}

/// One transfer of a half-buffer rotation step: this core's `src_slot` goes
/// to the neighbour's `dst_slot` in `stage` (1 or 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HalfTransfer {
    pub stage: u8,
    pub operand: Operand,
    pub half: Half,
    pub src_slot: usize,
    pub dst_slot: usize,
}

/// Transfers of one rotation step and the layout that follows it. Even
/// steps start from the initial layout, odd steps return to it.
pub fn half_buffer_plan(step: usize) -> (Vec<HalfTransfer>, HalfLayout) {
    let (first, second, after) = if step % 2 == 0 {
        (
            (Half::Lower, 0, 2),
            (Half::Upper, 1, 0),
            HalfLayout {
                lower: 2,
                upper: 0,
                free: 1,
            },
        )
    } else {
        ((Half::Upper, 0, 1), (Half::Lower, 2, 0), HalfLayout::INITIAL)
    };
    let mut v = Vec::new();
    for (stage, (half, src, dst)) in [(1u8, first), (2u8, second)] {
        for operand in [Operand::A, Operand::B] {
            v.push(HalfTransfer {
                stage,
                operand,
                half,
                src_slot: src,
                dst_slot: dst,
            });
        }
    }
    (v, after)
}

fn layout_before(step: usize) -> HalfLayout {
    if step % 2 == 0 {
        HalfLayout::INITIAL
    } else {
        half_buffer_plan(0).1
    }
}

/// Per-core buffer state carried across Cannon passes.
#[derive(Debug, Clone, Copy)]
enum BufState {
    Double { cur: usize },
    Half { step: usize },
}

#[derive(Clone, Copy)]
struct Plan {
    shape: BlockShape,
    scheme: BufferScheme,
    q: usize,
}

impl Plan {
    fn c_addr(&self) -> u32 {
        match self.scheme {
            BufferScheme::Double => double_addrs(self.shape).2,
            BufferScheme::Half => HALF_C,
        }
    }

    /// (offset, bytes) pieces holding the current A (or B) block, in row order.
    fn current(&self, st: BufState, op: Operand) -> Vec<(u32, u32)> {
        match st {
            BufState::Double { cur } => {
                let (a, b, _) = double_addrs(self.shape);
                match op {
                    Operand::A => vec![(a[cur], self.shape.a_bytes())],
                    Operand::B => vec![(b[cur], self.shape.b_bytes())],
                }
            }
            BufState::Half { step } => {
                let l = layout_before(step);
                let slots = match op {
                    Operand::A => HALF_A_SLOTS,
                    Operand::B => HALF_B_SLOTS,
                };
                vec![(slots[l.lower], HALF_SLOT), (slots[l.upper], HALF_SLOT)]
            }
        }
    }
}

struct Mates {
    west: Coord,
    north: Coord,
    east: Coord,
    south: Coord,
}

fn mates(ctx: &Ctx, q: usize) -> Mates {
    let p = ctx.group_pos();
    let at = |r: usize, c: usize| ctx.member(Coord::new(r % q, c % q));
    Mates {
        west: at(p.row, p.col + q - 1),
        north: at(p.row + q - 1, p.col),
        east: at(p.row, p.col + 1),
        south: at(p.row + 1, p.col),
    }
}

fn read_pieces(ctx: &Ctx, pieces: &[(u32, u32)]) -> Result<Vec<f32>> {
    let mut v = Vec::new();
    for &(off, bytes) in pieces {
        v.extend(ctx.read_local_f32(off, bytes as usize / 4)?);
    }
    Ok(v)
}

/// C += A·B on the local blocks, then charge the modeled cycles.
async fn local_product(ctx: &Ctx, plan: &Plan, st: BufState) -> Result<()> {
    let s = plan.shape;
    let a = read_pieces(ctx, &plan.current(st, Operand::A))?;
    let b = read_pieces(ctx, &plan.current(st, Operand::B))?;
    let mut c = ctx.read_local_f32(plan.c_addr(), s.m * s.k)?;
    for i in 0..s.m {
        let crow = &mut c[i * s.k..(i + 1) * s.k];
        for kk in 0..s.n {
            let x = a[i * s.n + kk];
            let brow = &b[kk * s.k..(kk + 1) * s.k];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv = x.mul_add(*bv, *cv);
            }
        }
    }
    ctx.write_local_f32(plan.c_addr(), &c)?;
    let model = ctx.with_config(|c| c.cost_models.matmul.clone());
    ctx.compute(matmul_core_time(s.m, s.n, s.k, &model)?).await
}

async fn signal_ready(ctx: &Ctx, m: &Mates, token: u32) -> Result<()> {
    ctx.write_u32(ctx.global(m.east, A_READY)?, token).await?;
    ctx.write_u32(ctx.global(m.south, B_READY)?, token).await
}

/// One exchange stage: wait until both receivers are ready, push the pieces,
/// announce them, and wait for this core's own incoming pieces.
async fn exchange(ctx: &Ctx, m: &Mates, token: u32, moves: &[(Operand, u32, u32, u32)]) -> Result<()> {
    ctx.flag_wait(A_READY, token).await?;
    ctx.flag_wait(B_READY, token).await?;
    for &(op, src, dst, bytes) in moves {
        let to = match op {
            Operand::A => m.west,
            Operand::B => m.north,
        };
        let d = DmaDescriptor::copy_1d(0, ctx.my_global(src)?, ctx.global(to, dst)?, bytes);
        ctx.dma_start(d).await?;
    }
    ctx.write_u32(ctx.global(m.west, A_SENT)?, token).await?;
    ctx.write_u32(ctx.global(m.north, B_SENT)?, token).await?;
    ctx.flag_wait(A_SENT, token).await?;
    ctx.flag_wait(B_SENT, token).await
}

/// q compute rounds with a rotation (A west, B north) between consecutive
/// rounds. `token` numbers exchange stages and must advance identically on
/// every core.
async fn cannon_pass(ctx: &Ctx, plan: &Plan, st: &mut BufState, token: &mut u32) -> Result<()> {
    let m = mates(ctx, plan.q);
    for round in 0..plan.q {
        let rotate = round + 1 < plan.q;
        if rotate {
            *token += 1;
            signal_ready(ctx, &m, *token).await?;
        }
        local_product(ctx, plan, *st).await?;
        if !rotate {
            break;
        }
        match *st {
            BufState::Double { cur } => {
                let (a, b, _) = double_addrs(plan.shape);
                let nxt = 1 - cur;
                let moves = [
                    (Operand::A, a[cur], a[nxt], plan.shape.a_bytes()),
                    (Operand::B, b[cur], b[nxt], plan.shape.b_bytes()),
                ];
                exchange(ctx, &m, *token, &moves).await?;
                *st = BufState::Double { cur: nxt };
            }
            BufState::Half { step } => {
                let (transfers, _) = half_buffer_plan(step);
                for stage in [1u8, 2] {
                    if stage == 2 {
                        *token += 1;
                        signal_ready(ctx, &m, *token).await?;
                    }
                    let moves: Vec<_> = transfers
                        .iter()
                        .filter(|t| t.stage == stage)
                        .map(|t| {
                            let slots = match t.operand {
                                Operand::A => HALF_A_SLOTS,
                                Operand::B => HALF_B_SLOTS,
                            };
                            (t.operand, slots[t.src_slot], slots[t.dst_slot], HALF_SLOT)
                        })
                        .collect();
                    exchange(ctx, &m, *token, &moves).await?;
                }
                *st = BufState::Half { step: step + 1 };
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct MatmulRun {
    pub c: Matrix,
    pub elapsed: SimTime,
    pub seconds: f64,
    pub flops: f64,
    pub gflops: f64,
    pub scheme: BufferScheme,
    pub rounds: usize,
}

fn initial_state(scheme: BufferScheme) -> BufState {
    match scheme {
        BufferScheme::Double => BufState::Double { cur: 0 },
        BufferScheme::Half => BufState::Half { step: 0 },
    }
}

/// Writes `vals` (row-major, `row_len` per row) into the pieces of a block.
fn write_block(
    mem: &mut crate::ecore::Memory,
    map: &crate::ecore::AddressMap,
    core: Coord,
    pieces: &[(u32, u32)],
    vals: &[f32],
) -> Result<()> {
    let mut at = 0;
    for &(off, bytes) in pieces {
        let n = bytes as usize / 4;
        mem.write_f32s(map.global(core, off)?, &vals[at..at + n])?;
        at += n;
    }
    Ok(())
}

/// Cannon's algorithm on a square workgroup. The host loads the skewed
/// blocks, so core (i,j) starts with A(i, i+j) and B(i+j, j).
pub fn cannon_matmul(cfg: &MachineConfig, a: &Matrix, b: &Matrix, group: Workgroup, opts: &SimOptions) -> Result<MatmulRun> {
    check_shapes(a, b)?;
    if group.rows != group.cols {
        return Err(SimError::Config(format!(
            "Cannon needs a square workgroup, got {}x{}",
            group.rows, group.cols
        )));
    }
    let q = group.rows;
    if a.rows % q != 0 || a.cols % q != 0 || b.cols % q != 0 {
        return Err(SimError::Config(format!(
            "{}x{}x{} product does not split over a {q}x{q} workgroup",
            a.rows, a.cols, b.cols
        )));
    }
    let shape = BlockShape {
        m: a.rows / q,
        n: a.cols / q,
        k: b.cols / q,
    };
    matmul_core_time(shape.m, shape.n, shape.k, &cfg.cost_models.matmul)?;
    let scheme = choose_scheme(shape, &cfg.memory)?;
    let plan = Plan { shape, scheme, q };
    let st0 = initial_state(scheme);
    let res = host_run(
        cfg,
        group,
        opts,
        |host| {
            let map = host.map();
            let mut mem = host.memory_mut();
            for core in group.members() {
                let (i, j) = (core.row - group.start.row, core.col - group.start.col);
                let s = (i + j) % q;
                let ablk = a.block(i * shape.m, s * shape.n, shape.m, shape.n);
                let bblk = b.block(s * shape.n, j * shape.k, shape.n, shape.k);
                write_block(&mut mem, &map, core, &plan.current(st0, Operand::A), &ablk)?;
                write_block(&mut mem, &map, core, &plan.current(st0, Operand::B), &bblk)?;
            }
            Ok(())
        },
        move |ctx| async move {
            let mut st = st0;
            let mut token = 0;
            cannon_pass(&ctx, &plan, &mut st, &mut token).await
        },
        |host| {
            let map = host.map();
            let mem = host.memory();
            let mut c = Matrix::zeros(a.rows, b.cols);
            for core in group.members() {
                let (i, j) = (core.row - group.start.row, core.col - group.start.col);
                let vals = mem.read_f32s(map.global(core, plan.c_addr())?, shape.m * shape.k)?;
                c.set_block(i * shape.m, j * shape.k, shape.m, shape.k, &vals);
            }
            Ok(c)
        },
    )?;
    let seconds = res.end_time.seconds(cfg.clock_hz());
    let flops = matmul_flops(a.rows, a.cols, b.cols);
    Ok(MatmulRun {
        c: res.output,
        elapsed: res.end_time,
        seconds,
        flops,
        gflops: flops / seconds / 1e9,
        scheme,
        rounds: q,
    })
}

/// Single-core product (at most 32 in every dimension).
pub fn single_core_matmul(cfg: &MachineConfig, a: &Matrix, b: &Matrix, opts: &SimOptions) -> Result<MatmulRun> {
    cannon_matmul(cfg, a, b, Workgroup::at_origin(1, 1), opts)
}

#[derive(Debug, Clone)]
pub struct OffchipRun {
    pub c: Matrix,
    pub elapsed: SimTime,
    pub seconds: f64,
    pub flops: f64,
    pub gflops: f64,
    /// Share of the run core (0,0) spends inside on-chip Cannon passes.
    pub compute_fraction: f64,
    /// Everything else: paging blocks in and out over the link.
    pub transfer_fraction: f64,
    pub tiles: usize,
}

/// Product of matrices held in shared memory. The workgroup computes one
/// on-chip tile of C at a time: it pages in the matching tiles of A and B,
/// runs a Cannon pass, and repeats along the inner dimension; the finished
/// C block goes back out while the next tile's operands come in.
pub fn offchip_matmul(
    cfg: &MachineConfig,
    a: &Matrix,
    b: &Matrix,
    group: Workgroup,
    block: BlockShape,
    opts: &SimOptions,
) -> Result<OffchipRun> {
    check_shapes(a, b)?;
    if group.rows != group.cols {
        return Err(SimError::Config("off-chip matmul needs a square workgroup".into()));
    }
    let q = group.rows;
    let (tm, tn, tk) = (q * block.m, q * block.n, q * block.k);
    if a.rows % tm != 0 || a.cols % tn != 0 || b.cols % tk != 0 {
        return Err(SimError::Config(format!(
            "{}x{}x{} product is not a whole number of {tm}x{tn}x{tk} tiles",
            a.rows, a.cols, b.cols
        )));
    }
    matmul_core_time(block.m, block.n, block.k, &cfg.cost_models.matmul)?;
    let (big_m, big_n, big_k) = (a.rows, a.cols, b.cols);
    let a_off = 0u32;
    let b_off = (big_m * big_n * 4) as u32;
    let c_off = b_off + (big_n * big_k * 4) as u32;
    let total = c_off as u64 + (big_m * big_k * 4) as u64;
    if total > cfg.memory.shared_bytes as u64 {
        return Err(SimError::Capacity(format!(
            "operands need {total} bytes of shared memory, {} available",
            cfg.memory.shared_bytes
        )));
    }
    let scheme = choose_scheme(block, &cfg.memory)?;
    let plan = Plan { shape: block, scheme, q };
    let tiles_m = big_m / tm;
    let tiles_k = big_k / tk;
    let steps = big_n / tn;
    let compute_cycles = Rc::new(RefCell::new(0.0f64));
    let probe = compute_cycles.clone();
    let origin = group.start;

    let res = host_run(
        cfg,
        group,
        opts,
        |host| {
            let map = host.map();
            let mut mem = host.memory_mut();
            mem.write_f32s(map.shared(a_off)?, &a.data)?;
            mem.write_f32s(map.shared(b_off)?, &b.data)?;
            Ok(())
        },
        move |ctx| {
            let probe = probe.clone();
            async move {
                let p = ctx.group_pos();
                let (i, j) = (p.row, p.col);
                let s = (i + j) % q;
                let mut st = initial_state(plan.scheme);
                let mut token = 0;
                let mut page_out: Option<DmaHandle> = None;
                let zeros = vec![0.0f32; block.m * block.k];
                for ti in 0..tiles_m {
                    for tkk in 0..tiles_k {
                        ctx.write_local_f32(plan.c_addr(), &zeros)?;
                        for tnn in 0..steps {
                            // Operand rows this core needs, in shared memory.
                            let a_row0 = ti * tm + i * block.m;
                            let a_col0 = tnn * tn + s * block.n;
                            let b_row0 = tnn * tn + s * block.n;
                            let b_col0 = tkk * tk + j * block.k;
                            let mut segs = Vec::new();
                            for (op, pieces) in [
                                (Operand::A, plan.current(st, Operand::A)),
                                (Operand::B, plan.current(st, Operand::B)),
                            ] {
                                let (row0, col0, row_len, ld, base) = match op {
                                    Operand::A => (a_row0, a_col0, block.n, big_n, a_off),
                                    Operand::B => (b_row0, b_col0, block.k, big_k, b_off),
                                };
                                let mut r = row0;
                                for (off, bytes) in pieces {
                                    let nrows = bytes as usize / 4 / row_len;
                                    let src = base + ((r * ld + col0) * 4) as u32;
                                    segs.push(DmaDescriptor::block_2d(
                                        0,
                                        ctx.shared(src)?,
                                        ctx.my_global(off)?,
                                        4,
                                        row_len as u32,
                                        nrows as u32,
                                        (ld * 4) as u32,
                                        (row_len * 4) as u32,
                                    ));
                                    r += nrows;
                                }
                            }
                            for d in segs {
                                ctx.dma_start(d).await?;
                            }
                            if tnn == 0 {
                                if let Some(h) = page_out.take() {
                                    ctx.dma_wait(h).await?;
                                }
                            }
                            ctx.barrier().await?;
                            let t0 = ctx.now();
                            cannon_pass(&ctx, &plan, &mut st, &mut token).await?;
                            if ctx.coord() == origin {
                                *probe.borrow_mut() += (ctx.now() - t0).cycles();
                            }
                        }
                        let dst = c_off + (((ti * tm + i * block.m) * big_k + tkk * tk + j * block.k) * 4) as u32;
                        let d = DmaDescriptor::block_2d(
                            1,
                            ctx.my_global(plan.c_addr())?,
                            ctx.shared(dst)?,
                            4,
                            block.k as u32,
                            block.m as u32,
                            (block.k * 4) as u32,
                            (big_k * 4) as u32,
                        )
                        .with_mode(DmaMode::NonBlocking);
                        page_out = Some(ctx.dma_start(d).await?);
                    }
                }
                if let Some(h) = page_out {
                    ctx.dma_wait(h).await?;
                }
                Ok(())
            }
        },
        |host| {
            let map = host.map();
            let mem = host.memory();
            let vals = mem.read_f32s(map.shared(c_off)?, big_m * big_k)?;
            Matrix::from_vec(big_m, big_k, vals)
        },
    )?;
    let seconds = res.end_time.seconds(cfg.clock_hz());
    let flops = matmul_flops(big_m, big_n, big_k);
    let compute_fraction = *compute_cycles.borrow() / res.end_time.cycles();
    Ok(OffchipRun {
        c: res.output,
        elapsed: res.end_time,
        seconds,
        flops,
        gflops: flops / seconds / 1e9,
        compute_fraction,
        transfer_fraction: 1.0 - compute_fraction,
        tiles: tiles_m * tiles_k * steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(rows: usize, cols: usize, seed: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |i, j| ((i * 7 + j * 13 + seed) % 9) as f32 - 4.0)
    }

    #[test]
    fn reference_identity() {
        let a = ints(5, 5, 1);
        assert_eq!(matmul_reference(&a, &Matrix::identity(5)).unwrap(), a);
    }

    #[test]
    fn half_plan_cycles_back() {
        let (_, after0) = half_buffer_plan(0);
        assert_eq!(after0, HalfLayout { lower: 2, upper: 0, free: 1 });
        let (t1, after1) = half_buffer_plan(1);
        assert_eq!(after1, HalfLayout::INITIAL);
        // Odd step reads the upper half from slot 0 first.
        assert_eq!((t1[0].half, t1[0].src_slot, t1[0].dst_slot), (Half::Upper, 0, 1));
    }

    #[test]
    fn scheme_selection() {
        let mem = MemoryConfig::default();
        assert_eq!(choose_scheme(BlockShape::square(16), &mem).unwrap(), BufferScheme::Double);
        assert_eq!(choose_scheme(BlockShape::square(32), &mem).unwrap(), BufferScheme::Half);
    }

    #[test]
    fn single_core_time_is_cost_model() {
        let cfg = MachineConfig::default();
        let (a, b) = (ints(16, 16, 0), ints(16, 16, 3));
        let run = single_core_matmul(&cfg, &a, &b, &SimOptions::default()).unwrap();
        let want = matmul_core_time(16, 16, 16, &cfg.cost_models.matmul).unwrap();
        assert_eq!(run.elapsed, SimTime::from_cycles(want));
        assert_eq!(run.c, matmul_reference(&a, &b).unwrap());
    }

    #[test]
    fn cannon_exact_on_integers() {
        let cfg = MachineConfig::default();
        for (q, s) in [(2, 4), (3, 2), (2, 32)] {
            let (a, b) = (ints(q * s, q * s, 1), ints(q * s, q * s, 5));
            let run = cannon_matmul(&cfg, &a, &b, Workgroup::at_origin(q, q), &SimOptions::default()).unwrap();
            assert_eq!(run.c, matmul_reference(&a, &b).unwrap(), "q={q} s={s}");
        }
    }

    #[test]
    fn offchip_exact_on_integers() {
        let cfg = MachineConfig::default();
        let (a, b) = (ints(8, 16, 2), ints(16, 12, 4));
        let run = offchip_matmul(
            &cfg,
            &a,
            &b,
            Workgroup::at_origin(2, 2),
            BlockShape { m: 2, n: 4, k: 3 },
            &SimOptions::default(),
        )
        .unwrap();
        assert_eq!(run.c, matmul_reference(&a, &b).unwrap());
        assert!(run.compute_fraction > 0.0 && run.compute_fraction < 1.0);
    }

    #[test]
    fn non_square_group_rejected() {
        let cfg = MachineConfig::default();
        let a = ints(4, 4, 0);
        let r = cannon_matmul(&cfg, &a, &a, Workgroup::at_origin(1, 2), &SimOptions::default());
        assert!(matches!(r, Err(SimError::Config(_))));
    }
}
