//! Five-point stencil: host references and the distributed device kernel.
//!
//! Update order inside a block: the block is swept in column stripes of
//! `stripe_width` points. Within a stripe every point reads pre-sweep values
//! (Jacobi), except that the left neighbour of the first stripe column is the
//! already-updated last column of the previous stripe. Values outside the
//! block come from the halo, which always holds previous-iteration data. The
//! outer boundary ring is fixed (Dirichlet).

use serde::{Deserialize, Serialize};

use crate::config::MachineConfig;
use crate::ecore::{BankLayout, DmaDescriptor, DmaStart, Region};
use crate::error::{Result, SimError};
use crate::kernels::cost::{stencil_core_time, stencil_flops};
use crate::kernels::data::Grid;
use crate::mesh::Coord;
use crate::runtime::{host_run, Ctx, SimOptions, Workgroup};
use crate::time::SimTime;

pub const STRIPE_WIDTH: usize = 20;
pub const CODE_END: u32 = 0x2000;
pub const GRID_BASE: u32 = 0x2000;
pub const READY_BASE: u32 = 0x7F00;
pub const SENT_BASE: u32 = 0x7F10;
pub const STACK_BASE: u32 = 0x7F80;

/// Coefficients by neighbour role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StencilWeights {
    pub top: f32,
    pub left: f32,
    pub centre: f32,
    pub right: f32,
    pub bottom: f32,
}

impl StencilWeights {
    /// Positional form w1..w5 = top, centre, bottom, right, left.
    pub fn from_positional(w: [f32; 5]) -> StencilWeights {
        StencilWeights {
            top: w[0],
            centre: w[1],
            bottom: w[2],
            right: w[3],
            left: w[4],
        }
    }

    /// Plain average of the five points.
    pub fn averaging() -> StencilWeights {
        StencilWeights::from_positional([0.2; 5])
    }
}

/// Fused multiply-adds in the order T, L, C, R, B starting from zero.
#[inline]
pub fn point_update(w: &StencilWeights, t: f32, l: f32, c: f32, r: f32, b: f32) -> f32 {
    let mut acc = 0.0f32;
    acc = t.mul_add(w.top, acc);
    acc = l.mul_add(w.left, acc);
    acc = c.mul_add(w.centre, acc);
    acc = r.mul_add(w.right, acc);
    b.mul_add(w.bottom, acc)
}

/// Pure Jacobi sweeps on the whole grid.
pub fn stencil_jacobi(grid: &Grid, w: &StencilWeights, iters: usize) -> Grid {
    let mut cur = grid.clone();
    for _ in 0..iters {
        let old = cur.clone();
        for i in 1..=grid.rows {
            for j in 1..=grid.cols {
                let v = point_update(
                    w,
                    old.at(i - 1, j),
                    old.at(i, j - 1),
                    old.at(i, j),
                    old.at(i, j + 1),
                    old.at(i + 1, j),
                );
                cur.set(i, j, v);
            }
        }
    }
    cur
}

/// Reference for a grid split into `block_rows × block_cols` blocks with the
/// stripe rule applied inside each block.
pub fn stencil_reference_blocked(
    grid: &Grid,
    w: &StencilWeights,
    iters: usize,
    block_rows: usize,
    block_cols: usize,
    stripe_width: usize,
) -> Result<Grid> {
    if block_rows == 0 || block_cols == 0 || stripe_width == 0 {
        return Err(SimError::Domain("zero block or stripe size".into()));
    }
    if grid.rows % block_rows != 0 || grid.cols % block_cols != 0 {
        return Err(SimError::Config(format!(
            "{}x{} grid does not split into {block_rows}x{block_cols} blocks",
            grid.rows, grid.cols
        )));
    }
    let mut cur = grid.clone();
    for _ in 0..iters {
        let old = cur.clone();
        for bi in (0..grid.rows).step_by(block_rows) {
            for bj in (0..grid.cols).step_by(block_cols) {
                // Global padded coordinates of this block's interior.
                let (r0, c0) = (bi + 1, bj + 1);
                let (r1, c1) = (bi + block_rows, bj + block_cols);
                for s0 in (c0..=c1).step_by(stripe_width) {
                    let s1 = (s0 + stripe_width - 1).min(c1);
                    let mut fresh = Vec::with_capacity(block_rows * (s1 - s0 + 1));
                    for i in r0..=r1 {
                        for j in s0..=s1 {
                            let left = if j == s0 && j > c0 { cur.at(i, j - 1) } else { old.at(i, j - 1) };
                            fresh.push(point_update(
                                w,
                                old.at(i - 1, j),
                                left,
                                old.at(i, j),
                                old.at(i, j + 1),
                                old.at(i + 1, j),
                            ));
                        }
                    }
                    let mut it = fresh.into_iter();
                    for i in r0..=r1 {
                        for j in s0..=s1 {
                            cur.set(i, j, it.next().unwrap());
                        }
                    }
                }
            }
        }
    }
    Ok(cur)
}

/// Single-block reference with the device stripe rule: what one core
/// computes when it holds the whole grid.
pub fn stencil_reference(grid: &Grid, w: &StencilWeights, iters: usize) -> Grid {
    stencil_reference_blocked(grid, w, iters, grid.rows, grid.cols, STRIPE_WIDTH)
        .expect("one block always divides the grid")
}

/// One device sweep over a padded local block, in place.
fn sweep_local(buf: &mut [f32], rows: usize, cols: usize, stripe: usize, w: &StencilWeights) {
    let p = cols + 2;
    let mut col = 1;
    let mut fresh = Vec::with_capacity(rows * stripe);
    while col <= cols {
        let end = (col + stripe).min(cols + 1);
        fresh.clear();
        for i in 1..=rows {
            let row = i * p;
            for j in col..end {
                fresh.push(point_update(
                    w,
                    buf[row - p + j],
                    buf[row + j - 1],
                    buf[row + j],
                    buf[row + j + 1],
                    buf[row + p + j],
                ));
            }
        }
        let width = end - col;
        for i in 1..=rows {
            let k = (i - 1) * width;
            buf[i * p + col..i * p + end].copy_from_slice(&fresh[k..k + width]);
        }
        col = end;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Exchange {
    /// Halo exchange with the four neighbours after every sweep.
    Halo,
    /// No communication: every core sweeps its own block in isolation.
    None,
}

#[derive(Debug, Clone)]
pub struct StencilRun {
    pub grid: Grid,
    pub elapsed: SimTime,
    pub seconds: f64,
    pub flops: f64,
    pub gflops: f64,
    pub block: (usize, usize),
}

/// Scratchpad layout for a `rows × cols` block.
pub fn stencil_layout(rows: usize, cols: usize) -> BankLayout {
    let grid_bytes = ((rows + 2) * (cols + 2) * 4) as u32;
    BankLayout::new(vec![
        Region::new("code", 0, CODE_END),
        Region::new("grid", GRID_BASE, grid_bytes),
        Region::new("ready", READY_BASE, 16),
        Region::new("sent", SENT_BASE, 16),
        Region::new("stack", STACK_BASE, 0x80),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    North = 0,
    South = 1,
    West = 2,
    East = 3,
}

impl Dir {
    fn opposite(self) -> Dir {
        match self {
            Dir::North => Dir::South,
            Dir::South => Dir::North,
            Dir::West => Dir::East,
            Dir::East => Dir::West,
        }
    }
}

#[derive(Clone, Copy)]
struct Params {
    rows: usize,
    cols: usize,
    iters: usize,
    weights: StencilWeights,
    exchange: Exchange,
}

fn cell(cols: usize, i: usize, j: usize) -> u32 {
    GRID_BASE + ((i * (cols + 2) + j) * 4) as u32
}

/// Halo descriptors pushing this core's edge rows/columns into the
/// neighbours' ghost cells.
fn halo_chain(ctx: &Ctx, p: &Params, neighbours: &[(Dir, Coord)]) -> Result<Option<DmaDescriptor>> {
    let (r, c) = (p.rows, p.cols);
    let pitch = ((c + 2) * 4) as u32;
    let row_word = if c % 2 == 0 { 8 } else { 4 };
    let mut segs = Vec::new();
    for &(d, n) in neighbours {
        let (src, dst) = match d {
            Dir::North => (cell(c, 1, 1), cell(c, r + 1, 1)),
            Dir::South => (cell(c, r, 1), cell(c, 0, 1)),
            Dir::West => (cell(c, 1, 1), cell(c, 1, c + 1)),
            Dir::East => (cell(c, 1, c), cell(c, 1, 0)),
        };
        let (src, dst) = (ctx.my_global(src)?, ctx.global(n, dst)?);
        segs.push(match d {
            Dir::North | Dir::South => {
                DmaDescriptor::block_2d(0, src, dst, row_word, (c * 4) as u32 / row_word, 1, 0, 0)
            }
            Dir::West | Dir::East => DmaDescriptor::block_2d(0, src, dst, 4, 1, r as u32, pitch, pitch),
        });
    }
    Ok(DmaDescriptor::chained(segs))
}

async fn stencil_kernel(ctx: Ctx, p: Params) -> Result<()> {
    let g = ctx.group();
    let pos = ctx.group_pos();
    let mut neighbours = Vec::new();
    if p.exchange == Exchange::Halo {
        if pos.row > 0 {
            neighbours.push((Dir::North, ctx.member(Coord::new(pos.row - 1, pos.col))));
        }
        if pos.row + 1 < g.rows {
            neighbours.push((Dir::South, ctx.member(Coord::new(pos.row + 1, pos.col))));
        }
        if pos.col > 0 {
            neighbours.push((Dir::West, ctx.member(Coord::new(pos.row, pos.col - 1))));
        }
        if pos.col + 1 < g.cols {
            neighbours.push((Dir::East, ctx.member(Coord::new(pos.row, pos.col + 1))));
        }
    }
    let chain = halo_chain(&ctx, &p, &neighbours)?;
    let (model, stripe) = ctx.with_config(|c| (c.cost_models.stencil.clone(), c.cost_models.stencil.stripe_width));
    let sweep_cycles = stencil_core_time(p.rows, p.cols, &model);
    let n = (p.rows + 2) * (p.cols + 2);
    let mut start = DmaStart::Fresh;
    for it in 0..p.iters {
        let mut buf = ctx.read_local_f32(GRID_BASE, n)?;
        sweep_local(&mut buf, p.rows, p.cols, stripe, &p.weights);
        ctx.write_local_f32(GRID_BASE, &buf)?;
        ctx.compute(sweep_cycles).await?;

        let Some(chain) = chain.as_ref() else { continue };
        if it + 1 == p.iters {
            break;
        }
        let token = it as u32 + 1;
        for &(d, nb) in &neighbours {
            ctx.write_u32(ctx.global(nb, READY_BASE + 4 * d.opposite() as u32)?, token).await?;
        }
        for &(d, _) in &neighbours {
            ctx.flag_wait(READY_BASE + 4 * d as u32, token).await?;
        }
        ctx.dma_start(chain.clone().with_start(start)).await?;
        start = DmaStart::Resident;
        for &(d, nb) in &neighbours {
            ctx.write_u32(ctx.global(nb, SENT_BASE + 4 * d.opposite() as u32)?, token).await?;
        }
        for &(d, _) in &neighbours {
            ctx.flag_wait(SENT_BASE + 4 * d as u32, token).await?;
        }
    }
    Ok(())
}

/// Runs `iters` sweeps of the grid split evenly over `group`.
pub fn stencil_distributed(
    cfg: &MachineConfig,
    grid: &Grid,
    weights: StencilWeights,
    iters: usize,
    group: Workgroup,
    exchange: Exchange,
    opts: &SimOptions,
) -> Result<StencilRun> {
    if grid.rows % group.rows != 0 || grid.cols % group.cols != 0 {
        return Err(SimError::Config(format!(
            "{}x{} grid does not split evenly over a {}x{} workgroup",
            grid.rows, grid.cols, group.rows, group.cols
        )));
    }
    let (br, bc) = (grid.rows / group.rows, grid.cols / group.cols);
    stencil_layout(br, bc).validate(&cfg.memory)?;
    let params = Params {
        rows: br,
        cols: bc,
        iters,
        weights,
        exchange,
    };
    let pitch = bc + 2;
    let res = host_run(
        cfg,
        group,
        opts,
        |host| {
            let map = host.map();
            let mut mem = host.memory_mut();
            for core in group.members() {
                let (gi, gj) = (core.row - group.start.row, core.col - group.start.col);
                for i in 0..br + 2 {
                    let row = &grid.data[(gi * br + i) * grid.pitch() + gj * bc..][..pitch];
                    mem.write_f32s(map.global(core, cell(bc, i, 0))?, row)?;
                }
            }
            Ok(())
        },
        move |ctx| stencil_kernel(ctx, params),
        |host| {
            let map = host.map();
            let mem = host.memory();
            let mut out = grid.clone();
            for core in group.members() {
                let (gi, gj) = (core.row - group.start.row, core.col - group.start.col);
                for i in 1..=br {
                    let vals = mem.read_f32s(map.global(core, cell(bc, i, 1))?, bc)?;
                    let at = (gi * br + i) * grid.pitch() + gj * bc + 1;
                    out.data[at..at + bc].copy_from_slice(&vals);
                }
            }
            Ok(out)
        },
    )?;
    let seconds = res.end_time.seconds(cfg.clock_hz());
    let flops = stencil_flops(grid.rows, grid.cols, &cfg.cost_models.stencil) * iters as f64;
    Ok(StencilRun {
        grid: res.output,
        elapsed: res.end_time,
        seconds,
        flops,
        gflops: if seconds > 0.0 { flops / seconds / 1e9 } else { 0.0 },
        block: (br, bc),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(rows: usize, cols: usize) -> Grid {
        Grid::from_fn(rows, cols, |i, j| ((i * 31 + j * 7) % 17) as f32 - 8.0).unwrap()
    }

    #[test]
    fn narrow_blocks_are_jacobi() {
        let g = ramp(12, 16);
        let w = StencilWeights::from_positional([0.1, 0.4, 0.2, 0.15, 0.15]);
        let a = stencil_reference_blocked(&g, &w, 3, 4, 8, STRIPE_WIDTH).unwrap();
        assert_eq!(a, stencil_jacobi(&g, &w, 3));
    }

    #[test]
    fn device_sweep_matches_blocked_reference() {
        let g = ramp(6, 45);
        let w = StencilWeights::averaging();
        let want = stencil_reference_blocked(&g, &w, 1, 6, 45, STRIPE_WIDTH).unwrap();
        let mut buf = g.data.clone();
        sweep_local(&mut buf, 6, 45, STRIPE_WIDTH, &w);
        assert_eq!(buf, want.data);
    }

    #[test]
    fn single_core_time_is_closed_form() {
        let cfg = MachineConfig::default();
        let g = ramp(40, 40);
        let run = stencil_distributed(
            &cfg,
            &g,
            StencilWeights::averaging(),
            3,
            Workgroup::at_origin(1, 1),
            Exchange::Halo,
            &SimOptions::default(),
        )
        .unwrap();
        // Each sweep is charged once, rounded to whole ticks.
        let sweep = SimTime::from_cycles(stencil_core_time(40, 40, &cfg.cost_models.stencil));
        assert_eq!(run.elapsed, sweep + sweep + sweep);
    }

    #[test]
    fn distributed_matches_reference() {
        let cfg = MachineConfig::default();
        let g = ramp(8, 60);
        let w = StencilWeights::from_positional([0.3, -0.5, 0.25, 0.125, 0.75]);
        let run = stencil_distributed(
            &cfg,
            &g,
            w,
            4,
            Workgroup::at_origin(2, 2),
            Exchange::Halo,
            &SimOptions::default(),
        )
        .unwrap();
        let want = stencil_reference_blocked(&g, &w, 4, 4, 30, STRIPE_WIDTH).unwrap();
        assert_eq!(run.grid, want);
    }

    #[test]
    fn oversized_block_rejected() {
        let cfg = MachineConfig::default();
        let g = Grid::new(100, 100).unwrap();
        let r = stencil_distributed(
            &cfg,
            &g,
            StencilWeights::averaging(),
            1,
            Workgroup::at_origin(1, 1),
            Exchange::Halo,
            &SimOptions::default(),
        );
        assert!(matches!(r, Err(SimError::Layout(_))));
    }

    #[test]
    fn identity_weights_leave_grid_unchanged() {
        let g = ramp(9, 47);
        let w = StencilWeights::from_positional([0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(stencil_reference(&g, &w, 5), g);
    }

    #[test]
    fn zero_weights_clear_interior_only() {
        let g = ramp(7, 7);
        let out = stencil_reference(&g, &StencilWeights::from_positional([0.0; 5]), 1);
        assert!(out.interior().iter().all(|v| *v == 0.0));
        assert_eq!(out.at(0, 3), g.at(0, 3));
        assert_eq!(out.at(8, 8), g.at(8, 8));
    }
}
