//! Experiment definitions and their runners.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bench::micro::{ping_pong, sweep_sizes, Method};
use crate::bench::reference::{LATENCY_MESSAGE_BYTES, LATENCY_PAIRS};
use crate::config::MachineConfig;
use crate::elink::contention_experiment;
use crate::error::{Result, SimError};
use crate::kernels::matmul::{cannon_matmul, matmul_reference, offchip_matmul, BlockShape};
use crate::kernels::stencil::{stencil_distributed, stencil_reference_blocked, Exchange, StencilWeights};
use crate::kernels::{Grid, Matrix};
use crate::mesh::Coord;
use crate::runtime::{SimOptions, Workgroup};

/// Core-grid shape written `RxC`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub const fn new(rows: usize, cols: usize) -> Shape {
        Shape { rows, cols }
    }

    pub fn cores(&self) -> usize {
        self.rows * self.cols
    }

    pub fn group(&self) -> Workgroup {
        Workgroup::at_origin(self.rows, self.cols)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl FromStr for Shape {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Shape> {
        let (r, c) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| SimError::Config(format!("expected RxC, got {s:?}")))?;
        let p = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| SimError::Config(format!("expected RxC, got {s:?}")))
        };
        Ok(Shape::new(p(r)?, p(c)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum App {
    Stencil,
    Matmul,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentSpec {
    Bandwidth {
        src: Coord,
        dst: Coord,
        sizes: Vec<u64>,
        repetitions: u32,
    },
    Latency {
        pairs: Vec<(Coord, Coord)>,
        message_bytes: u64,
        repetitions: u32,
    },
    Elink {
        writers: usize,
        block_bytes: u64,
        duration_s: f64,
    },
    Stencil {
        rows: usize,
        cols: usize,
        cores: Shape,
        iterations: usize,
        exchange: Exchange,
    },
    Matmul {
        m: usize,
        n: usize,
        k: usize,
        cores: Shape,
    },
    WeakScaling {
        app: App,
        iterations: usize,
    },
    StrongScaling {
        app: App,
        iterations: usize,
    },
}

impl ExperimentSpec {
    pub fn bandwidth() -> ExperimentSpec {
        ExperimentSpec::Bandwidth {
            src: Coord::new(0, 0),
            dst: Coord::new(0, 1),
            sizes: sweep_sizes(),
            repetitions: 2,
        }
    }

    pub fn latency() -> ExperimentSpec {
        ExperimentSpec::Latency {
            pairs: LATENCY_PAIRS.iter().map(|p| (p.0, p.1)).collect(),
            message_bytes: LATENCY_MESSAGE_BYTES,
            repetitions: 2,
        }
    }

    pub fn elink(writers: usize) -> ExperimentSpec {
        ExperimentSpec::Elink {
            writers,
            block_bytes: 2048,
            duration_s: 2.0,
        }
    }

    /// Stencil with a per-core block of `br × bc`.
    pub fn stencil_blocks(br: usize, bc: usize, cores: Shape, iterations: usize, exchange: Exchange) -> ExperimentSpec {
        ExperimentSpec::Stencil {
            rows: br * cores.rows,
            cols: bc * cores.cols,
            cores,
            iterations,
            exchange,
        }
    }

    pub fn matmul(size: usize, cores: Shape) -> ExperimentSpec {
        ExperimentSpec::Matmul {
            m: size,
            n: size,
            k: size,
            cores,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentSpec::Bandwidth { .. } => "bandwidth",
            ExperimentSpec::Latency { .. } => "latency",
            ExperimentSpec::Elink { .. } => "elink",
            ExperimentSpec::Stencil { .. } => "stencil",
            ExperimentSpec::Matmul { .. } => "matmul",
            ExperimentSpec::WeakScaling { .. } => "weak_scaling",
            ExperimentSpec::StrongScaling { .. } => "strong_scaling",
        }
    }

    /// Cheap checks done before any simulation starts.
    pub fn validate(&self, cfg: &MachineConfig) -> Result<()> {
        let mesh = crate::mesh::Mesh::new(cfg.mesh.rows, cfg.mesh.cols)?;
        let fits = |s: &Shape| {
            if s.rows == 0 || s.cols == 0 || s.rows > mesh.rows || s.cols > mesh.cols {
                Err(SimError::Config(format!("{s} cores do not fit a {}x{} mesh", mesh.rows, mesh.cols)))
            } else {
                Ok(())
            }
        };
        match self {
            ExperimentSpec::Bandwidth {
                src,
                dst,
                sizes,
                repetitions,
            } => {
                mesh.check(*src)?;
                mesh.check(*dst)?;
                if src == dst || sizes.is_empty() || *repetitions == 0 {
                    return Err(SimError::Config("bandwidth needs two cores, sizes and repetitions".into()));
                }
                if let Some(s) = sizes.iter().find(|&&s| s == 0 || s % 4 != 0) {
                    return Err(SimError::Config(format!("message size {s} is not a positive multiple of 4")));
                }
            }
            ExperimentSpec::Latency {
                pairs,
                message_bytes,
                repetitions,
            } => {
                for (a, b) in pairs {
                    mesh.check(*a)?;
                    mesh.check(*b)?;
                }
                if *message_bytes == 0 || message_bytes % 4 != 0 || *repetitions == 0 {
                    return Err(SimError::Config("latency needs a positive word-multiple message".into()));
                }
            }
            ExperimentSpec::Elink {
                writers,
                block_bytes,
                duration_s,
            } => {
                if *writers == 0 || *writers > mesh.len() || *block_bytes == 0 || !(*duration_s > 0.0) {
                    return Err(SimError::Config(format!(
                        "elink: 1..={} writers, positive block and duration",
                        mesh.len()
                    )));
                }
            }
            ExperimentSpec::Stencil { rows, cols, cores, .. } => {
                fits(cores)?;
                if *rows == 0 || *cols == 0 || rows % cores.rows != 0 || cols % cores.cols != 0 {
                    return Err(SimError::Config(format!("{rows}x{cols} grid does not split over {cores} cores")));
                }
            }
            ExperimentSpec::Matmul { m, n, k, cores } => {
                fits(cores)?;
                if cores.rows != cores.cols {
                    return Err(SimError::Config("matmul needs a square core grid".into()));
                }
                if *m == 0 || *n == 0 || *k == 0 {
                    return Err(SimError::Config("empty matmul".into()));
                }
            }
            ExperimentSpec::WeakScaling { iterations, .. } | ExperimentSpec::StrongScaling { iterations, .. } => {
                if *iterations == 0 {
                    return Err(SimError::Config("scaling needs at least one iteration".into()));
                }
            }
        }
        Ok(())
    }
}

/// JSON has no NaN; missing points travel as `null`.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    fn wrap(v: f64) -> Option<f64> {
        (!v.is_nan()).then_some(v)
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        wrap(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(|x| wrap(*x)).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Ok(Vec::<Option<f64>>::deserialize(d)?
                .into_iter()
                .map(|x| x.unwrap_or(f64::NAN))
                .collect())
        }
    }
}

/// A reference-table quantity measured by an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub id: String,
    #[serde(with = "nan_as_null")]
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub label: String,
    #[serde(with = "nan_as_null::vec")]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    /// Column names, units included.
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    pub measurements: Vec<Measurement>,
}

impl ExperimentResult {
    fn new(spec: &ExperimentSpec, columns: &[&str]) -> ExperimentResult {
        ExperimentResult {
            spec: spec.clone(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            measurements: Vec::new(),
        }
    }

    fn row(&mut self, label: impl Into<String>, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push(Row {
            label: label.into(),
            values,
        });
    }

    fn measure(&mut self, id: impl Into<String>, value: f64) {
        self.measurements.push(Measurement { id: id.into(), value });
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.values[i]).collect())
    }
}

fn bool_value(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn non_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] >= w[0])
}

/// Integer-valued pattern in [-4, 4]; products and sums stay exact in f32.
fn pattern(i: usize, j: usize, seed: usize) -> f32 {
    ((i.wrapping_mul(31) ^ j.wrapping_mul(17)).wrapping_add(seed * 7) % 9) as f32 - 4.0
}

fn test_grid(rows: usize, cols: usize) -> Result<Grid> {
    Grid::from_fn(rows, cols, |i, j| pattern(i, j, 1) * 8.0)
}

/// Weights that keep integer-valued grids exact: halves and quarters of
/// values with small magnitude.
fn test_weights() -> StencilWeights {
    StencilWeights::from_positional([0.125, 0.5, 0.125, 0.125, 0.125])
}

pub fn run_experiment(spec: &ExperimentSpec, cfg: &MachineConfig) -> Result<ExperimentResult> {
    spec.validate(cfg)?;
    match spec {
        ExperimentSpec::Bandwidth {
            src,
            dst,
            sizes,
            repetitions,
        } => bandwidth(spec, cfg, *src, *dst, sizes, *repetitions),
        ExperimentSpec::Latency {
            pairs,
            message_bytes,
            repetitions,
        } => latency(spec, cfg, pairs, *message_bytes, *repetitions),
        ExperimentSpec::Elink {
            writers,
            block_bytes,
            duration_s,
        } => elink(spec, cfg, *writers, *block_bytes, *duration_s),
        ExperimentSpec::Stencil {
            rows,
            cols,
            cores,
            iterations,
            exchange,
        } => stencil(spec, cfg, *rows, *cols, *cores, *iterations, *exchange),
        ExperimentSpec::Matmul { m, n, k, cores } => matmul(spec, cfg, *m, *n, *k, *cores),
        ExperimentSpec::WeakScaling { app, iterations } => match app {
            App::Stencil => stencil_weak(spec, cfg, *iterations),
            App::Matmul => matmul_ladder(spec, cfg, &MATMUL_WEAK_LADDERS),
        },
        ExperimentSpec::StrongScaling { app, iterations } => match app {
            App::Stencil => stencil_strong(spec, cfg, *iterations),
            App::Matmul => matmul_ladder(spec, cfg, &matmul_strong_ladders()),
        },
    }
}

fn bandwidth(
    spec: &ExperimentSpec,
    cfg: &MachineConfig,
    src: Coord,
    dst: Coord,
    sizes: &[u64],
    reps: u32,
) -> Result<ExperimentResult> {
    let mut r = ExperimentResult::new(
        spec,
        &["bytes", "direct_write_ns", "dma_ns", "direct_write_gbps", "dma_gbps"],
    );
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    let mut dw = Vec::new();
    let mut dma = Vec::new();
    for &s in &sizes {
        let a = ping_pong(cfg, src, dst, s, Method::DirectWrite, reps)?;
        let b = ping_pong(cfg, src, dst, s, Method::Dma, reps)?;
        r.row(
            s.to_string(),
            vec![s as f64, a.one_way_ns, b.one_way_ns, a.bytes_per_s / 1e9, b.bytes_per_s / 1e9],
        );
        dw.push((s as f64, a.one_way_ns, a.bytes_per_s));
        dma.push((s as f64, b.one_way_ns, b.bytes_per_s));
    }
    if sizes.last() == Some(&65536) {
        r.measure("bandwidth.dma_plateau", dma.last().unwrap().2 / 1e9);
    }
    // Linear interpolation of the time difference between the bracketing sizes.
    let diff: Vec<(f64, f64)> = dw.iter().zip(&dma).map(|(a, b)| (a.0, b.1 - a.1)).collect();
    let crossover = match diff.iter().position(|d| d.1 <= 0.0) {
        Some(0) => diff[0].0,
        Some(i) => {
            let (x0, d0) = diff[i - 1];
            let (x1, d1) = diff[i];
            x0 + (x1 - x0) * d0 / (d0 - d1)
        }
        None => f64::NAN,
    };
    r.measure("bandwidth.crossover", crossover);
    let mono = non_decreasing(&dw.iter().map(|p| p.2).collect::<Vec<_>>())
        && non_decreasing(&dma.iter().map(|p| p.2).collect::<Vec<_>>());
    r.measure("bandwidth.monotone", bool_value(mono));
    Ok(r)
}

fn latency(
    spec: &ExperimentSpec,
    cfg: &MachineConfig,
    pairs: &[(Coord, Coord)],
    bytes: u64,
    reps: u32,
) -> Result<ExperimentResult> {
    let mut r = ExperimentResult::new(spec, &["distance", "message_bytes", "ns_per_transfer"]);
    let words = bytes as f64 / 4.0;
    for &(a, b) in pairs {
        let p = ping_pong(cfg, a, b, bytes, Method::DirectWrite, reps)?;
        let ns = p.one_way_ns / words;
        let d = a.row.abs_diff(b.row) + a.col.abs_diff(b.col);
        r.row(format!("{a}->{b}"), vec![d as f64, bytes as f64, ns]);
        if bytes == LATENCY_MESSAGE_BYTES {
            r.measure(format!("latency.{}_{}-{}_{}", a.row, a.col, b.row, b.col), ns);
        }
    }
    Ok(r)
}

/// Writer placement: a square block at the origin when the count is a
/// perfect square, otherwise the first cores in row-major order.
pub fn writer_set(cfg: &MachineConfig, n: usize) -> Vec<Coord> {
    let side = (n as f64).sqrt().round() as usize;
    if side * side == n && side <= cfg.mesh.rows && side <= cfg.mesh.cols {
        Workgroup::at_origin(side, side).members()
    } else {
        (0..n).map(|i| Coord::new(i / cfg.mesh.cols, i % cfg.mesh.cols)).collect()
    }
}

fn elink(spec: &ExperimentSpec, cfg: &MachineConfig, n: usize, block: u64, duration: f64) -> Result<ExperimentResult> {
    let writers = writer_set(cfg, n);
    let out = contention_experiment(cfg, &writers, block, duration)?;
    let mut r = ExperimentResult::new(
        spec,
        &["row", "col", "completed_iterations", "transactions", "utilization_fraction"],
    );
    for rec in &out.records {
        r.row(
            rec.core.to_string(),
            vec![
                rec.core.row as f64,
                rec.core.col as f64,
                rec.completed_iterations as f64,
                rec.transactions as f64,
                rec.utilization,
            ],
        );
    }
    let util = |c: Coord| out.records.iter().find(|x| x.core == c).map(|x| x.utilization);
    if n == 1 {
        r.measure("elink.single_writer", out.payload_bytes_per_s / 1e6);
    }
    if n == 4 {
        let u: Vec<f64> = [(0, 0), (0, 1), (1, 0), (1, 1)]
            .iter()
            .filter_map(|&(a, b)| util(Coord::new(a, b)))
            .collect();
        r.measure("elink.four_writers_sum", u.iter().sum());
        // Distinct shares, both row-0 writers above both row-1 writers.
        let mut sorted = u.clone();
        sorted.sort_by(f64::total_cmp);
        let distinct = sorted.windows(2).all(|w| w[0] < w[1]);
        let rows_ordered = u.len() == 4 && u[0].min(u[1]) > u[2].max(u[3]);
        r.measure("elink.four_writers_ordered", bool_value(distinct && rows_ordered));
    }
    if n == cfg.mesh.rows * cfg.mesh.cols && cfg.mesh.rows == 8 && cfg.mesh.cols == 8 {
        for row in 0..4 {
            if let Some(u) = util(Coord::new(row, 7)) {
                r.measure(format!("elink.exit_column_{row}_7"), u);
            }
        }
        let zero = out.records.iter().filter(|x| x.completed_iterations == 0).count();
        r.measure("elink.zero_iteration_cores", zero as f64);
    }
    Ok(r)
}

#[allow(clippy::too_many_arguments)]
fn stencil(
    spec: &ExperimentSpec,
    cfg: &MachineConfig,
    rows: usize,
    cols: usize,
    cores: Shape,
    iters: usize,
    exchange: Exchange,
) -> Result<ExperimentResult> {
    let grid = test_grid(rows, cols)?;
    let w = test_weights();
    let run = stencil_distributed(cfg, &grid, w, iters, cores.group(), exchange, &SimOptions::default())?;
    let (br, bc) = run.block;
    let err = match exchange {
        Exchange::Halo => {
            let want = stencil_reference_blocked(&grid, &w, iters, br, bc, cfg.cost_models.stencil.stripe_width)?;
            max_abs_diff(&run.grid.data, &want.data)
        }
        Exchange::None => f64::NAN,
    };
    let mut r = ExperimentResult::new(
        spec,
        &["cores", "rows", "cols", "iterations", "seconds", "gflops", "max_abs_error"],
    );
    r.row(
        format!("{rows}x{cols} on {cores}"),
        vec![cores.cores() as f64, rows as f64, cols as f64, iters as f64, run.seconds, run.gflops, err],
    );
    if (br, bc) == (80, 20) {
        match (cores.cores(), exchange) {
            (64, Exchange::Halo) if cores == Shape::new(8, 8) => r.measure("stencil.halo", run.gflops),
            (64, Exchange::None) if cores == Shape::new(8, 8) => r.measure("stencil.no_comm", run.gflops),
            (1, _) => r.measure("stencil.single_core", run.gflops),
            _ => {}
        }
    }
    Ok(r)
}

fn max_abs_diff(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).abs()).fold(0.0, f64::max)
}

fn test_matrices(m: usize, n: usize, k: usize) -> (Matrix, Matrix) {
    (
        Matrix::from_fn(m, n, |i, j| pattern(i, j, 2)),
        Matrix::from_fn(n, k, |i, j| pattern(i, j, 5)),
    )
}

/// Outcome of one matmul run: time and, off-chip, the compute share.
struct MatmulPoint {
    seconds: f64,
    gflops: f64,
    compute_fraction: f64,
    error: f64,
    offchip: Option<(usize, f64)>,
}

fn matmul_point(cfg: &MachineConfig, m: usize, n: usize, k: usize, cores: Shape) -> Result<MatmulPoint> {
    let (a, b) = test_matrices(m, n, k);
    let q = cores.rows;
    let max = cfg.cost_models.matmul.max_block;
    let on_chip = m % q == 0 && n % q == 0 && k % q == 0 && m / q <= max && n / q <= max && k / q <= max;
    let want = matmul_reference(&a, &b)?;
    if on_chip {
        let run = cannon_matmul(cfg, &a, &b, cores.group(), &SimOptions::default())?;
        Ok(MatmulPoint {
            seconds: run.seconds,
            gflops: run.gflops,
            compute_fraction: 1.0,
            error: max_abs_diff(&run.c.data, &want.data),
            offchip: None,
        })
    } else {
        let block = BlockShape::square(max);
        let run = offchip_matmul(cfg, &a, &b, cores.group(), block, &SimOptions::default())?;
        let per_pass = run.compute_fraction * run.seconds / run.tiles as f64;
        Ok(MatmulPoint {
            seconds: run.seconds,
            gflops: run.gflops,
            compute_fraction: run.compute_fraction,
            error: max_abs_diff(&run.c.data, &want.data),
            offchip: Some((q * max, per_pass)),
        })
    }
}

fn matmul(spec: &ExperimentSpec, cfg: &MachineConfig, m: usize, n: usize, k: usize, cores: Shape) -> Result<ExperimentResult> {
    let p = matmul_point(cfg, m, n, k, cores)?;
    let mut r = ExperimentResult::new(
        spec,
        &[
            "m",
            "n",
            "k",
            "cores",
            "seconds",
            "gflops",
            "compute_percent",
            "transfer_percent",
            "max_abs_error",
        ],
    );
    r.row(
        format!("{m}x{n}x{k} on {cores}"),
        vec![
            m as f64,
            n as f64,
            k as f64,
            cores.cores() as f64,
            p.seconds,
            p.gflops,
            100.0 * p.compute_fraction,
            100.0 * (1.0 - p.compute_fraction),
            p.error,
        ],
    );
    let square = m == n && n == k;
    let q = cores.rows;
    match p.offchip {
        None if square && q == 1 => r.measure(format!("matmul.single_{m}"), p.gflops),
        None if square => r.measure(format!("matmul.cannon_{q}x{q}_{}", m / q), p.gflops),
        Some((tile, per_pass)) => {
            if square {
                r.measure(format!("matmul.offchip_{m}"), p.gflops);
                r.measure(format!("matmul.offchip_{m}_transfer_share"), 100.0 * (1.0 - p.compute_fraction));
            }
            // One pair of operand tiles over the link versus one on-chip pass.
            let transfer_s = (2 * tile * tile * 4) as f64 / (cfg.elink.payload_bytes_per_cycle() * cfg.clock_hz());
            r.measure("matmul.compute_transfer_ratio", transfer_s / per_pass);
        }
        None => {}
    }
    Ok(r)
}

/// Stencil core grids from 1 to 64 cores, doubling each step.
pub const CORE_LADDER: [Shape; 7] = [
    Shape::new(1, 1),
    Shape::new(1, 2),
    Shape::new(2, 2),
    Shape::new(2, 4),
    Shape::new(4, 4),
    Shape::new(4, 8),
    Shape::new(8, 8),
];

/// Per-core block of the stencil weak-scaling runs.
pub const WEAK_BLOCK: (usize, usize) = (60, 60);

/// Fixed grids of the stencil strong-scaling runs, smallest first.
pub const STRONG_GRIDS: [(usize, usize); 3] = [(40, 40), (80, 40), (140, 40)];

fn stencil_weak(spec: &ExperimentSpec, cfg: &MachineConfig, iters: usize) -> Result<ExperimentResult> {
    let mut r = ExperimentResult::new(spec, &["cores", "grid_rows", "grid_cols", "seconds", "gflops"]);
    let runs = crate::par::map(&CORE_LADDER, |s| {
        let (br, bc) = WEAK_BLOCK;
        let g = test_grid(br * s.rows, bc * s.cols)?;
        stencil_distributed(cfg, &g, test_weights(), iters, s.group(), Exchange::Halo, &SimOptions::default())
    });
    let mut times = Vec::new();
    for (s, run) in CORE_LADDER.iter().zip(runs) {
        let run = run?;
        times.push((s.cores(), run.seconds));
        r.row(
            s.to_string(),
            vec![
                s.cores() as f64,
                (WEAK_BLOCK.0 * s.rows) as f64,
                (WEAK_BLOCK.1 * s.cols) as f64,
                run.seconds,
                run.gflops,
            ],
        );
    }
    let t: Vec<f64> = times.iter().map(|x| x.1).collect();
    r.measure("scaling.weak_monotone", bool_value(non_decreasing(&t)));
    let at = |n: usize| times.iter().find(|x| x.0 == n).map(|x| x.1);
    if let (Some(t8), Some(t64)) = (at(8), at(64)) {
        r.measure("scaling.weak_64_over_8", t64 / t8);
    }
    Ok(r)
}

fn stencil_strong(spec: &ExperimentSpec, cfg: &MachineConfig, iters: usize) -> Result<ExperimentResult> {
    let mut r = ExperimentResult::new(spec, &["grid_rows", "grid_cols", "cores", "seconds", "speedup"]);
    let mut jobs = Vec::new();
    for &(gr, gc) in &STRONG_GRIDS {
        for s in CORE_LADDER {
            if gr % s.rows == 0 && gc % s.cols == 0 && gr / s.rows >= 1 && gc / s.cols >= 1 {
                jobs.push((gr, gc, s));
            }
        }
    }
    let runs = crate::par::map(&jobs, |&(gr, gc, s)| {
        let g = test_grid(gr, gc)?;
        stencil_distributed(cfg, &g, test_weights(), iters, s.group(), Exchange::Halo, &SimOptions::default())
    });
    let mut per_grid: Vec<Vec<(usize, f64)>> = vec![Vec::new(); STRONG_GRIDS.len()];
    for (&(gr, gc, s), run) in jobs.iter().zip(runs) {
        let run = run?;
        let gi = STRONG_GRIDS.iter().position(|&g| g == (gr, gc)).unwrap();
        let t1 = per_grid[gi].first().map(|x| x.1).unwrap_or(run.seconds);
        per_grid[gi].push((s.cores(), run.seconds));
        r.row(
            format!("{gr}x{gc} on {s}"),
            vec![gr as f64, gc as f64, s.cores() as f64, run.seconds, t1 / run.seconds],
        );
    }
    let time = |g: &[(usize, f64)], n: usize| g.iter().find(|x| x.0 == n).map(|x| x.1);
    let largest = per_grid.last().unwrap();
    if let (Some(t1), Some(t2), Some(t4)) = (time(largest, 1), time(largest, 2), time(largest, 4)) {
        r.measure("scaling.strong_min_speedup", (t1 / t2).min(t2 / t4));
    }
    let s4: Option<Vec<f64>> = per_grid
        .iter()
        .map(|g| Some(time(g, 1)? / time(g, 4)?))
        .collect();
    if let Some(s4) = s4 {
        r.measure("scaling.strong_size_monotone", bool_value(non_decreasing(&s4)));
    }
    Ok(r)
}

/// (series, M, N, K, core grid side) for the matmul weak-scaling ladders.
pub const MATMUL_WEAK_LADDERS: [(&str, usize, usize, usize, usize); 8] = [
    ("ladder-1", 16, 16, 32, 1),
    ("ladder-1", 32, 32, 64, 2),
    ("ladder-1", 64, 64, 64, 4),
    ("ladder-1", 64, 128, 64, 8),
    ("ladder-2", 64, 32, 32, 1),
    ("ladder-2", 64, 64, 64, 2),
    ("ladder-2", 128, 128, 128, 4),
    ("ladder-2", 128, 256, 128, 8),
];

/// Square problems of the matmul strong-scaling runs on 2×2, 4×4 and 8×8.
pub fn matmul_strong_ladders() -> Vec<(&'static str, usize, usize, usize, usize)> {
    let mut v = Vec::new();
    for (name, s) in [("16", 16), ("32", 32), ("48", 48), ("64", 64)] {
        for q in [2, 4, 8] {
            v.push((name, s, s, s, q));
        }
    }
    v
}

/// Runs each ladder entry that fits on chip; the rest are listed with NaN
/// timings. Speedup is relative to the first runnable entry of the series.
fn matmul_ladder(
    spec: &ExperimentSpec,
    cfg: &MachineConfig,
    ladder: &[(&str, usize, usize, usize, usize)],
) -> Result<ExperimentResult> {
    let mut r = ExperimentResult::new(spec, &["m", "n", "k", "cores", "seconds", "gflops", "speedup"]);
    let runs = crate::par::map(ladder, |&(_, m, n, k, q)| {
        let max = cfg.cost_models.matmul.max_block;
        let fits = m % q == 0 && n % q == 0 && k % q == 0 && m / q <= max && n / q <= max && k / q <= max;
        if !fits || q > cfg.mesh.rows.min(cfg.mesh.cols) {
            return Ok(None);
        }
        matmul_point(cfg, m, n, k, Shape::new(q, q)).map(Some)
    });
    let mut base: Option<(&str, f64)> = None;
    for (&(series, m, n, k, q), p) in ladder.iter().zip(runs) {
        let p = p?;
        let (secs, gf) = p.as_ref().map(|p| (p.seconds, p.gflops)).unwrap_or((f64::NAN, f64::NAN));
        if p.is_some() && base.map(|b| b.0 != series).unwrap_or(true) {
            base = Some((series, secs));
        }
        let speedup = match base {
            Some((s, t)) if s == series => t / secs,
            _ => f64::NAN,
        };
        r.row(
            format!("{series} {m}x{n}x{k} on {q}x{q}"),
            vec![m as f64, n as f64, k as f64, (q * q) as f64, secs, gf, speedup],
        );
    }
    Ok(r)
}

/// The standard set of experiments behind the report. `large` adds the
/// 1024 and 1536 off-chip products.
pub fn default_suite(large: bool) -> Vec<ExperimentSpec> {
    let mut v = vec![
        ExperimentSpec::latency(),
        ExperimentSpec::bandwidth(),
        ExperimentSpec::elink(1),
        ExperimentSpec::elink(4),
        ExperimentSpec::elink(64),
        ExperimentSpec::stencil_blocks(80, 20, Shape::new(1, 1), 10, Exchange::Halo),
        ExperimentSpec::stencil_blocks(80, 20, Shape::new(8, 8), 50, Exchange::None),
        ExperimentSpec::stencil_blocks(80, 20, Shape::new(8, 8), 50, Exchange::Halo),
    ];
    for s in [8, 16, 20, 24, 32] {
        v.push(ExperimentSpec::matmul(s, Shape::new(1, 1)));
    }
    for s in [8, 16, 20, 24, 32] {
        for q in [2, 4, 8] {
            v.push(ExperimentSpec::matmul(s * q, Shape::new(q, q)));
        }
    }
    v.push(ExperimentSpec::matmul(512, Shape::new(8, 8)));
    if large {
        v.push(ExperimentSpec::matmul(1024, Shape::new(8, 8)));
        v.push(ExperimentSpec::matmul(1536, Shape::new(8, 8)));
    }
    v.push(ExperimentSpec::WeakScaling {
        app: App::Stencil,
        iterations: 20,
    });
    v.push(ExperimentSpec::StrongScaling {
        app: App::Stencil,
        iterations: 20,
    });
    v.push(ExperimentSpec::WeakScaling {
        app: App::Matmul,
        iterations: 1,
    });
    v.push(ExperimentSpec::StrongScaling {
        app: App::Matmul,
        iterations: 1,
    });
    v
}

/// Runs independent experiments (in parallel with the `parallel` feature);
/// results come back in spec order.
pub fn run_suite(specs: &[ExperimentSpec], cfg: &MachineConfig) -> Vec<Result<ExperimentResult>> {
    crate::par::map(specs, |s| run_experiment(s, cfg))
}

/// Sequential variant of [`run_suite`].
pub fn run_suite_seq(specs: &[ExperimentSpec], cfg: &MachineConfig) -> Vec<Result<ExperimentResult>> {
    crate::par::map_seq(specs, |s| run_experiment(s, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_parse() {
        assert_eq!("8x8".parse::<Shape>().unwrap(), Shape::new(8, 8));
        assert_eq!("2X4".parse::<Shape>().unwrap(), Shape::new(2, 4));
        assert!("8".parse::<Shape>().is_err());
    }

    #[test]
    fn invalid_spec_rejected_before_running() {
        let cfg = MachineConfig::default();
        let s = ExperimentSpec::stencil_blocks(10, 10, Shape::new(9, 9), 1, Exchange::Halo);
        assert!(matches!(run_experiment(&s, &cfg), Err(SimError::Config(_))));
    }

    #[test]
    fn writer_sets() {
        let cfg = MachineConfig::default();
        assert_eq!(writer_set(&cfg, 4), Workgroup::at_origin(2, 2).members());
        assert_eq!(writer_set(&cfg, 3).len(), 3);
        assert_eq!(writer_set(&cfg, 64).len(), 64);
    }

    #[test]
    fn spec_json_round_trip() {
        for s in default_suite(true) {
            let j = serde_json::to_string(&s).unwrap();
            assert_eq!(serde_json::from_str::<ExperimentSpec>(&j).unwrap(), s);
        }
    }
}
