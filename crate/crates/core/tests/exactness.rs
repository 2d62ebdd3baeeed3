//! Distributed kernels against host-side oracles, bit for bit.

use proptest::prelude::*;

use meshsim::config::MachineConfig;
use meshsim::kernels::matmul::{
    cannon_matmul, choose_scheme, matmul_f64, matmul_reference, offchip_matmul, BlockShape, BufferScheme,
};
use meshsim::kernels::stencil::{
    stencil_distributed, stencil_jacobi, stencil_layout, stencil_reference_blocked, Exchange, StencilWeights,
    STRIPE_WIDTH,
};
use meshsim::kernels::{Grid, Matrix};
use meshsim::runtime::{SimOptions, Workgroup};

/// Dyadic weights keep small-integer arithmetic exact.
const WEIGHTS: [f32; 6] = [0.0, 0.125, 0.25, 0.5, 1.0, -0.5];

fn weights() -> impl Strategy<Value = StencilWeights> {
    prop::array::uniform5(prop::sample::select(WEIGHTS.to_vec())).prop_map(StencilWeights::from_positional)
}

/// (group rows, group cols, block rows, block cols) with the block fitting
/// one core and the whole grid at most 96×96.
fn stencil_shape() -> impl Strategy<Value = (usize, usize, usize, usize)> {
    (1usize..=4, 1usize..=4)
        .prop_flat_map(|(gr, gc)| (Just(gr), Just(gc), 1..=96 / gr, 1..=96 / gc))
        .prop_filter("block fits local memory", |&(_, _, br, bc)| {
            stencil_layout(br, bc).validate(&MachineConfig::default().memory).is_ok()
        })
}

fn int_grid(rows: usize, cols: usize, seed: u64) -> Grid {
    Grid::from_fn(rows, cols, |i, j| {
        let h = (i as u64 * 73_856_093) ^ (j as u64 * 19_349_663) ^ seed;
        (h % 17) as f32 - 8.0
    })
    .unwrap()
}

fn int_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    Matrix::from_fn(rows, cols, |i, j| {
        let h = (i as u64 * 83_492_791) ^ (j as u64 * 2_654_435_761) ^ seed;
        (h % 9) as f32 - 4.0
    })
}

fn f64_oracle(a: &Matrix, b: &Matrix) -> Vec<f32> {
    matmul_f64(a, b).unwrap().into_iter().map(|v| v as f32).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(220))]

    #[test]
    fn stencil_matches_blocked_reference(
        (gr, gc, br, bc) in stencil_shape(),
        iters in 0usize..=10,
        w in weights(),
        seed in any::<u64>(),
    ) {
        let cfg = MachineConfig::default();
        let g = int_grid(gr * br, gc * bc, seed);
        let run = stencil_distributed(&cfg, &g, w, iters, Workgroup::at_origin(gr, gc), Exchange::Halo, &SimOptions::default()).unwrap();
        let want = stencil_reference_blocked(&g, &w, iters, br, bc, STRIPE_WIDTH).unwrap();
        prop_assert_eq!(run.grid, want);
    }

    #[test]
    fn cannon_matches_reference(
        q in 1usize..=4,
        (m, n, k) in (1usize..=12, 1usize..=12, 1usize..=12),
        seed in any::<u64>(),
    ) {
        let cfg = MachineConfig::default();
        let a = int_matrix(q * m, q * n, seed);
        let b = int_matrix(q * n, q * k, seed.rotate_left(17));
        let run = cannon_matmul(&cfg, &a, &b, Workgroup::at_origin(q, q), &SimOptions::default()).unwrap();
        prop_assert_eq!(&run.c, &matmul_reference(&a, &b).unwrap());
        prop_assert_eq!(run.c.data, f64_oracle(&a, &b));
    }

    #[test]
    fn offchip_matches_reference(
        q in 1usize..=3,
        (m, n, k) in (1usize..=6, 1usize..=6, 1usize..=6),
        (tm, tn, tk) in (1usize..=3, 1usize..=3, 1usize..=3),
        seed in any::<u64>(),
    ) {
        let cfg = MachineConfig::default();
        let block = BlockShape { m, n, k };
        let a = int_matrix(tm * q * m, tn * q * n, seed);
        let b = int_matrix(tn * q * n, tk * q * k, seed ^ 0x5555);
        let run = offchip_matmul(&cfg, &a, &b, Workgroup::at_origin(q, q), block, &SimOptions::default()).unwrap();
        prop_assert_eq!(&run.c, &matmul_reference(&a, &b).unwrap());
        prop_assert_eq!(run.c.data, f64_oracle(&a, &b));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Without a left weight the stripe rule is irrelevant and the device
    /// must agree with plain Jacobi sweeps on the whole grid.
    #[test]
    fn stencil_without_left_weight_is_jacobi(
        (gr, gc, br, bc) in stencil_shape(),
        iters in 0usize..=6,
        w in weights(),
        seed in any::<u64>(),
    ) {
        let w = StencilWeights { left: 0.0, ..w };
        let cfg = MachineConfig::default();
        let g = int_grid(gr * br, gc * bc, seed);
        let run = stencil_distributed(&cfg, &g, w, iters, Workgroup::at_origin(gr, gc), Exchange::Halo, &SimOptions::default()).unwrap();
        prop_assert_eq!(run.grid, stencil_jacobi(&g, &w, iters));
    }
}

#[test]
fn half_buffer_cases_are_exact() {
    let cfg = MachineConfig::default();
    for (q, s) in [(2, 32), (3, 32), (1, 32)] {
        let shape = BlockShape::square(s);
        assert_eq!(choose_scheme(shape, &cfg.memory).unwrap(), BufferScheme::Half, "block {s}");
        let a = int_matrix(q * s, q * s, 3);
        let b = int_matrix(q * s, q * s, 4);
        let run = cannon_matmul(&cfg, &a, &b, Workgroup::at_origin(q, q), &SimOptions::default()).unwrap();
        assert_eq!(run.scheme, BufferScheme::Half);
        assert_eq!(run.c.data, f64_oracle(&a, &b), "q={q} s={s}");
    }
}

#[test]
fn offchip_with_half_buffered_blocks_is_exact() {
    let cfg = MachineConfig::default();
    let a = int_matrix(128, 64, 9);
    let b = int_matrix(64, 128, 10);
    let run = offchip_matmul(&cfg, &a, &b, Workgroup::at_origin(2, 2), BlockShape::square(32), &SimOptions::default())
        .unwrap();
    assert_eq!(run.c.data, f64_oracle(&a, &b));
    assert_eq!(run.tiles, 2 * 2 * 1);
}

#[test]
fn workgroup_away_from_origin() {
    let cfg = MachineConfig::default();
    let a = int_matrix(12, 12, 1);
    let b = int_matrix(12, 12, 2);
    let group = Workgroup::new(meshsim::Coord::new(5, 4), 3, 3);
    let run = cannon_matmul(&cfg, &a, &b, group, &SimOptions::default()).unwrap();
    assert_eq!(run.c.data, f64_oracle(&a, &b));
    let g = int_grid(20, 30, 5);
    let w = StencilWeights::from_positional([0.25, 0.5, 0.125, 0.25, 0.125]);
    let run = stencil_distributed(&cfg, &g, w, 3, Workgroup::new(meshsim::Coord::new(6, 5), 2, 3), Exchange::Halo, &SimOptions::default())
        .unwrap();
    assert_eq!(run.grid, stencil_reference_blocked(&g, &w, 3, 10, 10, STRIPE_WIDTH).unwrap());
}
