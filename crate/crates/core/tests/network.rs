mod common;

use common::*;
use proptest::prelude::*;
use stacc::geometry::Grid;
use stacc::network::{od_matrix, shortest_path_tree, CostMatrix, OdOptions, Weight};

fn all_cells(grid: &Grid) -> Vec<u32> {
    (0..grid.nx * grid.ny).collect()
}

fn options(grid: &Grid) -> OdOptions {
    OdOptions {
        tolerance: grid.cell_size * 0.4,
        intrazonal_floor: 37.0,
        weight: Weight::Length,
    }
}

fn matrix_on(cg: &CellGraph) -> CostMatrix {
    let cells = all_cells(&cg.grid);
    od_matrix(&cg.graph, &cells, &cells, &cg.grid, &options(&cg.grid)).unwrap()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn od_matrix_equals_floyd_warshall() {
    for seed in 0..30u64 {
        let mut r = rng(1000 + seed);
        let cg = random_cell_graph(&mut r, 60, seed % 3 == 0);
        let n = (cg.grid.nx * cg.grid.ny) as usize;
        let fw = floyd_warshall(n, &cg.edges, cg.directed);
        let m = matrix_on(&cg);
        for i in 0..n {
            for j in 0..n {
                let expected = if i == j {
                    Some(37.0)
                } else if fw[i][j].is_finite() {
                    Some(fw[i][j])
                } else {
                    None
                };
                assert_eq!(m.get(i, j), expected, "seed {seed} pair ({i}, {j})");
            }
        }
    }
}

#[test]
fn undirected_matrix_is_symmetric_and_metric() {
    for seed in 0..10u64 {
        let mut r = rng(2000 + seed);
        let cg = random_cell_graph(&mut r, 60, false);
        let m = matrix_on(&cg);
        let n = m.shape().0;
        let d = |i: usize, j: usize| if i == j { Some(0.0) } else { m.get(i, j) };
        for i in 0..n {
            for j in 0..n {
                assert_eq!(d(i, j), d(j, i));
                for k in 0..n {
                    if let (Some(a), Some(b), Some(c)) = (d(i, k), d(k, j), d(i, j)) {
                        assert!(c <= a + b, "triangle inequality fails at ({i}, {k}, {j})");
                    }
                }
            }
        }
    }
}

#[test]
fn identical_bits_across_thread_counts() {
    let mut r = rng(77);
    let cg = random_cell_graph(&mut r, 60, false);
    let one = in_pool(1, || matrix_on(&cg));
    for threads in [2, 8] {
        assert_eq!(in_pool(threads, || matrix_on(&cg)), one, "{threads} threads");
    }

    let graph = street_lattice(40, 50.0);
    let grid = Grid::new(-25.0, -25.0, 100.0, 20, 20).unwrap();
    let cells = all_cells(&grid);
    let opts = OdOptions::for_grid(&grid);
    let run = || od_matrix(&graph, &cells, &cells, &grid, &opts).unwrap();
    let one = in_pool(1, run);
    for threads in [2, 8] {
        assert_eq!(in_pool(threads, run), one, "{threads} threads on the lattice");
    }
}

#[test]
fn lattice_distances_are_manhattan() {
    let graph = street_lattice(12, 100.0);
    let tree = shortest_path_tree(&graph, 0, Weight::Length).unwrap();
    for r in 0..12u64 {
        for c in 0..12u64 {
            let d = tree.distance_to(&graph, r * 12 + c).unwrap();
            assert_eq!(d, 100.0 * (r + c) as f64);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn matrix_round_trips_through_file(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let cg = random_cell_graph(&mut r, 40, seed % 2 == 0);
        let m = matrix_on(&cg);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.stm");
        m.write(&path).unwrap();
        prop_assert_eq!(CostMatrix::read(&path).unwrap(), m);
    }

    #[test]
    fn adding_an_edge_never_lengthens_paths(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let cg = random_cell_graph(&mut r, 30, false);
        let n = (cg.grid.nx * cg.grid.ny) as usize;
        let before = floyd_warshall(n, &cg.edges, false);
        let mut edges = cg.edges.clone();
        edges.push((0, n - 1, 1.0));
        let after = floyd_warshall(n, &edges, false);
        for i in 0..n {
            for j in 0..n {
                prop_assert!(after[i][j] <= before[i][j]);
            }
        }
    }
}
