//! Instance generators and brute-force oracles shared by the integration
//! tests. Oracles are written directly from the model definitions and share
//! no code with the library kernels.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use stacc::calibration::DecaySpec;
use stacc::dasymetric::CellCounts;
use stacc::geometry::{CellId, Grid};
use stacc::network::{CostMatrix, CostUnit, Edge, Node, RoadGraph};
use stacc::temporal::{HourlyCounts, HOURS};

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

fn random_hourly(rng: &mut ChaCha8Rng, p_zero_hour: f64) -> HourlyCounts {
    let mut h = [0.0; HOURS];
    for v in h.iter_mut() {
        if !rng.gen_bool(p_zero_hour) {
            *v = rng.gen_range(0.0..50.0);
        }
    }
    HourlyCounts(h)
}

/// Random worker and job counts on an `nx × ny` grid. Roughly `p_res` of the
/// cells hold workers and `p_emp` hold jobs; individual hours are zero with
/// probability `p_zero_hour`.
pub fn random_cell_counts(
    rng: &mut ChaCha8Rng,
    nx: u32,
    ny: u32,
    p_res: f64,
    p_emp: f64,
    p_zero_hour: f64,
) -> CellCounts {
    let grid = Grid::new(0.0, 0.0, 100.0, nx, ny).unwrap();
    let mut workers = BTreeMap::new();
    let mut jobs = BTreeMap::new();
    for c in 0..nx * ny {
        if rng.gen_bool(p_res) {
            workers.insert(c, random_hourly(rng, p_zero_hour));
        }
        if rng.gen_bool(p_emp) {
            jobs.insert(c, random_hourly(rng, p_zero_hour));
        }
    }
    let first = 0;
    workers.entry(first).or_insert_with(|| HourlyCounts::uniform(1.0));
    jobs.entry(nx * ny - 1).or_insert_with(|| HourlyCounts::uniform(1.0));
    CellCounts::new(grid, workers, jobs)
}

/// Random impedances between the active cells, `None` with probability
/// `p_unreachable`.
pub fn random_costs(
    rng: &mut ChaCha8Rng,
    cc: &CellCounts,
    hour: Option<u8>,
    p_unreachable: f64,
) -> CostMatrix {
    let res = cc.residential_cells();
    let emp = cc.employment_cells();
    let mut values = Vec::with_capacity(res.len() * emp.len());
    for _ in &res {
        for _ in &emp {
            values.push(if rng.gen_bool(p_unreachable) {
                None
            } else {
                Some(rng.gen_range(10.0..5000.0))
            });
        }
    }
    let unit = if hour.is_some() {
        CostUnit::Seconds
    } else {
        CostUnit::Meters
    };
    CostMatrix::new(res, emp, unit, hour, values).unwrap()
}

fn weight(spec: &DecaySpec, d: Option<f64>) -> f64 {
    match d {
        None => 0.0,
        Some(d) => {
            let d = d.max(spec.floor());
            let b = spec.beta();
            match spec.family() {
                stacc::calibration::DecayFamily::Power => 1.0 / d.powf(b),
                stacc::calibration::DecayFamily::Exponential => (-b * d).exp(),
                stacc::calibration::DecayFamily::Gaussian => (-d * d / b).exp(),
            }
        }
    }
}

/// Competition-adjusted accessibility by explicit nested loops: the demand
/// potential of each job site, its supply/demand ratio, then the decayed
/// sum of ratios seen from each residential cell.
pub fn oracle_two_step(
    res: &[CellId],
    emp: &[CellId],
    supply: &dyn Fn(CellId) -> f64,
    demand: &dyn Fn(CellId) -> f64,
    costs: &CostMatrix,
    spec: &DecaySpec,
) -> BTreeMap<CellId, f64> {
    let mut ratio = BTreeMap::new();
    for &j in emp {
        let mut potential = 0.0;
        for &k in res {
            potential += demand(k) * weight(spec, costs.between(k, j));
        }
        let r = if potential > 0.0 {
            supply(j) / potential
        } else {
            0.0
        };
        ratio.insert(j, r);
    }
    let mut access = BTreeMap::new();
    for &i in res {
        let mut a = 0.0;
        for &j in emp {
            a += ratio[&j] * weight(spec, costs.between(i, j));
        }
        access.insert(i, a);
    }
    access
}

/// Hour-`t` space-time accessibility from the model definition.
pub fn oracle_spacetime(
    cc: &CellCounts,
    costs: &CostMatrix,
    spec: &DecaySpec,
    t: usize,
) -> BTreeMap<CellId, f64> {
    let res = cc.residential_cells();
    let emp = cc.employment_cells();
    let supply = |j: CellId| {
        let h = cc.jobs_at(j);
        h.0[t] + h.0[(t + 1) % HOURS]
    };
    let demand = |i: CellId| cc.workers_at(i).0[t];
    oracle_two_step(&res, &emp, &supply, &demand, costs, spec)
}

pub fn max_relative_error(a: &BTreeMap<CellId, f64>, cells: &[CellId], values: &[f64]) -> f64 {
    assert_eq!(a.len(), cells.len());
    cells
        .iter()
        .zip(values)
        .map(|(c, v)| {
            let o = a[c];
            let scale = o.abs().max(v.abs());
            if scale == 0.0 {
                0.0
            } else {
                (o - v).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// A random graph with one node at every cell centroid of an `nx × ny` grid
/// (node id = cell id) and integer edge lengths, so every path sum is exact
/// in both f64 and f32.
pub struct CellGraph {
    pub grid: Grid,
    pub graph: RoadGraph,
    pub edges: Vec<(usize, usize, f64)>,
    pub directed: bool,
}

pub fn random_cell_graph(rng: &mut ChaCha8Rng, max_nodes: usize, directed: bool) -> CellGraph {
    let nx = rng.gen_range(2..=8u32);
    let ny_max = (max_nodes as u32 / nx).clamp(1, 8);
    let ny = rng.gen_range(1..=ny_max);
    let cell = 100.0;
    let grid = Grid::new(0.0, 0.0, cell, nx, ny).unwrap();
    let n = (nx * ny) as usize;
    let nodes: Vec<Node> = (0..n as u32)
        .map(|c| {
            let p = grid.centroid_of(c).unwrap();
            Node {
                id: c as u64,
                x: p.x,
                y: p.y,
            }
        })
        .collect();
    let m = rng.gen_range(n / 2..=3 * n);
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b {
            continue;
        }
        edges.push((a, b, rng.gen_range(1..=500) as f64));
    }
    let graph = RoadGraph::new(
        nodes,
        edges
            .iter()
            .map(|&(a, b, l)| Edge {
                from: a as u64,
                to: b as u64,
                length: l,
                hourly_times: None,
            })
            .collect(),
        directed,
    )
    .unwrap();
    CellGraph {
        grid,
        graph,
        edges,
        directed,
    }
}

/// All-pairs shortest paths by Floyd–Warshall; `INFINITY` when unreachable.
pub fn floyd_warshall(n: usize, edges: &[(usize, usize, f64)], directed: bool) -> Vec<Vec<f64>> {
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for &(a, b, l) in edges {
        d[a][b] = d[a][b].min(l);
        if !directed {
            d[b][a] = d[b][a].min(l);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Square street lattice with `side × side` nodes `spacing` meters apart,
/// horizontal and vertical edges only.
pub fn street_lattice(side: usize, spacing: f64) -> RoadGraph {
    let mut nodes = Vec::with_capacity(side * side);
    let mut edges = Vec::with_capacity(2 * side * (side - 1));
    for r in 0..side {
        for c in 0..side {
            let id = (r * side + c) as u64;
            nodes.push(Node {
                id,
                x: c as f64 * spacing,
                y: r as f64 * spacing,
            });
            if c + 1 < side {
                edges.push(Edge {
                    from: id,
                    to: id + 1,
                    length: spacing,
                    hourly_times: None,
                });
            }
            if r + 1 < side {
                edges.push(Edge {
                    from: id,
                    to: id + side as u64,
                    length: spacing,
                    hourly_times: None,
                });
            }
        }
    }
    RoadGraph::new(nodes, edges, false).unwrap()
}

/// A random count-zone and parcel layout over a rectangular study area:
/// zones tile the area on an irregular rectangular partition, parcels are
/// rectangles that may straddle zone borders, and some zones get no parcel
/// of one class.
pub struct Layout {
    pub zones: Vec<stacc::dasymetric::CountZone>,
    pub parcels: Vec<stacc::dasymetric::AuxiliaryZone>,
    pub grid: Grid,
}

pub fn random_layout(rng: &mut ChaCha8Rng) -> Layout {
    use stacc::dasymetric::{AuxiliaryZone, CountZone, LandUse};
    use stacc::geometry::{tessellate_grid, BBox, MultiPolygon, Polygon};

    let w = rng.gen_range(2000.0..8000.0);
    let h = rng.gen_range(2000.0..8000.0);
    let (x0, y0) = (rng.gen_range(0.0..1e5), rng.gen_range(0.0..1e5));
    let cuts = |rng: &mut ChaCha8Rng, len: f64, k: usize| -> Vec<f64> {
        let mut c: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..0.9) * len).collect();
        c.push(0.0);
        c.push(len);
        c.sort_by(f64::total_cmp);
        c.dedup();
        c
    };
    let (kx, ky) = (rng.gen_range(1..4), rng.gen_range(1..4));
    let xs = cuts(rng, w, kx);
    let ys = cuts(rng, h, ky);
    let rect = |a: f64, b: f64, c: f64, d: f64| -> MultiPolygon {
        MultiPolygon::new(vec![Polygon::rect(BBox::new(x0 + a, y0 + b, x0 + c, y0 + d)).unwrap()])
    };
    let mut zones = Vec::new();
    for i in 0..xs.len() - 1 {
        for j in 0..ys.len() - 1 {
            let mut hourly = || {
                let mut v = [0.0; HOURS];
                for x in v.iter_mut() {
                    if rng.gen_bool(0.7) {
                        *x = rng.gen_range(0.0..500.0);
                    }
                }
                HourlyCounts(v)
            };
            let workers = hourly();
            let jobs = hourly();
            zones.push(CountZone {
                id: format!("Z{i}_{j}"),
                geometry: rect(xs[i], ys[j], xs[i + 1], ys[j + 1]),
                workers,
                jobs,
            });
        }
    }
    let mut parcels = Vec::new();
    for k in 0..rng.gen_range(5..30) {
        let pw = rng.gen_range(50.0..w / 2.0);
        let ph = rng.gen_range(50.0..h / 2.0);
        let px = rng.gen_range(0.0..w - pw);
        let py = rng.gen_range(0.0..h - ph);
        let land_use = if rng.gen_bool(0.5) {
            LandUse::Residential
        } else {
            LandUse::Employment
        };
        parcels.push(AuxiliaryZone {
            id: format!("P{k}"),
            geometry: rect(px, py, px + pw, py + ph),
            land_use,
        });
    }
    let cell = rng.gen_range(150.0..700.0);
    let grid = tessellate_grid(BBox::new(x0, y0, x0 + w, y0 + h), cell).unwrap();
    Layout {
        zones,
        parcels,
        grid,
    }
}

/// Largest per-hour relative gap between zone totals and cell totals.
pub fn mass_error(interp: &stacc::dasymetric::Interpolated) -> f64 {
    (0..HOURS)
        .map(|t| {
            let zone_total = interp.mass_in.0[t];
            let cell_total: f64 = interp.cells.values().map(|h| h.0[t]).sum();
            if zone_total == 0.0 {
                cell_total.abs()
            } else {
                (cell_total - zone_total).abs() / zone_total
            }
        })
        .fold(0.0, f64::max)
}

/// Gravity-model flows `C = k·D·S·d^(−β)·exp(σε)` among `n` synthetic zones,
/// with every ordered pair of distinct zones present.
pub struct SyntheticFlows {
    pub flows: Vec<stacc::calibration::FlowRecord>,
    pub demand: std::collections::HashMap<String, f64>,
    pub supply: std::collections::HashMap<String, f64>,
    pub distance: std::collections::HashMap<(String, String), f64>,
}

impl SyntheticFlows {
    pub fn fit(&self, floor: f64) -> stacc::calibration::FrictionFit {
        stacc::calibration::fit_friction(
            &self.flows,
            &self.demand,
            &self.supply,
            |o, d| self.distance.get(&(o.to_string(), d.to_string())).copied(),
            floor,
        )
        .unwrap()
    }
}

pub fn synthetic_flows(rng: &mut ChaCha8Rng, n: usize, beta: f64, sigma: f64) -> SyntheticFlows {
    use rand_distr::{Distribution, Normal};
    let noise = Normal::new(0.0, 1.0).unwrap();
    let ids: Vec<String> = (0..n).map(|i| format!("z{i:02}")).collect();
    let pos: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.gen_range(0.0..20_000.0), rng.gen_range(0.0..20_000.0)))
        .collect();
    let mut out = SyntheticFlows {
        flows: Vec::new(),
        demand: ids.iter().map(|z| (z.clone(), rng.gen_range(500.0..5000.0))).collect(),
        supply: ids.iter().map(|z| (z.clone(), rng.gen_range(500.0..5000.0))).collect(),
        distance: Default::default(),
    };
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = ((pos[i].0 - pos[j].0).hypot(pos[i].1 - pos[j].1)) * 1.3 + 100.0;
            let (o, t) = (ids[i].clone(), ids[j].clone());
            let c = 0.05 * out.demand[&o] * out.supply[&t] * d.powf(-beta)
                * (sigma * noise.sample(rng)).exp();
            out.distance.insert((o.clone(), t.clone()), d);
            out.flows.push(stacc::calibration::FlowRecord {
                origin_id: o,
                destination_id: t,
                commuters: c,
            });
        }
    }
    out
}
