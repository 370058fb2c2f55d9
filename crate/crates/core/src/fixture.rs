//! Deterministic synthetic city for tests and demonstrations.
//!
//! The layout is a 10 km square in projected meters: 12 rectangular count
//! zones (4 × 3), about 40 land-use parcels, a jittered 14 × 14 street
//! lattice with hourly travel times, interval-coded worker and job counts,
//! and zone-to-zone commuter flows drawn from a power-decay gravity model
//! with multiplicative lognormal noise. The north-east zone holds jobs but no
//! employment parcels.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geojson::{to_feature_collection, Feature};
use crate::geometry::{BBox, MultiPolygon, Polygon};
use crate::network::{Edge, Node, RoadGraph};
use crate::pipeline::zone_distances;
use crate::temporal::HOURS;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("fixture network: {0}")]
    Network(#[from] crate::network::NetworkError),
    #[error("fixture geometry: {0}")]
    Geometry(#[from] crate::geometry::GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiniCityOptions {
    pub seed: u64,
    /// Decay exponent used to draw the flows.
    pub beta: f64,
    /// Standard deviation of the log-scale flow noise.
    pub noise_sigma: f64,
}

impl Default for MiniCityOptions {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            beta: 0.602,
            noise_sigma: 0.1,
        }
    }
}

pub const ORIGIN_X: f64 = 356_000.0;
pub const ORIGIN_Y: f64 = 3_091_000.0;
pub const SIDE: f64 = 10_000.0;
const ZONE_COLS: usize = 4;
const ZONE_ROWS: usize = 3;
const LATTICE: usize = 14;
const NO_EMPLOYMENT_ZONE: &str = "Z12";

/// Departure or start-time weights per hour, peaking at `peak`.
fn hourly_profile(peak: f64, spread: f64, base: f64) -> [f64; HOURS] {
    let mut p = [0.0; HOURS];
    for (h, v) in p.iter_mut().enumerate() {
        let z = (h as f64 + 0.5 - peak) / spread;
        *v = base + (-0.5 * z * z).exp();
    }
    let s: f64 = p.iter().sum();
    p.map(|v| v / s)
}

/// Interval rows for one zone: a five-hour overnight block, quarter hours
/// from 05:00 to 10:00, half hours to 12:00 and whole hours after that.
fn interval_rows(zone: &str, total: f64, profile: &[f64; HOURS], rng: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    let mut row = |start: u32, end: u32, share: f64, rng: &mut ChaCha8Rng| {
        let jitter: f64 = rng.gen_range(0.85..1.15);
        let count = (total * share * jitter).round();
        let _ = writeln!(out, "{zone},{start},{end},{count}");
    };
    row(0, 300, profile[..5].iter().sum(), rng);
    for h in 5..10u32 {
        for q in 0..4 {
            row(h * 60 + q * 15, h * 60 + q * 15 + 15, profile[h as usize] / 4.0, rng);
        }
    }
    for h in 10..12u32 {
        for q in 0..2 {
            row(h * 60 + q * 30, h * 60 + q * 30 + 30, profile[h as usize] / 2.0, rng);
        }
    }
    for h in 12..24u32 {
        row(h * 60, h * 60 + 60, profile[h as usize], rng);
    }
    out
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<MultiPolygon, FixtureError> {
    Ok(Polygon::rect(BBox::new(x0, y0, x1, y1))?.into())
}

fn with_crs(mut fc: serde_json::Value) -> serde_json::Value {
    fc["crs"] = serde_json::json!({
        "type": "name",
        "properties": {"name": "urn:ogc:def:crs:EPSG::32617"}
    });
    fc
}

/// Writes the fixture into `dir` and returns the path of its run config.
pub fn write_mini_city(dir: &Path, opts: &MiniCityOptions) -> Result<PathBuf, FixtureError> {
    std::fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let zw = SIDE / ZONE_COLS as f64;
    let zh = SIDE / ZONE_ROWS as f64;
    let centre = (ORIGIN_X + SIDE / 2.0, ORIGIN_Y + SIDE / 2.0);

    // zones, numbered row-major from the south-west corner
    let mut zones: Vec<(String, MultiPolygon)> = Vec::new();
    for r in 0..ZONE_ROWS {
        for c in 0..ZONE_COLS {
            let x0 = ORIGIN_X + c as f64 * zw;
            let y0 = ORIGIN_Y + r as f64 * zh;
            let id = format!("Z{:02}", r * ZONE_COLS + c + 1);
            zones.push((id, rect(x0, y0, x0 + zw, y0 + zh)?));
        }
    }
    let zone_fc = to_feature_collection(
        zones
            .iter()
            .map(|(id, g)| (id.as_str(), g, vec![("zone_id", id.clone())])),
    );
    std::fs::write(dir.join("zones.geojson"), serde_json::to_string_pretty(&with_crs(zone_fc)).expect("json"))?;

    // parcels: one per quarter of each zone, inset from the quarter's edges;
    // eight zones lose one quarter
    let mut order: Vec<usize> = (0..zones.len()).collect();
    order.shuffle(&mut rng);
    let dropped: Vec<(usize, usize)> = order[..8]
        .iter()
        .map(|&zi| (zi, rng.gen_range(0..4)))
        .collect();
    let mut parcels: Vec<(String, MultiPolygon, &'static str)> = Vec::new();
    for (zi, (zone_id, _)) in zones.iter().enumerate() {
        let first = parcels.len();
        for q in (0..4).filter(|&q| !dropped.contains(&(zi, q))) {
            let (zc, zr) = (zi % ZONE_COLS, zi / ZONE_COLS);
            let sx = ORIGIN_X + zc as f64 * zw + (q % 2) as f64 * zw / 2.0;
            let sy = ORIGIN_Y + zr as f64 * zh + (q / 2) as f64 * zh / 2.0;
            let (mx0, mx1) = (rng.gen_range(200.0..400.0), rng.gen_range(200.0..400.0));
            let (my0, my1) = (rng.gen_range(200.0..500.0), rng.gen_range(200.0..500.0));
            let (x0, y0) = (sx + mx0, sy + my0);
            let (x1, y1) = (sx + zw / 2.0 - mx1, sy + zh / 2.0 - my1);
            let dist = (((x0 + x1) / 2.0 - centre.0).powi(2) + ((y0 + y1) / 2.0 - centre.1).powi(2)).sqrt();
            let p_emp = if dist < 2_500.0 { 0.75 } else { 0.3 };
            let class = if rng.gen_bool(p_emp) {
                if rng.gen_bool(0.7) {
                    "commercial"
                } else {
                    "industrial"
                }
            } else {
                "residential"
            };
            parcels.push((String::new(), rect(x0.round(), y0.round(), x1.round(), y1.round())?, class));
        }
        let zone_parcels = &mut parcels[first..];
        if zone_id == NO_EMPLOYMENT_ZONE {
            zone_parcels.iter_mut().for_each(|p| p.2 = "residential");
            continue;
        }
        if zone_parcels.iter().all(|p| p.2 == "residential") {
            zone_parcels[0].2 = "commercial";
        }
        if zone_parcels.iter().all(|p| p.2 != "residential") {
            zone_parcels.last_mut().expect("three or more parcels").2 = "residential";
        }
    }
    // two parcels straddling zone boundaries
    parcels.push((String::new(), rect(ORIGIN_X + 2_420.0, ORIGIN_Y + 800.0, ORIGIN_X + 2_580.0, ORIGIN_Y + 1_400.0)?, "commercial"));
    parcels.push((String::new(), rect(ORIGIN_X + 5_600.0, ORIGIN_Y + zh - 80.0, ORIGIN_X + 6_400.0, ORIGIN_Y + zh + 80.0)?, "residential"));
    for (k, p) in parcels.iter_mut().enumerate() {
        p.0 = format!("P{:03}", k + 1);
    }
    let parcel_fc = to_feature_collection(parcels.iter().map(|(id, g, class)| {
        (
            id.as_str(),
            g,
            vec![("parcel_id", id.clone()), ("land_use", class.to_string())],
        )
    }));
    std::fs::write(dir.join("parcels.geojson"), serde_json::to_string_pretty(&with_crs(parcel_fc)).expect("json"))?;

    // interval-coded counts
    let worker_profile = hourly_profile(7.0, 1.2, 0.01);
    let job_profile = hourly_profile(8.0, 1.0, 0.015);
    let mut workers = String::from("zone_id,start_minute,end_minute,count\n");
    let mut jobs = workers.clone();
    let mut worker_totals = Vec::new();
    let mut job_totals = Vec::new();
    for (id, g) in &zones {
        let c = g.centroid();
        let dist = ((c.x - centre.0).powi(2) + (c.y - centre.1).powi(2)).sqrt();
        let w_total = rng.gen_range(800.0..2_400.0) * (0.6 + dist / 5_000.0);
        let j_total = rng.gen_range(600.0..1_400.0) * (3.0 - dist / 3_000.0).max(0.5);
        let w_rows = interval_rows(id, w_total, &worker_profile, &mut rng);
        let j_rows = interval_rows(id, j_total, &job_profile, &mut rng);
        worker_totals.push(row_sum(&w_rows));
        job_totals.push(row_sum(&j_rows));
        workers.push_str(&w_rows);
        jobs.push_str(&j_rows);
    }
    std::fs::write(dir.join("workers.csv"), workers)?;
    std::fs::write(dir.join("jobs.csv"), jobs)?;

    // street lattice
    let spacing = SIDE / (LATTICE - 1) as f64;
    let mut nodes = Vec::new();
    for r in 0..LATTICE {
        for c in 0..LATTICE {
            let jx: f64 = rng.gen_range(-150.0..150.0);
            let jy: f64 = rng.gen_range(-150.0..150.0);
            nodes.push(Node {
                id: 1_000 + (r * LATTICE + c) as u64,
                x: (ORIGIN_X + c as f64 * spacing + jx).round(),
                y: (ORIGIN_Y + r as f64 * spacing + jy).round(),
            });
        }
    }
    let congestion: [f64; HOURS] = std::array::from_fn(|h| {
        let h = h as f64;
        1.0 + 0.8 * (-(h - 8.0).powi(2) / 2.0).exp() + 0.6 * (-(h - 17.0).powi(2) / 2.0).exp()
    });
    let mut edges = Vec::new();
    let mut link = |a: usize, b: usize, arterial: bool, rng: &mut ChaCha8Rng| {
        let (na, nb) = (&nodes[a], &nodes[b]);
        let straight = ((na.x - nb.x).powi(2) + (na.y - nb.y).powi(2)).sqrt();
        let length = (straight * rng.gen_range(1.0..1.2) * 10.0).round() / 10.0;
        let speed = if arterial { 13.4 } else { 8.9 };
        let times = congestion.map(|c| (length / speed * c * 10.0).round() / 10.0);
        edges.push(Edge {
            from: na.id,
            to: nb.id,
            length,
            hourly_times: Some(times),
        });
    };
    for r in 0..LATTICE {
        for c in 0..LATTICE {
            let k = r * LATTICE + c;
            if c + 1 < LATTICE {
                link(k, k + 1, r % 4 == 0, &mut rng);
            }
            if r + 1 < LATTICE {
                link(k, k + LATTICE, c % 4 == 0, &mut rng);
            }
        }
    }
    for _ in 0..10 {
        let r = rng.gen_range(0..LATTICE - 1);
        let c = rng.gen_range(0..LATTICE - 1);
        let k = r * LATTICE + c;
        link(k, k + LATTICE + 1, false, &mut rng);
    }
    let mut node_csv = String::from("id,x,y\n");
    for n in &nodes {
        let _ = writeln!(node_csv, "{},{},{}", n.id, n.x, n.y);
    }
    let mut edge_csv = String::from("from,to,length_m");
    for h in 0..HOURS {
        let _ = write!(edge_csv, ",t{h:02}");
    }
    edge_csv.push('\n');
    for e in &edges {
        let _ = write!(edge_csv, "{},{},{}", e.from, e.to, e.length);
        for t in e.hourly_times.expect("generated with times") {
            let _ = write!(edge_csv, ",{t}");
        }
        edge_csv.push('\n');
    }
    std::fs::write(dir.join("nodes.csv"), node_csv)?;
    std::fs::write(dir.join("edges.csv"), edge_csv)?;

    // gravity flows between distinct zones
    let graph = RoadGraph::new(nodes, edges, false)?;
    let features: Vec<Feature> = zones
        .iter()
        .map(|(id, g)| Feature {
            id: id.clone(),
            geometry: g.clone(),
            properties: Default::default(),
        })
        .collect();
    let dist = zone_distances(&graph, &features, 1_000.0)?;
    let noise = Normal::new(0.0, opts.noise_sigma).expect("finite sigma");
    let mut flows = String::from("origin_id,destination_id,commuters\n");
    let total_workers: f64 = worker_totals.iter().sum();
    let total_jobs: f64 = job_totals.iter().sum();
    for (i, (oi, _)) in zones.iter().enumerate() {
        for (j, (dj, _)) in zones.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = dist[&(oi.clone(), dj.clone())];
            let gravity = worker_totals[i] * job_totals[j] / (total_workers * total_jobs);
            let c = 2.0e4 * gravity * (d / 1_000.0).powf(-opts.beta) * noise.sample(&mut rng).exp();
            let _ = writeln!(flows, "{oi},{dj},{c:.6}");
        }
    }
    std::fs::write(dir.join("flows.csv"), flows)?;

    let config = "\
zones = \"zones.geojson\"
parcels = \"parcels.geojson\"
workers = \"workers.csv\"
jobs = \"jobs.csv\"
nodes = \"nodes.csv\"
edges = \"edges.csv\"
flows = \"flows.csv\"
cell_size = 500.0
decay = \"power\"
beta = \"calibrate\"
distance_floor = 250.0
output_dir = \"out\"
slice_hours = [6]
export_mesh = true
";
    let path = dir.join("config.toml");
    std::fs::write(&path, config)?;
    Ok(path)
}

fn row_sum(rows: &str) -> f64 {
    rows.lines()
        .filter_map(|l| l.rsplit(',').next()?.parse::<f64>().ok())
        .sum()
}
