//! Stage-by-stage orchestration over on-disk artifacts.
//!
//! Every stage reads its inputs from the configured files and from the
//! artifacts earlier stages left in the output directory, so any stage can be
//! rerun on its own.

mod config;
mod serve;
mod validate;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accessibility::{
    read_surfaces, run_scenarios, write_surfaces, CostSet, ScenarioReport,
};
use crate::calibration::{fit_friction, read_flows, Decay, DecayFamily, DecaySpec, FrictionFit};
use crate::cube::{assemble_cube, write_cube, write_obj};
use crate::dasymetric::{
    interpolate, AuxiliaryZone, CellCounts, CountKind, CountZone, DasymetricSummary, LandUse,
};
use crate::geojson::{read_features, Feature};
use crate::geometry::{tessellate_grid, BBox, Grid};
use crate::network::{
    load_network, load_time_varying_costs, od_matrix, shortest_path_tree, snap_to_node, CostMatrix,
    NetworkReport, OdOptions, RoadGraph, Weight,
};
use crate::temporal::{read_count_table, read_hourly_table, write_hourly_table, HourlyCounts, HOURS};

pub use config::{BetaSetting, RunConfig};
pub use serve::{bind_server, serve, ServeError, Server};
pub use validate::{validate, Issue, Severity, ValidationReport};

/// File names written to the output directory.
pub mod artifacts {
    pub const HOURLY_WORKERS: &str = "hourly_workers.csv";
    pub const HOURLY_JOBS: &str = "hourly_jobs.csv";
    pub const GRID: &str = "grid.json";
    pub const CELL_COUNTS: &str = "cell_counts.csv";
    pub const DASYMETRIC_SUMMARY: &str = "dasymetric_summary.json";
    pub const OD_STATIC: &str = "od_static.stm";
    pub const OD_HOURLY: &str = "od_hour_{hour}.stm";
    pub const CALIBRATION: &str = "calibration.json";
    pub const SCENARIO_REPORT: &str = "scenario_report.json";
    pub const CUBE: &str = "cube.stc";
    pub const MESH: &str = "isosurface.obj";
    pub const REPORT: &str = "report.json";
    pub const TIMINGS: &str = "timings.json";

    /// Surfaces of scenario `k` (1..=4).
    pub fn surfaces(k: usize) -> String {
        format!("surfaces_s{k}.csv")
    }

    pub fn slice(hour: u8) -> String {
        format!("slice_h{hour:02}.csv")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Validate,
    Temporal,
    Grid,
    Dasymetric,
    OdMatrix,
    Calibrate,
    Access,
    Cube,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Validate => "validate",
            Stage::Temporal => "temporal",
            Stage::Grid => "grid",
            Stage::Dasymetric => "dasymetric",
            Stage::OdMatrix => "odmatrix",
            Stage::Calibrate => "calibrate",
            Stage::Access => "access",
            Stage::Cube => "cube",
        })
    }
}

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("validation failed with {} error(s)", .0.error_count())]
    Invalid(ValidationReport),
    #[error("{stage} stage: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: BoxError,
    },
}

impl PipelineError {
    /// 1 for configuration or validation problems, 2 for compute failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config { .. } | PipelineError::Invalid(_) => 1,
            PipelineError::Stage { .. } => 2,
        }
    }
}

fn at<E: Into<BoxError>>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        source: e.into(),
    }
}

fn require(stage: Stage, path: &Option<PathBuf>, name: &str) -> Result<PathBuf, PipelineError> {
    path.clone()
        .ok_or_else(|| at(stage)(format!("input '{name}' is not configured")))
}

fn write_json<T: Serialize>(stage: Stage, path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(at(stage))?;
    text.push('\n');
    std::fs::write(path, text).map_err(at(stage))
}

fn read_json<T: for<'de> Deserialize<'de>>(stage: Stage, path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| at(stage)(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| at(stage)(format!("{}: {e}", path.display())))
}

fn prepare_output(stage: Stage, cfg: &RunConfig) -> Result<(), PipelineError> {
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| at(stage)(format!("{}: {e}", cfg.output_dir.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalSummary {
    pub zones_workers: usize,
    pub zones_jobs: usize,
    pub workers_total: f64,
    pub jobs_total: f64,
    pub workers_by_hour: [f64; HOURS],
    pub jobs_by_hour: [f64; HOURS],
}

fn column_totals(table: &BTreeMap<String, HourlyCounts>) -> HourlyCounts {
    let mut total = HourlyCounts::zero();
    for h in table.values() {
        total.add_assign(h);
    }
    total
}

/// Interval count tables to hourly tables.
pub fn stage_temporal(cfg: &RunConfig) -> Result<TemporalSummary, PipelineError> {
    let stage = Stage::Temporal;
    prepare_output(stage, cfg)?;
    let workers = read_count_table(&require(stage, &cfg.workers, "workers")?).map_err(at(stage))?;
    let jobs = read_count_table(&require(stage, &cfg.jobs, "jobs")?).map_err(at(stage))?;
    write_hourly_table(&cfg.out(artifacts::HOURLY_WORKERS), &workers).map_err(at(stage))?;
    write_hourly_table(&cfg.out(artifacts::HOURLY_JOBS), &jobs).map_err(at(stage))?;
    let (w, j) = (column_totals(&workers), column_totals(&jobs));
    Ok(TemporalSummary {
        zones_workers: workers.len(),
        zones_jobs: jobs.len(),
        workers_total: w.daily_total(),
        jobs_total: j.daily_total(),
        workers_by_hour: w.0,
        jobs_by_hour: j.0,
    })
}

fn read_zones(stage: Stage, cfg: &RunConfig) -> Result<Vec<Feature>, PipelineError> {
    read_features(&require(stage, &cfg.zones, "zones")?, &cfg.zone_id_property).map_err(at(stage))
}

/// Grid over the bounding box of all zones.
pub fn stage_grid(cfg: &RunConfig) -> Result<Grid, PipelineError> {
    let stage = Stage::Grid;
    prepare_output(stage, cfg)?;
    let zones = read_zones(stage, cfg)?;
    let extent = zones
        .iter()
        .fold(BBox::empty(), |b, z| b.union(&z.geometry.bbox()));
    let grid = tessellate_grid(extent, cfg.cell_size).map_err(at(stage))?;
    write_json(stage, &cfg.out(artifacts::GRID), &grid)?;
    Ok(grid)
}

fn read_grid(stage: Stage, cfg: &RunConfig) -> Result<Grid, PipelineError> {
    let g: Grid = read_json(stage, &cfg.out(artifacts::GRID))?;
    Grid::new(g.origin_x, g.origin_y, g.cell_size, g.nx, g.ny).map_err(at(stage))
}

/// Parcels with a recognised land-use class; the rest are skipped.
pub(crate) fn read_parcels(
    path: &Path,
    cfg: &RunConfig,
) -> Result<(Vec<AuxiliaryZone>, usize), crate::geojson::GeoJsonError> {
    let features = read_features(path, &cfg.parcel_id_property)?;
    let total = features.len();
    let aux: Vec<AuxiliaryZone> = features
        .into_iter()
        .filter_map(|f| {
            let land_use = LandUse::parse(&f.property_str(&cfg.land_use_property)?)?;
            Some(AuxiliaryZone {
                id: f.id,
                geometry: f.geometry,
                land_use,
            })
        })
        .collect();
    let skipped = total - aux.len();
    Ok((aux, skipped))
}

/// Zone counts onto grid cells.
pub fn stage_dasymetric(cfg: &RunConfig) -> Result<DasymetricSummary, PipelineError> {
    let stage = Stage::Dasymetric;
    let grid = read_grid(stage, cfg)?;
    let workers = read_hourly_table(&cfg.out(artifacts::HOURLY_WORKERS)).map_err(at(stage))?;
    let jobs = read_hourly_table(&cfg.out(artifacts::HOURLY_JOBS)).map_err(at(stage))?;
    let features = read_zones(stage, cfg)?;
    let known: std::collections::BTreeSet<&str> = features.iter().map(|f| f.id.as_str()).collect();
    if let Some(id) = workers.keys().chain(jobs.keys()).find(|id| !known.contains(id.as_str())) {
        return Err(at(stage)(format!(
            "zone id '{id}' has counts but no geometry"
        )));
    }
    let (parcels, skipped) =
        read_parcels(&require(stage, &cfg.parcels, "parcels")?, cfg).map_err(at(stage))?;
    if skipped > 0 {
        log::warn!("{skipped} parcel(s) have no recognised land use and were ignored");
    }
    let zones: Vec<CountZone> = features
        .into_iter()
        .map(|f| CountZone {
            workers: workers.get(&f.id).copied().unwrap_or_default(),
            jobs: jobs.get(&f.id).copied().unwrap_or_default(),
            id: f.id,
            geometry: f.geometry,
        })
        .collect();
    let w = interpolate(&zones, &parcels, &grid, CountKind::Workers).map_err(at(stage))?;
    let j = interpolate(&zones, &parcels, &grid, CountKind::Jobs).map_err(at(stage))?;
    let cc = CellCounts::new(grid, w.cells.clone(), j.cells.clone());
    cc.write_csv(&cfg.out(artifacts::CELL_COUNTS)).map_err(at(stage))?;
    let summary = DasymetricSummary::new(zones.len(), &cc, &w, &j);
    write_json(stage, &cfg.out(artifacts::DASYMETRIC_SUMMARY), &summary)?;
    Ok(summary)
}

fn read_cell_counts(stage: Stage, cfg: &RunConfig, grid: Grid) -> Result<CellCounts, PipelineError> {
    CellCounts::read_csv(&cfg.out(artifacts::CELL_COUNTS), grid).map_err(at(stage))
}

fn load_graph(stage: Stage, cfg: &RunConfig) -> Result<(RoadGraph, NetworkReport), PipelineError> {
    load_network(
        &require(stage, &cfg.nodes, "nodes")?,
        &require(stage, &cfg.edges, "edges")?,
        cfg.directed,
    )
    .map_err(at(stage))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdSummary {
    pub origins: usize,
    pub destinations: usize,
    pub unreachable_pairs: usize,
    pub hourly_matrices: usize,
    pub network: NetworkReport,
}

fn unreachable(m: &CostMatrix) -> usize {
    let (r, _) = m.shape();
    (0..r)
        .map(|i| m.row(i).iter().filter(|v| v.is_nan()).count())
        .sum()
}

/// Residential × employment shortest-path matrices.
pub fn stage_odmatrix(cfg: &RunConfig) -> Result<OdSummary, PipelineError> {
    let stage = Stage::OdMatrix;
    let grid = read_grid(stage, cfg)?;
    let cc = read_cell_counts(stage, cfg, grid)?;
    let (graph, network) = load_graph(stage, cfg)?;
    let origins = cc.residential_cells();
    let destinations = cc.employment_cells();
    let opts = OdOptions {
        tolerance: cfg.tolerance(),
        ..OdOptions::for_grid(&grid)
    };
    let m = od_matrix(&graph, &origins, &destinations, &grid, &opts).map_err(at(stage))?;
    m.write(&cfg.out(artifacts::OD_STATIC)).map_err(at(stage))?;
    let mut hourly_matrices = 0;
    if cfg.network_hourly {
        for hour in 0..HOURS {
            let pace = graph
                .mean_pace(hour)
                .ok_or_else(|| at(stage)("edge file has no hourly travel times"))?;
            let opts = OdOptions {
                weight: Weight::Hour(hour),
                intrazonal_floor: opts.intrazonal_floor * pace,
                ..opts
            };
            let mh = od_matrix(&graph, &origins, &destinations, &grid, &opts).map_err(at(stage))?;
            mh.write(&hourly_path(cfg, hour)).map_err(at(stage))?;
            hourly_matrices += 1;
        }
    }
    Ok(OdSummary {
        origins: origins.len(),
        destinations: destinations.len(),
        unreachable_pairs: unreachable(&m),
        hourly_matrices,
        network,
    })
}

fn hourly_path(cfg: &RunConfig, hour: usize) -> PathBuf {
    cfg.out(&artifacts::OD_HOURLY.replace("{hour}", &format!("{hour:02}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaSource {
    Config,
    Flows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutput {
    pub source: BetaSource,
    pub beta: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub intercept: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r_squared: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n_used: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n_excluded: Option<usize>,
}

impl From<FrictionFit> for CalibrationOutput {
    fn from(f: FrictionFit) -> Self {
        Self {
            source: BetaSource::Flows,
            beta: f.beta,
            intercept: Some(f.intercept),
            r_squared: Some(f.r_squared),
            n_used: Some(f.n_used),
            n_excluded: Some(f.n_excluded),
        }
    }
}

/// Network distances between zone centroids, keyed by (origin, destination).
pub fn zone_distances(
    graph: &RoadGraph,
    zones: &[Feature],
    tolerance: f64,
) -> Result<HashMap<(String, String), f64>, crate::network::NetworkError> {
    let nodes: Vec<u64> = zones
        .iter()
        .map(|z| snap_to_node(graph, z.geometry.centroid(), tolerance))
        .collect::<Result<_, _>>()?;
    let mut out = HashMap::new();
    for (zi, &ni) in zones.iter().zip(&nodes) {
        let tree = shortest_path_tree(graph, ni, Weight::Length)?;
        for (zj, &nj) in zones.iter().zip(&nodes) {
            if let Some(d) = tree.distance_to(graph, nj) {
                out.insert((zi.id.clone(), zj.id.clone()), d);
            }
        }
    }
    Ok(out)
}

/// Friction coefficient, either copied from the config or fitted to flows.
pub fn stage_calibrate(cfg: &RunConfig) -> Result<CalibrationOutput, PipelineError> {
    let stage = Stage::Calibrate;
    prepare_output(stage, cfg)?;
    let out = match cfg.beta {
        BetaSetting::Fixed(beta) => CalibrationOutput {
            source: BetaSource::Config,
            beta,
            intercept: None,
            r_squared: None,
            n_used: None,
            n_excluded: None,
        },
        BetaSetting::Calibrate => {
            if cfg.decay != DecayFamily::Power {
                return Err(at(stage)(
                    "calibration fits a power decay; set beta explicitly for other families",
                ));
            }
            let flows = read_flows(&require(stage, &cfg.flows, "flows")?).map_err(at(stage))?;
            let workers =
                read_hourly_table(&cfg.out(artifacts::HOURLY_WORKERS)).map_err(at(stage))?;
            let jobs = read_hourly_table(&cfg.out(artifacts::HOURLY_JOBS)).map_err(at(stage))?;
            let zones = read_zones(stage, cfg)?;
            let daily = |t: &BTreeMap<String, HourlyCounts>| -> HashMap<String, f64> {
                zones
                    .iter()
                    .map(|z| {
                        let v = t.get(&z.id).map_or(0.0, HourlyCounts::daily_total);
                        (z.id.clone(), v)
                    })
                    .collect()
            };
            let (graph, _) = load_graph(stage, cfg)?;
            let dist = zone_distances(&graph, &zones, cfg.tolerance()).map_err(at(stage))?;
            let fit = fit_friction(
                &flows,
                &daily(&workers),
                &daily(&jobs),
                |o, d| dist.get(&(o.to_string(), d.to_string())).copied(),
                cfg.floor(),
            )
            .map_err(at(stage))?;
            fit.into()
        }
    };
    write_json(stage, &cfg.out(artifacts::CALIBRATION), &out)?;
    Ok(out)
}

/// Elementwise mean of equally shaped matrices; unreachable in any hour
/// stays unreachable.
fn mean_matrix(hourly: &[CostMatrix]) -> Result<CostMatrix, crate::network::NetworkError> {
    let first = &hourly[0];
    let (r, c) = first.shape();
    let mut values = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            let mut sum = 0.0;
            let mut ok = true;
            for m in hourly {
                match m.get(i, j) {
                    Some(v) => sum += v,
                    None => ok = false,
                }
            }
            values.push(ok.then(|| sum / hourly.len() as f64));
        }
    }
    CostMatrix::new(
        first.origin_ids().to_vec(),
        first.destination_ids().to_vec(),
        first.unit(),
        None,
        values,
    )
}

/// The four scenarios and their summary table.
pub fn stage_access(cfg: &RunConfig) -> Result<ScenarioReport, PipelineError> {
    let stage = Stage::Access;
    let grid = read_grid(stage, cfg)?;
    let cc = read_cell_counts(stage, cfg, grid)?;
    let cal: CalibrationOutput = read_json(stage, &cfg.out(artifacts::CALIBRATION))?;
    let decay = DecaySpec::new(cfg.decay, cal.beta, cfg.floor()).map_err(at(stage))?;
    let costs = if cfg.time_varying() {
        let pattern = match &cfg.hourly_costs {
            Some(p) => p.clone(),
            None => cfg.out(artifacts::OD_HOURLY).display().to_string(),
        };
        let hourly = load_time_varying_costs(&pattern).map_err(at(stage))?;
        CostSet {
            base: mean_matrix(&hourly).map_err(at(stage))?,
            hourly: Some(hourly),
        }
    } else {
        CostSet {
            base: CostMatrix::read(&cfg.out(artifacts::OD_STATIC)).map_err(at(stage))?,
            hourly: None,
        }
    };
    let hourly_specs: Option<Vec<DecaySpec>> = cfg
        .hourly_beta
        .as_ref()
        .map(|betas| {
            betas
                .iter()
                .map(|&b| DecaySpec::new(cfg.decay, b, cfg.floor()))
                .collect::<Result<_, _>>()
        })
        .transpose()
        .map_err(at(stage))?;
    let hourly_refs: Option<Vec<&dyn Decay>> = hourly_specs
        .as_ref()
        .map(|v| v.iter().map(|d| d as &dyn Decay).collect());
    let set = run_scenarios(&cc, &costs, &decay, hourly_refs.as_deref()).map_err(at(stage))?;
    write_surfaces(&cfg.out(&artifacts::surfaces(1)), &[&set.static_both]).map_err(at(stage))?;
    for (k, surfaces) in [(2, &set.dynamic_jobs), (3, &set.dynamic_workers), (4, &set.space_time)] {
        let refs: Vec<_> = surfaces.iter().collect();
        write_surfaces(&cfg.out(&artifacts::surfaces(k)), &refs).map_err(at(stage))?;
    }
    write_json(stage, &cfg.out(artifacts::SCENARIO_REPORT), &set.report)?;
    Ok(set.report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeSummary {
    pub nx: u32,
    pub ny: u32,
    pub nt: u32,
    pub valid_voxels: usize,
    pub iso_percentile: f64,
    pub isovalue: f64,
    pub mesh_vertices: usize,
    pub mesh_triangles: usize,
}

/// Space-time cube of the full hourly scenario, plus its isosurface.
pub fn stage_cube(cfg: &RunConfig) -> Result<CubeSummary, PipelineError> {
    let stage = Stage::Cube;
    let grid = read_grid(stage, cfg)?;
    let surfaces = read_surfaces(&cfg.out(&artifacts::surfaces(4)), grid).map_err(at(stage))?;
    let cube = assemble_cube(&surfaces, &grid).map_err(at(stage))?;
    write_cube(&cube, &cfg.out(artifacts::CUBE)).map_err(at(stage))?;
    let isovalue = cube.percentile(cfg.iso_percentile).map_err(at(stage))?;
    let mesh = cube.isosurface(isovalue).map_err(at(stage))?;
    if cfg.export_mesh {
        write_obj(&mesh, &cfg.out(artifacts::MESH)).map_err(at(stage))?;
    }
    for &h in &cfg.slice_hours {
        cube.write_slice_csv(h as usize, &cfg.out(&artifacts::slice(h)))
            .map_err(at(stage))?;
    }
    let h = cube.header();
    Ok(CubeSummary {
        nx: h.nx,
        ny: h.ny,
        nt: h.nt,
        valid_voxels: cube.valid_count(),
        iso_percentile: cfg.iso_percentile,
        isovalue,
        mesh_vertices: mesh.vertices.len(),
        mesh_triangles: mesh.triangles.len(),
    })
}

/// Everything a full run reports. Wall-clock timings live in a separate
/// file so this one is reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub temporal: TemporalSummary,
    pub grid: Grid,
    pub dasymetric: DasymetricSummary,
    pub od: OdSummary,
    pub calibration: CalibrationOutput,
    pub scenarios: ScenarioReport,
    pub cube: CubeSummary,
    pub warnings: Vec<Issue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

fn timed<T>(
    timings: &mut Vec<StageTiming>,
    stage: Stage,
    f: impl FnOnce() -> Result<T, PipelineError>,
) -> Result<T, PipelineError> {
    let start = Instant::now();
    let out = f();
    timings.push(StageTiming {
        stage,
        seconds: start.elapsed().as_secs_f64(),
    });
    if let Err(e) = &out {
        log::error!("{e}");
    }
    out
}

/// Validates, then runs every stage in order. A failing stage stops the run;
/// artifacts from earlier stages stay on disk.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunReport, PipelineError> {
    let mut timings = Vec::new();
    let validation = timed(&mut timings, Stage::Validate, || Ok(validate(cfg)))?;
    if !validation.is_ok() {
        return Err(PipelineError::Invalid(validation));
    }
    let temporal = timed(&mut timings, Stage::Temporal, || stage_temporal(cfg))?;
    let grid = timed(&mut timings, Stage::Grid, || stage_grid(cfg))?;
    let dasymetric = timed(&mut timings, Stage::Dasymetric, || stage_dasymetric(cfg))?;
    let od = timed(&mut timings, Stage::OdMatrix, || stage_odmatrix(cfg))?;
    let calibration = timed(&mut timings, Stage::Calibrate, || stage_calibrate(cfg))?;
    let scenarios = timed(&mut timings, Stage::Access, || stage_access(cfg))?;
    let cube = timed(&mut timings, Stage::Cube, || stage_cube(cfg))?;
    let report = RunReport {
        temporal,
        grid,
        dasymetric,
        od,
        calibration,
        scenarios,
        cube,
        warnings: validation.issues,
    };
    write_json(Stage::Cube, &cfg.out(artifacts::REPORT), &report)?;
    write_json(Stage::Cube, &cfg.out(artifacts::TIMINGS), &timings)?;
    Ok(report)
}
