//! C ABI over the `stacc` engine.
//!
//! Every function returns a [`StaccStatus`]; results come back through out
//! pointers. On failure, [`stacc_last_error`] gives a message for the calling
//! thread. Handles are opaque and must be released with their `_free`
//! function. No function keeps a borrowed pointer after it returns.

use std::cell::RefCell;
use std::collections::HashMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use stacc::calibration::{fit_friction, DecayFamily, DecaySpec, FlowRecord};
use stacc::cube::{read_cube, CubeError, SpaceTimeCube, TriangleMesh};
use stacc::pipeline::{run_pipeline, PipelineError, RunConfig};
use stacc::temporal::{disaggregate_to_hourly, IntervalCount, HOURS};

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StaccStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    OutOfRange = 5,
    /// The queried location or value is a no-data sentinel.
    NoData = 6,
    Validation = 7,
    Compute = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StaccDecayFamily {
    Power = 0,
    Exponential = 1,
    Gaussian = 2,
}

impl From<StaccDecayFamily> for DecayFamily {
    fn from(f: StaccDecayFamily) -> Self {
        match f {
            StaccDecayFamily::Power => DecayFamily::Power,
            StaccDecayFamily::Exponential => DecayFamily::Exponential,
            StaccDecayFamily::Gaussian => DecayFamily::Gaussian,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StaccFrictionFit {
    pub beta: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_used: usize,
    pub n_excluded: usize,
}

/// A loaded space-time cube.
pub struct StaccCube(SpaceTimeCube);

/// A triangle mesh extracted from a cube.
pub struct StaccMesh(TriangleMesh);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    let c = CString::new(text).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(StaccStatus, String);

impl Failure {
    fn new(status: StaccStatus, message: impl Into<String>) -> Self {
        Self(status, message.into())
    }
}

type FfiResult = Result<(), Failure>;

fn guard(f: impl FnOnce() -> FfiResult) -> StaccStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => StaccStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {message}"));
            StaccStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(StaccStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, Failure> {
    non_null(p, name)?;
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(StaccStatus::InvalidArgument, format!("{name} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

fn cube_failure(e: CubeError) -> Failure {
    let status = match &e {
        CubeError::Io(_) => StaccStatus::Io,
        CubeError::Header(_) | CubeError::Frame(_) => StaccStatus::Format,
        CubeError::OutOfHull { .. } | CubeError::LayerOutOfRange { .. } => StaccStatus::OutOfRange,
        CubeError::EmptyCube => StaccStatus::NoData,
        CubeError::InvalidPercentile(_) | CubeError::NonFiniteIsovalue(_) => {
            StaccStatus::InvalidArgument
        }
        _ => StaccStatus::Compute,
    };
    Failure::new(status, e.to_string())
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn stacc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn stacc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Opens an STCUBE01 file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn stacc_cube_open(
    path: *const c_char,
    out: *mut *mut StaccCube,
) -> StaccStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = path_arg(path, "path")?;
        let cube = read_cube(&path).map_err(cube_failure)?;
        *out = Box::into_raw(Box::new(StaccCube(cube)));
        Ok(())
    })
}

/// Releases a cube. Null is accepted.
///
/// # Safety
/// `cube` must come from [`stacc_cube_open`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn stacc_cube_free(cube: *mut StaccCube) {
    if !cube.is_null() {
        drop(Box::from_raw(cube));
    }
}

/// # Safety
/// `cube` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn stacc_cube_dims(
    cube: *const StaccCube,
    nx: *mut usize,
    ny: *mut usize,
    nt: *mut usize,
) -> StaccStatus {
    guard(|| {
        non_null(cube, "cube")?;
        non_null(nx, "nx")?;
        non_null(ny, "ny")?;
        non_null(nt, "nt")?;
        let (x, y, t) = (*cube).0.dims();
        *nx = x;
        *ny = y;
        *nt = t;
        Ok(())
    })
}

/// Geographic placement: lower-left corner of cell (0, 0) and cell size.
///
/// # Safety
/// `cube` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn stacc_cube_geometry(
    cube: *const StaccCube,
    origin_x: *mut f64,
    origin_y: *mut f64,
    cell_size: *mut f64,
) -> StaccStatus {
    guard(|| {
        non_null(cube, "cube")?;
        non_null(origin_x, "origin_x")?;
        non_null(origin_y, "origin_y")?;
        non_null(cell_size, "cell_size")?;
        let h = (*cube).0.header();
        *origin_x = h.origin_x;
        *origin_y = h.origin_y;
        *cell_size = h.cell_size;
        Ok(())
    })
}

/// Value of one voxel. Returns `NoData` for the sentinel.
///
/// # Safety
/// `cube` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stacc_cube_value(
    cube: *const StaccCube,
    x: usize,
    y: usize,
    t: usize,
    out: *mut f32,
) -> StaccStatus {
    guard(|| {
        non_null(cube, "cube")?;
        non_null(out, "out")?;
        let c = &(*cube).0;
        let (nx, ny, nt) = c.dims();
        if x >= nx || y >= ny || t >= nt {
            return Err(Failure::new(
                StaccStatus::OutOfRange,
                format!("voxel ({x}, {y}, {t}) outside {nx}x{ny}x{nt}"),
            ));
        }
        match c.get(x, y, t) {
            Some(v) => {
                *out = v;
                Ok(())
            }
            None => Err(Failure::new(StaccStatus::NoData, "voxel holds no data")),
        }
    })
}

/// Trilinear sample at fractional lattice coordinates.
///
/// # Safety
/// `cube` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stacc_cube_sample(
    cube: *const StaccCube,
    x: f64,
    y: f64,
    t: f64,
    out: *mut f64,
) -> StaccStatus {
    guard(|| {
        non_null(cube, "cube")?;
        non_null(out, "out")?;
        match (*cube).0.trilinear_sample(x, y, t).map_err(cube_failure)? {
            Some(v) => {
                *out = v;
                Ok(())
            }
            None => Err(Failure::new(
                StaccStatus::NoData,
                "a contributing voxel holds no data",
            )),
        }
    })
}

/// Percentile `p` in [0, 100] of the valid voxel values.
///
/// # Safety
/// `cube` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stacc_cube_percentile(
    cube: *const StaccCube,
    p: f64,
    out: *mut f64,
) -> StaccStatus {
    guard(|| {
        non_null(cube, "cube")?;
        non_null(out, "out")?;
        *out = (*cube).0.percentile(p).map_err(cube_failure)?;
        Ok(())
    })
}

/// Extracts the isosurface at `isovalue`, in lattice coordinates.
///
/// # Safety
/// `cube` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stacc_mesh_extract(
    cube: *const StaccCube,
    isovalue: f64,
    out: *mut *mut StaccMesh,
) -> StaccStatus {
    guard(|| {
        non_null(cube, "cube")?;
        non_null(out, "out")?;
        let mesh = (*cube).0.isosurface(isovalue).map_err(cube_failure)?;
        *out = Box::into_raw(Box::new(StaccMesh(mesh)));
        Ok(())
    })
}

/// Releases a mesh. Null is accepted.
///
/// # Safety
/// `mesh` must come from [`stacc_mesh_extract`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn stacc_mesh_free(mesh: *mut StaccMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// # Safety
/// `mesh` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn stacc_mesh_counts(
    mesh: *const StaccMesh,
    vertices: *mut usize,
    triangles: *mut usize,
) -> StaccStatus {
    guard(|| {
        non_null(mesh, "mesh")?;
        non_null(vertices, "vertices")?;
        non_null(triangles, "triangles")?;
        *vertices = (*mesh).0.vertices.len();
        *triangles = (*mesh).0.triangles.len();
        Ok(())
    })
}

/// Copies vertex coordinates as `x0 y0 t0 x1 y1 t1 ...`; `len` counts
/// doubles and must be at least three per vertex.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn stacc_mesh_copy_vertices(
    mesh: *const StaccMesh,
    buf: *mut f64,
    len: usize,
) -> StaccStatus {
    guard(|| {
        non_null(mesh, "mesh")?;
        let v = &(*mesh).0.vertices;
        if len < v.len() * 3 {
            return Err(Failure::new(
                StaccStatus::BufferTooSmall,
                format!("need {} doubles, got {len}", v.len() * 3),
            ));
        }
        if v.is_empty() {
            return Ok(());
        }
        non_null(buf, "buf")?;
        let dst = std::slice::from_raw_parts_mut(buf, v.len() * 3);
        for (chunk, p) in dst.chunks_exact_mut(3).zip(v) {
            chunk.copy_from_slice(p);
        }
        Ok(())
    })
}

/// Copies triangle vertex indices, three per triangle.
///
/// # Safety
/// `buf` must point to `len` writable `uint32_t`.
#[no_mangle]
pub unsafe extern "C" fn stacc_mesh_copy_triangles(
    mesh: *const StaccMesh,
    buf: *mut u32,
    len: usize,
) -> StaccStatus {
    guard(|| {
        non_null(mesh, "mesh")?;
        let t = &(*mesh).0.triangles;
        if len < t.len() * 3 {
            return Err(Failure::new(
                StaccStatus::BufferTooSmall,
                format!("need {} indices, got {len}", t.len() * 3),
            ));
        }
        if t.is_empty() {
            return Ok(());
        }
        non_null(buf, "buf")?;
        let dst = std::slice::from_raw_parts_mut(buf, t.len() * 3);
        for (chunk, tri) in dst.chunks_exact_mut(3).zip(t) {
            chunk.copy_from_slice(tri);
        }
        Ok(())
    })
}

/// Distance-decay weight. `reachable = false` yields 0.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stacc_decay_weight(
    family: StaccDecayFamily,
    beta: f64,
    floor: f64,
    distance: f64,
    reachable: bool,
    out: *mut f64,
) -> StaccStatus {
    guard(|| {
        non_null(out, "out")?;
        let spec = DecaySpec::new(family.into(), beta, floor)
            .map_err(|e| Failure::new(StaccStatus::InvalidArgument, e.to_string()))?;
        if reachable && !(distance >= 0.0 && distance.is_finite()) {
            return Err(Failure::new(
                StaccStatus::InvalidArgument,
                format!("distance must be finite and non-negative, got {distance}"),
            ));
        }
        *out = if reachable { spec.eval(distance) } else { 0.0 };
        Ok(())
    })
}

/// Spreads `n` interval counts over 24 hourly bins written to `out_hours`.
///
/// # Safety
/// The three input arrays hold `n` elements; `out_hours` holds 24.
#[no_mangle]
pub unsafe extern "C" fn stacc_disaggregate(
    start_minutes: *const u32,
    end_minutes: *const u32,
    counts: *const f64,
    n: usize,
    out_hours: *mut f64,
) -> StaccStatus {
    guard(|| {
        non_null(out_hours, "out_hours")?;
        let starts = slice_arg(start_minutes, n, "start_minutes")?;
        let ends = slice_arg(end_minutes, n, "end_minutes")?;
        let counts = slice_arg(counts, n, "counts")?;
        let table = starts
            .iter()
            .zip(ends)
            .zip(counts)
            .map(|((&s, &e), &c)| IntervalCount::new(s, e, c))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Failure::new(StaccStatus::InvalidArgument, e.to_string()))?;
        let hourly = disaggregate_to_hourly(&table)
            .map_err(|e| Failure::new(StaccStatus::InvalidArgument, e.to_string()))?;
        std::slice::from_raw_parts_mut(out_hours, HOURS).copy_from_slice(&hourly.0);
        Ok(())
    })
}

/// Fits the power-law friction coefficient from `n` flow records, each
/// given as commuters, origin demand, destination supply and distance.
/// A negative distance marks an unreachable pair.
///
/// # Safety
/// The four input arrays hold `n` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stacc_fit_friction(
    commuters: *const f64,
    demand: *const f64,
    supply: *const f64,
    distance: *const f64,
    n: usize,
    floor: f64,
    out: *mut StaccFrictionFit,
) -> StaccStatus {
    guard(|| {
        non_null(out, "out")?;
        let commuters = slice_arg(commuters, n, "commuters")?;
        let demand = slice_arg(demand, n, "demand")?;
        let supply = slice_arg(supply, n, "supply")?;
        let distance = slice_arg(distance, n, "distance")?;
        let mut flows = Vec::with_capacity(n);
        let mut dmap = HashMap::with_capacity(n);
        let mut smap = HashMap::with_capacity(n);
        let mut dist = HashMap::with_capacity(n);
        for i in 0..n {
            let (o, d) = (format!("o{i}"), format!("d{i}"));
            dmap.insert(o.clone(), demand[i]);
            smap.insert(d.clone(), supply[i]);
            dist.insert((o.clone(), d.clone()), distance[i]);
            flows.push(FlowRecord {
                origin_id: o,
                destination_id: d,
                commuters: commuters[i],
            });
        }
        let fit = fit_friction(
            &flows,
            &dmap,
            &smap,
            |o, d| {
                dist.get(&(o.to_string(), d.to_string()))
                    .copied()
                    .filter(|v| *v >= 0.0)
            },
            floor,
        )
        .map_err(|e| Failure::new(StaccStatus::Compute, e.to_string()))?;
        *out = StaccFrictionFit {
            beta: fit.beta,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
            n_used: fit.n_used,
            n_excluded: fit.n_excluded,
        };
        Ok(())
    })
}

/// Runs every pipeline stage for a TOML configuration. Artifacts and
/// `report.json` land in the configured output directory.
///
/// # Safety
/// `config_path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn stacc_run_pipeline(config_path: *const c_char) -> StaccStatus {
    guard(|| {
        let path = path_arg(config_path, "config_path")?;
        let cfg = RunConfig::load(&path)
            .map_err(|e| Failure::new(StaccStatus::InvalidArgument, e.to_string()))?;
        run_pipeline(&cfg).map(|_| ()).map_err(|e| {
            let status = match &e {
                PipelineError::Config { .. } => StaccStatus::InvalidArgument,
                PipelineError::Invalid(_) => StaccStatus::Validation,
                PipelineError::Stage { .. } => StaccStatus::Compute,
            };
            let message = match &e {
                PipelineError::Invalid(report) => {
                    let codes: Vec<&str> = report
                        .issues
                        .iter()
                        .filter(|i| i.severity == stacc::pipeline::Severity::Error)
                        .map(|i| i.code.as_str())
                        .collect();
                    format!("{e}: {}", codes.join(", "))
                }
                _ => e.to_string(),
            };
            Failure::new(status, message)
        })
    })
}
