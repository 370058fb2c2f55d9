//! The (x, y, t) voxel lattice of hourly accessibility values.
//!
//! Cube coordinates are lattice indices: `x` is the grid column, `y` the
//! grid row and `t` the hour layer. The lattice point `(col, row, t)` holds
//! the value of cell `(col, row)` at hour `hour0 + t`.

mod marching;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accessibility::AccessibilitySurface;
use crate::framing::{decode_payload, read_all, split_frame, write_frame, FrameError};
use crate::geometry::Grid;
use crate::temporal::HOURS;

pub use marching::{isosurface, TriangleMesh};

pub const MAGIC: &[u8; 8] = b"STCUBE01";

#[derive(Debug, Error)]
pub enum CubeError {
    #[error("missing surface for hour {0}")]
    MissingHour(u8),
    #[error("more than one surface for hour {0}")]
    DuplicateHour(u8),
    #[error("surface without an hour tag cannot be placed in the cube")]
    StaticSurface,
    #[error("surface for hour {hour} is on a different grid")]
    GridMismatch { hour: u8 },
    #[error("surface for hour {hour} has invalid value {value} at cell {cell}")]
    InvalidValue { hour: u8, cell: u32, value: f64 },
    #[error("point ({x}, {y}, {t}) lies outside the lattice hull")]
    OutOfHull { x: f64, y: f64, t: f64 },
    #[error("cube has no valid voxels")]
    EmptyCube,
    #[error("percentile must lie in [0, 100], got {0}")]
    InvalidPercentile(f64),
    #[error("isovalue must be finite, got {0}")]
    NonFiniteIsovalue(f64),
    #[error("hour {hour} is not a layer of this cube (nt = {nt})")]
    LayerOutOfRange { hour: usize, nt: usize },
    #[error("invalid cube header: {0}")]
    Header(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Display transform recommended to viewers; stored values are never
/// transformed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    None,
    #[default]
    Log1p,
}

/// JSON header of a cube file, in on-disk field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeHeader {
    pub nx: u32,
    pub ny: u32,
    pub nt: u32,
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size: f64,
    pub hour0: u32,
    pub transform: Transform,
    pub value_unit: String,
}

impl CubeHeader {
    /// Conditions a reader should be told about but that do not make the
    /// file unreadable.
    pub fn flags(&self) -> Vec<&'static str> {
        let mut flags = Vec::new();
        if self.nt as usize != HOURS {
            flags.push("nonstandard_nt");
        }
        flags
    }
}

#[derive(Debug, Clone)]
pub struct SpaceTimeCube {
    grid: Grid,
    nt: usize,
    hour0: u32,
    transform: Transform,
    value_unit: String,
    values: Vec<f32>,
}

impl PartialEq for SpaceTimeCube {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.nt == other.nt
            && self.hour0 == other.hour0
            && self.transform == other.transform
            && self.value_unit == other.value_unit
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()))
    }
}

/// Places 24 hourly surfaces into layers 0..23.
pub fn assemble_cube(
    surfaces: &[AccessibilitySurface],
    grid: &Grid,
) -> Result<SpaceTimeCube, CubeError> {
    let mut slot: [Option<&AccessibilitySurface>; HOURS] = [None; HOURS];
    for s in surfaces {
        let hour = s.hour.ok_or(CubeError::StaticSurface)?;
        let entry = slot
            .get_mut(hour as usize)
            .ok_or_else(|| CubeError::Header(format!("surface hour {hour} exceeds 23")))?;
        if entry.is_some() {
            return Err(CubeError::DuplicateHour(hour));
        }
        if s.grid != *grid {
            return Err(CubeError::GridMismatch { hour });
        }
        *entry = Some(s);
    }
    let n = grid.cell_count();
    let mut values = vec![f32::NAN; n * HOURS];
    for (t, s) in slot.iter().enumerate() {
        let s = s.ok_or(CubeError::MissingHour(t as u8))?;
        let layer = &mut values[t * n..(t + 1) * n];
        for (&cell, &v) in s.cells.iter().zip(&s.values) {
            if !v.is_finite() || v < 0.0 || cell as usize >= n {
                return Err(CubeError::InvalidValue {
                    hour: t as u8,
                    cell,
                    value: v,
                });
            }
            layer[cell as usize] = v as f32;
        }
    }
    Ok(SpaceTimeCube {
        grid: *grid,
        nt: HOURS,
        hour0: 0,
        transform: Transform::default(),
        value_unit: "accessibility".to_string(),
        values,
    })
}

impl SpaceTimeCube {
    /// Builds a cube from a raw lattice (x fastest, then y, then t); NaN
    /// marks inactive voxels.
    pub fn from_lattice(grid: Grid, nt: usize, values: Vec<f32>) -> Result<Self, CubeError> {
        if nt == 0 || values.len() != grid.cell_count() * nt {
            return Err(CubeError::Header(format!(
                "lattice of {} values does not match {}x{}x{}",
                values.len(),
                grid.nx,
                grid.ny,
                nt
            )));
        }
        Ok(Self {
            grid,
            nt,
            hour0: 0,
            transform: Transform::default(),
            value_unit: "accessibility".to_string(),
            values,
        })
    }

    pub fn with_transform(mut self, transform: Transform) -> Self {
        self.transform = transform;
        self
    }

    pub fn with_value_unit(mut self, unit: impl Into<String>) -> Self {
        self.value_unit = unit.into();
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.grid.nx as usize, self.grid.ny as usize, self.nt)
    }

    pub fn hour0(&self) -> u32 {
        self.hour0
    }

    pub fn transform(&self) -> Transform {
        self.transform
    }

    pub fn value_unit(&self) -> &str {
        &self.value_unit
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn header(&self) -> CubeHeader {
        CubeHeader {
            nx: self.grid.nx,
            ny: self.grid.ny,
            nt: self.nt as u32,
            origin_x: self.grid.origin_x,
            origin_y: self.grid.origin_y,
            cell_size: self.grid.cell_size,
            hour0: self.hour0,
            transform: self.transform,
            value_unit: self.value_unit.clone(),
        }
    }

    #[inline]
    fn index(&self, x: usize, y: usize, t: usize) -> usize {
        let (nx, ny) = (self.grid.nx as usize, self.grid.ny as usize);
        (t * ny + y) * nx + x
    }

    /// Voxel value, or `None` for an inactive voxel or an index outside the
    /// lattice.
    pub fn get(&self, x: usize, y: usize, t: usize) -> Option<f32> {
        let (nx, ny, nt) = self.dims();
        if x >= nx || y >= ny || t >= nt {
            return None;
        }
        let v = self.values[self.index(x, y, t)];
        (!v.is_nan()).then_some(v)
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| !v.is_nan()).count()
    }

    /// Trilinear blend of the lattice values around `(x, y, t)`.
    ///
    /// Only corners with non-zero weight take part, so sampling exactly on a
    /// lattice point, edge or face ignores the voxels beyond it. Returns
    /// `Ok(None)` when a participating voxel is inactive.
    pub fn trilinear_sample(&self, x: f64, y: f64, t: f64) -> Result<Option<f64>, CubeError> {
        let (nx, ny, nt) = self.dims();
        let out = || CubeError::OutOfHull { x, y, t };
        let (ix, fx) = axis_cell(x, nx).ok_or_else(out)?;
        let (iy, fy) = axis_cell(y, ny).ok_or_else(out)?;
        let (it, ft) = axis_cell(t, nt).ok_or_else(out)?;
        let mut acc = 0.0;
        for dt in 0..2 {
            let wt = if dt == 0 { 1.0 - ft } else { ft };
            if wt == 0.0 {
                continue;
            }
            for dy in 0..2 {
                let wy = if dy == 0 { 1.0 - fy } else { fy };
                if wy == 0.0 {
                    continue;
                }
                for dx in 0..2 {
                    let wx = if dx == 0 { 1.0 - fx } else { fx };
                    if wx == 0.0 {
                        continue;
                    }
                    let v = self.values[self.index(ix + dx, iy + dy, it + dt)];
                    if v.is_nan() {
                        return Ok(None);
                    }
                    acc += wt * wy * wx * v as f64;
                }
            }
        }
        Ok(Some(acc))
    }

    /// Order statistic at `p` percent over valid voxels, interpolating
    /// linearly at index `(n − 1)·p/100` of the sorted values.
    pub fn percentile(&self, p: f64) -> Result<f64, CubeError> {
        if !(0.0..=100.0).contains(&p) {
            return Err(CubeError::InvalidPercentile(p));
        }
        let mut v: Vec<f64> = self
            .values
            .iter()
            .filter(|v| !v.is_nan())
            .map(|&v| v as f64)
            .collect();
        if v.is_empty() {
            return Err(CubeError::EmptyCube);
        }
        v.sort_by(f64::total_cmp);
        Ok(order_statistic(&v, p))
    }

    pub fn isosurface(&self, isovalue: f64) -> Result<TriangleMesh, CubeError> {
        isosurface(self, isovalue)
    }

    /// Writes one hour layer as `cell_col,cell_row,x,y,hour,value`, with
    /// cell-centre coordinates; inactive cells are omitted.
    pub fn write_slice_csv(&self, layer: usize, path: &Path) -> Result<(), CubeError> {
        let (nx, ny, nt) = self.dims();
        if layer >= nt {
            return Err(CubeError::LayerOutOfRange { hour: layer, nt });
        }
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["cell_col", "cell_row", "x", "y", "hour", "value"])?;
        let hour = (self.hour0 as usize + layer).to_string();
        for row in 0..ny {
            for col in 0..nx {
                if let Some(v) = self.get(col, row, layer) {
                    let c = self
                        .grid
                        .cell_centroid(col as u32, row as u32)
                        .expect("index within grid");
                    w.write_record([
                        col.to_string(),
                        row.to_string(),
                        c.x.to_string(),
                        c.y.to_string(),
                        hour.clone(),
                        v.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Lower lattice index and fractional offset along one axis of length `n`.
fn axis_cell(c: f64, n: usize) -> Option<(usize, f64)> {
    let max = (n - 1) as f64;
    if !(c >= 0.0 && c <= max) {
        return None;
    }
    if n == 1 {
        return Some((0, 0.0));
    }
    let i = (c.floor() as usize).min(n - 2);
    Some((i, c - i as f64))
}

/// Linear interpolation between order statistics of an ascending slice.
pub(crate) fn order_statistic(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn write_cube(cube: &SpaceTimeCube, path: &Path) -> Result<(), CubeError> {
    let header = serde_json::to_vec(&cube.header()).map_err(FrameError::from)?;
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_frame(file, MAGIC, &header, &cube.values)?;
    Ok(())
}

pub fn read_cube(path: &Path) -> Result<SpaceTimeCube, CubeError> {
    let bytes = read_all(path)?;
    let (cube, flags) = decode_cube(&bytes)?;
    for f in flags {
        log::warn!("{}: {f}", path.display());
    }
    Ok(cube)
}

/// Parses an in-memory cube file, returning the header flags alongside.
pub fn decode_cube(bytes: &[u8]) -> Result<(SpaceTimeCube, Vec<&'static str>), CubeError> {
    let (header, payload) = split_frame(bytes, MAGIC)?;
    let h: CubeHeader = serde_json::from_slice(header).map_err(FrameError::from)?;
    let grid = Grid::new(h.origin_x, h.origin_y, h.cell_size, h.nx, h.ny)
        .map_err(|e| CubeError::Header(e.to_string()))?;
    if h.nt == 0 {
        return Err(CubeError::Header("nt must be positive".into()));
    }
    let n = grid.cell_count() * h.nt as usize;
    let values = decode_payload(payload, 12 + header.len(), n)?;
    let flags = h.flags();
    Ok((
        SpaceTimeCube {
            grid,
            nt: h.nt as usize,
            hour0: h.hour0,
            transform: h.transform,
            value_unit: h.value_unit,
            values,
        },
        flags,
    ))
}

/// Wavefront OBJ in cube coordinates (1-based face indices).
pub fn write_obj(mesh: &TriangleMesh, path: &Path) -> Result<(), CubeError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v[0], v[1], v[2])?;
    }
    for t in &mesh.triangles {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    w.flush()?;
    Ok(())
}
