use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dijkstra::search;
use super::{NetworkError, RoadGraph, Weight};
use crate::framing::{decode_payload, read_all, split_frame, write_frame, FrameError};
use crate::geometry::{CellId, Grid};
use crate::temporal::HOURS;

const MAGIC: &[u8; 8] = b"STCOST01";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostUnit {
    Meters,
    Seconds,
}

/// Dense origins × destinations impedance table. Unreachable pairs hold NaN
/// internally and surface as `None`.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    origin_ids: Vec<CellId>,
    destination_ids: Vec<CellId>,
    unit: CostUnit,
    hour: Option<u8>,
    values: Vec<f32>,
    origin_pos: HashMap<CellId, usize>,
    destination_pos: HashMap<CellId, usize>,
}

impl PartialEq for CostMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.origin_ids == other.origin_ids
            && self.destination_ids == other.destination_ids
            && self.unit == other.unit
            && self.hour == other.hour
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixHeader {
    origin_ids: Vec<CellId>,
    destination_ids: Vec<CellId>,
    unit: CostUnit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hour: Option<u8>,
}

impl CostMatrix {
    /// `values` is row-major; `None` marks an unreachable pair.
    pub fn new(
        origin_ids: Vec<CellId>,
        destination_ids: Vec<CellId>,
        unit: CostUnit,
        hour: Option<u8>,
        values: Vec<Option<f64>>,
    ) -> Result<Self, NetworkError> {
        let raw = values
            .into_iter()
            .map(|v| v.map_or(f32::NAN, |d| d as f32))
            .collect();
        Self::from_raw(origin_ids, destination_ids, unit, hour, raw)
    }

    fn from_raw(
        origin_ids: Vec<CellId>,
        destination_ids: Vec<CellId>,
        unit: CostUnit,
        hour: Option<u8>,
        values: Vec<f32>,
    ) -> Result<Self, NetworkError> {
        let invalid = |message: String| NetworkError::Format {
            path: "<matrix>".into(),
            message,
        };
        if values.len() != origin_ids.len() * destination_ids.len() {
            return Err(invalid(format!(
                "{} values for a {}x{} matrix",
                values.len(),
                origin_ids.len(),
                destination_ids.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_nan() && !(**v >= 0.0 && v.is_finite())) {
            return Err(invalid(format!("negative or infinite impedance {v}")));
        }
        if hour.is_some_and(|h| h as usize >= HOURS) {
            return Err(NetworkError::HourOutOfRange(hour.unwrap_or(0) as usize));
        }
        let pos = |ids: &[CellId]| -> Result<HashMap<CellId, usize>, NetworkError> {
            let map: HashMap<CellId, usize> =
                ids.iter().enumerate().map(|(i, &c)| (c, i)).collect();
            if map.len() != ids.len() {
                return Err(invalid("duplicate cell id in matrix header".into()));
            }
            Ok(map)
        };
        Ok(Self {
            origin_pos: pos(&origin_ids)?,
            destination_pos: pos(&destination_ids)?,
            origin_ids,
            destination_ids,
            unit,
            hour,
            values,
        })
    }

    pub fn origin_ids(&self) -> &[CellId] {
        &self.origin_ids
    }

    pub fn destination_ids(&self) -> &[CellId] {
        &self.destination_ids
    }

    pub fn unit(&self) -> CostUnit {
        self.unit
    }

    pub fn hour(&self) -> Option<u8> {
        self.hour
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.origin_ids.len(), self.destination_ids.len())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let v = self.values[i * self.destination_ids.len() + j];
        (!v.is_nan()).then_some(v as f64)
    }

    /// Cost between two cells by id, `None` if unreachable or absent.
    pub fn between(&self, origin: CellId, destination: CellId) -> Option<f64> {
        let i = *self.origin_pos.get(&origin)?;
        let j = *self.destination_pos.get(&destination)?;
        self.get(i, j)
    }

    pub fn origin_position(&self, id: CellId) -> Option<usize> {
        self.origin_pos.get(&id).copied()
    }

    pub fn destination_position(&self, id: CellId) -> Option<usize> {
        self.destination_pos.get(&id).copied()
    }

    /// Raw row; NaN marks unreachable.
    pub fn row(&self, i: usize) -> &[f32] {
        let n = self.destination_ids.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn write(&self, path: &Path) -> Result<(), NetworkError> {
        let header = serde_json::to_vec(&MatrixHeader {
            origin_ids: self.origin_ids.clone(),
            destination_ids: self.destination_ids.clone(),
            unit: self.unit,
            hour: self.hour,
        })
        .map_err(FrameError::from)?;
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_frame(file, MAGIC, &header, &self.values)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, NetworkError> {
        let wrap = |e: FrameError| NetworkError::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let bytes = read_all(path)?;
        let (header, payload) = split_frame(&bytes, MAGIC).map_err(wrap)?;
        let h: MatrixHeader =
            serde_json::from_slice(header).map_err(|e| wrap(FrameError::from(e)))?;
        let n = h.origin_ids.len() * h.destination_ids.len();
        let values = decode_payload(payload, 12 + header.len(), n).map_err(wrap)?;
        Self::from_raw(h.origin_ids, h.destination_ids, h.unit, h.hour, values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdOptions {
    /// Snap radius around each cell centroid, meters.
    pub tolerance: f64,
    /// Value written for a cell paired with itself, in matrix units.
    pub intrazonal_floor: f64,
    pub weight: Weight,
}

impl OdOptions {
    /// Network-length matrix with the usual defaults for `grid`: snap within
    /// two cells, intrazonal cost of half a cell.
    pub fn for_grid(grid: &Grid) -> Self {
        Self {
            tolerance: 2.0 * grid.cell_size,
            intrazonal_floor: grid.cell_size / 2.0,
            weight: Weight::Length,
        }
    }
}

/// Many-to-many shortest-path matrix between cell centroids. One tree is
/// grown per distinct origin node, in parallel; rows land in fixed slots so
/// the result does not depend on the thread count.
pub fn od_matrix(
    graph: &RoadGraph,
    origins: &[CellId],
    destinations: &[CellId],
    grid: &Grid,
    options: &OdOptions,
) -> Result<CostMatrix, NetworkError> {
    if !(options.tolerance > 0.0) {
        return Err(NetworkError::InvalidTolerance(options.tolerance));
    }
    graph.check_weight(options.weight)?;
    let mut failed = BTreeSet::new();
    let mut snap_all = |cells: &[CellId]| -> Vec<usize> {
        cells
            .iter()
            .map(|&c| {
                let snapped = grid
                    .centroid_of(c)
                    .ok()
                    .and_then(|p| graph.snap_index(p, options.tolerance).ok());
                snapped.unwrap_or_else(|| {
                    failed.insert(c);
                    usize::MAX
                })
            })
            .collect()
    };
    let origin_nodes = snap_all(origins);
    let dest_nodes = snap_all(destinations);
    if !failed.is_empty() {
        return Err(NetworkError::SnapFailures {
            cells: failed.into_iter().collect(),
            tolerance: options.tolerance,
        });
    }

    let distinct: Vec<usize> = origin_nodes
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let rows: BTreeMap<usize, Vec<f32>> = distinct
        .par_iter()
        .map(|&src| {
            let dist = search(graph, src, options.weight);
            let row = dest_nodes
                .iter()
                .map(|&d| {
                    let v = dist[d];
                    if v.is_finite() {
                        v as f32
                    } else {
                        f32::NAN
                    }
                })
                .collect();
            (src, row)
        })
        .collect();

    let n_dest = destinations.len();
    let mut values = vec![f32::NAN; origins.len() * n_dest];
    values
        .par_chunks_mut(n_dest.max(1))
        .zip(origins.par_iter().zip(origin_nodes.par_iter()))
        .for_each(|(slot, (&cell, node))| {
            slot.copy_from_slice(&rows[node]);
            for (j, &dest) in destinations.iter().enumerate() {
                if dest == cell {
                    slot[j] = options.intrazonal_floor as f32;
                }
            }
        });
    let (unit, hour) = match options.weight {
        Weight::Length => (CostUnit::Meters, None),
        Weight::Hour(h) => (CostUnit::Seconds, Some(h as u8)),
    };
    CostMatrix::from_raw(origins.to_vec(), destinations.to_vec(), unit, hour, values)
}

/// Loads 24 per-hour matrices from `pattern`, where `{hour}` expands to the
/// two-digit hour. All hours must list the same ids in the same order.
pub fn load_time_varying_costs(pattern: &str) -> Result<Vec<CostMatrix>, NetworkError> {
    let mut out: Vec<CostMatrix> = Vec::with_capacity(HOURS);
    for hour in 0..HOURS {
        let path = pattern.replace("{hour}", &format!("{hour:02}"));
        let p = Path::new(&path);
        if !p.exists() {
            return Err(NetworkError::MissingHour { hour, path });
        }
        let mut m = CostMatrix::read(p)?;
        if let Some(first) = out.first() {
            if m.shape() != first.shape() {
                return Err(NetworkError::ShapeMismatch {
                    hour,
                    got: m.shape(),
                    expected: first.shape(),
                });
            }
            if m.origin_ids != first.origin_ids || m.destination_ids != first.destination_ids {
                return Err(NetworkError::IdOrderMismatch { hour });
            }
        }
        m.hour = Some(hour as u8);
        out.push(m);
    }
    Ok(out)
}
