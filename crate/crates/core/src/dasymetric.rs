//! Dasymetric redistribution of zone counts onto grid cells.
//!
//! A zone's count is spread over the auxiliary land-use area it contains:
//!
//! ```text
//! ŷ(cell) = Σ_zone  y(zone) / Σ_aux A(aux ∩ zone)  ·  Σ_aux A(aux ∩ zone ∩ cell)
//! ```
//!
//! Auxiliary polygons are clipped to the zone before both sums, so a parcel
//! straddling two zones contributes to each only the part inside it. A zone
//! with a positive count but no matching auxiliary area falls back to its own
//! area and is reported in the diagnostics.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    intersection_area, intersection_area_many, CellId, Grid, MultiPolygon, Polygon, PolygonIndex,
};
use crate::temporal::{HourlyCounts, HOURS};

/// Daily totals at or below this are treated as empty cells.
pub const ACTIVITY_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DasymetricError {
    #[error("duplicate zone id {0}")]
    DuplicateZone(String),
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LandUse {
    Residential,
    Employment,
}

impl LandUse {
    /// Accepts the common parcel class spellings.
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "residential" => Some(Self::Residential),
            "employment" | "commercial" | "industrial" | "commercial/industrial" => {
                Some(Self::Employment)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountKind {
    Workers,
    Jobs,
}

impl CountKind {
    pub fn land_use(self) -> LandUse {
        match self {
            CountKind::Workers => LandUse::Residential,
            CountKind::Jobs => LandUse::Employment,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CountKind::Workers => "workers",
            CountKind::Jobs => "jobs",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CountZone {
    pub id: String,
    pub geometry: MultiPolygon,
    pub workers: HourlyCounts,
    pub jobs: HourlyCounts,
}

impl CountZone {
    pub fn counts(&self, kind: CountKind) -> &HourlyCounts {
        match kind {
            CountKind::Workers => &self.workers,
            CountKind::Jobs => &self.jobs,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AuxiliaryZone {
    pub id: String,
    pub geometry: MultiPolygon,
    pub land_use: LandUse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "diagnostic", rename_all = "snake_case")]
pub enum Diagnostic {
    /// No matching land-use area inside the zone; spread by zone area.
    FallbackToZoneArea { zone: String, kind: CountKind },
    /// Part of the zone lies outside the grid; that share was dropped.
    UncoveredMass {
        zone: String,
        kind: CountKind,
        lost: f64,
    },
}

/// One count kind spread over cells.
#[derive(Debug, Clone)]
pub struct Interpolated {
    pub kind: CountKind,
    pub cells: BTreeMap<CellId, HourlyCounts>,
    pub mass_in: HourlyCounts,
    pub mass_out: HourlyCounts,
    pub diagnostics: Vec<Diagnostic>,
}

struct ZoneShare {
    cells: Vec<(CellId, f64)>,
    denom: f64,
    fallback: bool,
}

fn zone_share(zone: &CountZone, aux: &[&AuxiliaryZone], index: &PolygonIndex, grid: &Grid) -> ZoneShare {
    let mut weights: BTreeMap<CellId, f64> = BTreeMap::new();
    let mut denom = 0.0;
    for &a in &index.query(&zone.geometry.bbox()) {
        for zp in &zone.geometry.parts {
            for ap in &aux[a].geometry.parts {
                let Some(both) = zp.bbox().intersection(&ap.bbox()) else {
                    continue;
                };
                let base = intersection_area(ap, zp);
                if base == 0.0 {
                    continue;
                }
                denom += base;
                accumulate_cells(grid, &both, &[ap, zp], &mut weights);
            }
        }
    }
    let mut fallback = false;
    if denom == 0.0 {
        fallback = true;
        for zp in &zone.geometry.parts {
            denom += zp.area();
            accumulate_cells(grid, &zp.bbox(), &[zp], &mut weights);
        }
    }
    ZoneShare {
        cells: weights.into_iter().collect(),
        denom,
        fallback,
    }
}

fn accumulate_cells(
    grid: &Grid,
    bbox: &crate::geometry::BBox,
    polys: &[&Polygon],
    weights: &mut BTreeMap<CellId, f64>,
) {
    let Some((cols, rows)) = grid.cells_overlapping(bbox) else {
        return;
    };
    for row in rows {
        for col in cols.clone() {
            let cell = grid.cell_polygon(col, row);
            let mut stack: Vec<&Polygon> = polys.to_vec();
            stack.push(&cell);
            let w = intersection_area_many(&stack);
            if w > 0.0 {
                *weights.entry(row * grid.nx + col).or_insert(0.0) += w;
            }
        }
    }
}

/// Spreads one count kind of every zone over the grid. Auxiliary zones of the
/// other land-use class are ignored.
pub fn interpolate(
    zones: &[CountZone],
    aux: &[AuxiliaryZone],
    grid: &Grid,
    kind: CountKind,
) -> Result<Interpolated, DasymetricError> {
    let mut order: Vec<&CountZone> = zones.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    for pair in order.windows(2) {
        if pair[0].id == pair[1].id {
            return Err(DasymetricError::DuplicateZone(pair[0].id.clone()));
        }
    }
    let matching: Vec<&AuxiliaryZone> = aux
        .iter()
        .filter(|a| a.land_use == kind.land_use())
        .collect();
    let index = PolygonIndex::new(matching.iter().map(|a| a.geometry.bbox()));

    let shares: Vec<Option<ZoneShare>> = order
        .par_iter()
        .map(|z| {
            (z.counts(kind).daily_total() > 0.0).then(|| zone_share(z, &matching, &index, grid))
        })
        .collect();

    // fixed zone-id order keeps the sums independent of scheduling
    let mut cells: BTreeMap<CellId, HourlyCounts> = BTreeMap::new();
    let mut mass_in = HourlyCounts::zero();
    let mut mass_out = HourlyCounts::zero();
    let mut diagnostics = Vec::new();
    for (zone, share) in order.iter().zip(shares) {
        let counts = zone.counts(kind);
        mass_in.add_assign(counts);
        let Some(share) = share else { continue };
        if share.fallback {
            log::warn!(
                "zone {} has no {:?} land use; spreading {} by zone area",
                zone.id,
                kind.land_use(),
                kind.as_str()
            );
            diagnostics.push(Diagnostic::FallbackToZoneArea {
                zone: zone.id.clone(),
                kind,
            });
        }
        let mut placed = 0.0;
        for (cell, w) in share.cells {
            let frac = w / share.denom;
            placed += frac;
            let entry = cells.entry(cell).or_insert_with(HourlyCounts::zero);
            for t in 0..HOURS {
                let v = counts.0[t] * frac;
                entry.0[t] += v;
                mass_out.0[t] += v;
            }
        }
        let lost = counts.daily_total() * (1.0 - placed);
        if lost > 1e-6 * counts.daily_total() {
            diagnostics.push(Diagnostic::UncoveredMass {
                zone: zone.id.clone(),
                kind,
                lost,
            });
        }
    }
    Ok(Interpolated {
        kind,
        cells,
        mass_in,
        mass_out,
        diagnostics,
    })
}

/// Worker and job counts per cell with activity flags.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCounts {
    pub grid: Grid,
    pub workers: BTreeMap<CellId, HourlyCounts>,
    pub jobs: BTreeMap<CellId, HourlyCounts>,
    active_residential: BTreeSet<CellId>,
    active_employment: BTreeSet<CellId>,
}

impl CellCounts {
    /// Builds counts and derives the activity flags.
    pub fn new(
        grid: Grid,
        workers: BTreeMap<CellId, HourlyCounts>,
        jobs: BTreeMap<CellId, HourlyCounts>,
    ) -> Self {
        filter_active_cells(Self {
            grid,
            workers,
            jobs,
            active_residential: BTreeSet::new(),
            active_employment: BTreeSet::new(),
        })
    }

    pub fn is_active_residential(&self, cell: CellId) -> bool {
        self.active_residential.contains(&cell)
    }

    pub fn is_active_employment(&self, cell: CellId) -> bool {
        self.active_employment.contains(&cell)
    }

    /// Active residential cells in ascending id order.
    pub fn residential_cells(&self) -> Vec<CellId> {
        self.active_residential.iter().copied().collect()
    }

    pub fn employment_cells(&self) -> Vec<CellId> {
        self.active_employment.iter().copied().collect()
    }

    pub fn workers_at(&self, cell: CellId) -> HourlyCounts {
        self.workers.get(&cell).copied().unwrap_or_default()
    }

    pub fn jobs_at(&self, cell: CellId) -> HourlyCounts {
        self.jobs.get(&cell).copied().unwrap_or_default()
    }

    /// Union of active residential and employment cells.
    pub fn active_cells(&self) -> Vec<CellId> {
        self.active_residential
            .union(&self.active_employment)
            .copied()
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DasymetricError> {
        let csv_err = |source| DasymetricError::Csv {
            path: path.display().to_string(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["cell_col", "cell_row", "kind", "hour", "count"])
            .map_err(csv_err)?;
        for (kind, map) in [(CountKind::Workers, &self.workers), (CountKind::Jobs, &self.jobs)] {
            for (&cell, h) in map {
                let (col, row) = (cell % self.grid.nx, cell / self.grid.nx);
                for (hour, v) in h.0.iter().enumerate() {
                    w.write_record([
                        col.to_string(),
                        row.to_string(),
                        kind.as_str().to_string(),
                        hour.to_string(),
                        v.to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, grid: Grid) -> Result<Self, DasymetricError> {
        #[derive(Deserialize)]
        struct Row {
            cell_col: u32,
            cell_row: u32,
            kind: CountKind,
            hour: usize,
            count: f64,
        }
        let p = path.display().to_string();
        let mut reader = csv::Reader::from_path(path).map_err(|source| DasymetricError::Csv {
            path: p.clone(),
            source,
        })?;
        let mut workers = BTreeMap::new();
        let mut jobs = BTreeMap::new();
        for row in reader.deserialize::<Row>() {
            let row = row.map_err(|source| DasymetricError::Csv {
                path: p.clone(),
                source,
            })?;
            let cell = grid
                .cell_id(row.cell_col, row.cell_row)
                .map_err(|e| DasymetricError::Format {
                    path: p.clone(),
                    message: e.to_string(),
                })?;
            if row.hour >= HOURS {
                return Err(DasymetricError::Format {
                    path: p,
                    message: format!("hour {} out of range", row.hour),
                });
            }
            let map = match row.kind {
                CountKind::Workers => &mut workers,
                CountKind::Jobs => &mut jobs,
            };
            map.entry(cell).or_insert_with(HourlyCounts::zero).0[row.hour] = row.count;
        }
        Ok(Self::new(grid, workers, jobs))
    }
}

/// Marks cells with a daily total above [`ACTIVITY_THRESHOLD`] as active.
pub fn filter_active_cells(mut cc: CellCounts) -> CellCounts {
    let active = |m: &BTreeMap<CellId, HourlyCounts>| -> BTreeSet<CellId> {
        m.iter()
            .filter(|(_, h)| h.daily_total() > ACTIVITY_THRESHOLD)
            .map(|(&c, _)| c)
            .collect()
    };
    cc.active_residential = active(&cc.workers);
    cc.active_employment = active(&cc.jobs);
    cc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindTotals {
    pub workers: f64,
    pub jobs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DasymetricSummary {
    pub zones_in: usize,
    pub cells_active_residential: usize,
    pub cells_active_employment: usize,
    pub mass_in: KindTotals,
    pub mass_out: KindTotals,
    pub diagnostics: Vec<Diagnostic>,
}

impl DasymetricSummary {
    pub fn new(zones_in: usize, cc: &CellCounts, workers: &Interpolated, jobs: &Interpolated) -> Self {
        Self {
            zones_in,
            cells_active_residential: cc.active_residential.len(),
            cells_active_employment: cc.active_employment.len(),
            mass_in: KindTotals {
                workers: workers.mass_in.daily_total(),
                jobs: jobs.mass_in.daily_total(),
            },
            mass_out: KindTotals {
                workers: workers.mass_out.daily_total(),
                jobs: jobs.mass_out.daily_total(),
            },
            diagnostics: workers
                .diagnostics
                .iter()
                .chain(&jobs.diagnostics)
                .cloned()
                .collect(),
        }
    }
}
